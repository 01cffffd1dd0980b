//! Flat binary parameter checkpoints.
//!
//! Layout, all integers `u64` little-endian:
//!
//! ```text
//! magic "UPDRSCK1" | version | manifest length | manifest JSON bytes
//! tensor count | per tensor: name length, name bytes, rank, dims...
//! raw f64 LE data of every tensor, in table order
//! ```
//!
//! The manifest is free-form JSON describing how to rebuild the model.

use std::path::Path;

use super::{Module, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"UPDRSCK1";
pub const CHECKPOINT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub manifest: String,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    /// Snapshot of every slot of `model`, buffers included.
    pub fn from_module<M: Module + ?Sized>(manifest: String, model: &M) -> Self {
        let mut tensors = Vec::new();
        model.visit("", &mut |n, p| tensors.push((n.to_string(), p.value.clone())));
        Checkpoint { manifest, tensors }
    }

    /// Copies tensors into a model built with the same architecture.
    pub fn load_into<M: Module + ?Sized>(&self, model: &mut M) -> Result<()> {
        let slots = model.slots();
        if slots.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "model has {} tensors, checkpoint has {}",
                slots.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape, _), (cname, t)) in slots.iter().zip(&self.tensors) {
            if name != cname || *shape != t.shape {
                return Err(Error::Checkpoint(format!(
                    "tensor `{cname}` {:?} does not match model slot `{name}` {shape:?}",
                    t.shape
                )));
            }
        }
        let mut k = 0;
        model.visit_mut("", &mut |_, p| {
            p.value.data.copy_from_slice(&self.tensors[k].1.data);
            k += 1;
        });
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let u = |out: &mut Vec<u8>, v: u64| out.extend_from_slice(&v.to_le_bytes());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        u(&mut out, CHECKPOINT_VERSION);
        u(&mut out, self.manifest.len() as u64);
        out.extend_from_slice(self.manifest.as_bytes());
        u(&mut out, self.tensors.len() as u64);
        for (name, t) in &self.tensors {
            u(&mut out, name.len() as u64);
            out.extend_from_slice(name.as_bytes());
            u(&mut out, t.shape.len() as u64);
            for &d in &t.shape {
                u(&mut out, d as u64);
            }
        }
        for (_, t) in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u64()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let n = r.len()?;
        let manifest = String::from_utf8(r.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("manifest is not UTF-8".into()))?;
        let count = r.len()?;
        let mut table = Vec::new();
        for _ in 0..count {
            let n = r.len()?;
            let name = String::from_utf8(r.take(n)?.to_vec())
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
            let rank = r.len()?;
            let shape = (0..rank).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
            table.push((name, shape));
        }
        let mut tensors = Vec::with_capacity(count);
        for (name, shape) in table {
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            tensors.push((name, Tensor { shape, data }));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Checkpoint { manifest, tensors })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("length overflow".into()))
    }
}
