use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::early::EarlyStopping;
use crate::error::{Error, Result};
use crate::features::SupervisedSet;
use crate::models::{Forecaster, ModelKind};
use crate::nncore::{mse_loss, Adam, AdamConfig, Mode, Module, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Global L2 gradient-norm cap.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::for_model(ModelKind::Lstm)
    }
}

impl TrainConfig {
    pub fn for_model(kind: ModelKind) -> Self {
        TrainConfig {
            lr: match kind {
                ModelKind::Lstm => 1e-3,
                ModelKind::Kan => 5e-4,
            },
            weight_decay: 1e-5,
            max_epochs: 500,
            patience: 50,
            batch_size: 32,
            seed: 42,
            grad_clip: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidConfig(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("weight_decay must be non-negative".into()));
        }
        if self.max_epochs == 0 || self.patience == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("max_epochs, patience and batch_size must be positive".into()));
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return Err(Error::InvalidConfig("grad_clip must be positive".into()));
        }
        Ok(())
    }
}

/// Per-target standardization of the regression targets, fitted on the
/// observed training targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub mean: [f64; 4],
    pub std: [f64; 4],
}

impl TargetScaler {
    pub fn fit(set: &SupervisedSet) -> Result<Self> {
        let mut mean = [0.0; 4];
        let mut std = [1.0; 4];
        for k in 0..4 {
            let v: Vec<f64> = (0..set.len()).filter(|&r| set.target_mask[r][k]).map(|r| set.targets[r][k]).collect();
            if v.is_empty() {
                return Err(Error::NoObservedTargets(format!("updrs_{}", k + 1)));
            }
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
            mean[k] = m;
            if var > 0.0 {
                std[k] = var.sqrt();
            }
        }
        Ok(TargetScaler { mean, std })
    }

    pub fn scale(&self, k: usize, v: f64) -> f64 {
        (v - self.mean[k]) / self.std[k]
    }

    pub fn unscale(&self, k: usize, v: f64) -> f64 {
        v * self.std[k] + self.mean[k]
    }

    /// Standardized targets (zero where unobserved) and the loss mask.
    pub fn targets(&self, set: &SupervisedSet) -> (Tensor, Vec<bool>) {
        let mut t = Tensor::zeros(&[set.len(), 4]);
        let mut mask = Vec::with_capacity(set.len() * 4);
        for r in 0..set.len() {
            for k in 0..4 {
                let m = set.target_mask[r][k];
                mask.push(m);
                if m {
                    t.data[r * 4 + k] = self.scale(k, set.targets[r][k]);
                }
            }
        }
        (t, mask)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch of the returned snapshot.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl History {
    pub fn best_val_loss(&self) -> f64 {
        self.epochs[self.best_epoch - 1].val_loss
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.val_loss));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: Forecaster,
    pub scaler: TargetScaler,
    pub history: History,
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Contiguous batches of `size`; a trailing batch of one row joins the
/// previous batch, since batch norm needs two rows.
pub fn batch_bounds(n: usize, size: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..n).step_by(size.max(1)).map(|s| (s, (s + size).min(n))).collect();
    if out.len() > 1 && out.last().is_some_and(|&(s, e)| e - s == 1) {
        let (_, e) = out.pop().unwrap();
        out.last_mut().unwrap().1 = e;
    }
    out
}

fn gather(x: &Tensor, t: &Tensor, mask: &[bool], rows: &[usize]) -> Result<(Tensor, Tensor, Vec<bool>)> {
    let w = x.cols();
    let xb = Tensor::from_vec(&[rows.len(), w], rows.iter().flat_map(|&r| x.row(r).to_vec()).collect())?;
    let tb = Tensor::from_vec(&[rows.len(), 4], rows.iter().flat_map(|&r| t.row(r).to_vec()).collect())?;
    let mb = rows.iter().flat_map(|&r| mask[r * 4..r * 4 + 4].to_vec()).collect();
    Ok((xb, tb, mb))
}

fn clip(model: &mut Forecaster, cap: f64) {
    let mut sq = 0.0;
    model.visit("", &mut |_, p| {
        if p.trainable {
            sq += p.grad.data.iter().map(|g| g * g).sum::<f64>();
        }
    });
    let norm = sq.sqrt();
    if norm > cap {
        let s = cap / norm;
        model.visit_mut("", &mut |_, p| {
            if p.trainable {
                p.grad.data.iter_mut().for_each(|g| *g *= s);
            }
        });
    }
}

/// Masked MSE of standardized targets over a whole set, in eval mode.
pub fn eval_loss(model: &Forecaster, x: &Tensor, t: &Tensor, mask: &[bool]) -> Result<f64> {
    Ok(mse_loss(&model.predict(x)?, t, mask)?.0)
}

/// Mini-batch Adam with early stopping on the validation loss.
pub fn train(mut model: Forecaster, train_set: &SupervisedSet, val_set: &SupervisedSet, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let scaler = TargetScaler::fit(train_set)?;
    let x = model.prepare_inputs(train_set)?;
    let (t, mask) = scaler.targets(train_set);
    let xv = model.prepare_inputs(val_set)?;
    let (tv, maskv) = scaler.targets(val_set);

    let mut adam = Adam::new(AdamConfig::new(cfg.lr, cfg.weight_decay));
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = model.clone();
    let mut epochs = Vec::new();
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);

        let (mut loss_sum, mut weight) = (0.0, 0usize);
        for (b, &(s, e)) in batch_bounds(order.len(), cfg.batch_size).iter().enumerate() {
            let (xb, tb, mb) = gather(&x, &t, &mask, &order[s..e])?;
            let observed = mb.iter().filter(|&&m| m).count();
            if observed == 0 {
                continue;
            }
            let mode = Mode::Train { seed: mix(cfg.seed, epoch as u64, b as u64) };
            let (y, cache) = model.forward(&xb, mode)?;
            let (loss, grad) = mse_loss(&y, &tb, &mb)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss(format!("training loss {loss} at epoch {epoch}, batch {b}")));
            }
            model.zero_grad();
            model.backward(&cache, &grad)?;
            if let Some(c) = cfg.grad_clip {
                clip(&mut model, c);
            }
            adam.step(&mut model)?;
            model.commit(&cache);
            loss_sum += loss * observed as f64;
            weight += observed;
        }
        let train_loss = if weight > 0 { loss_sum / weight as f64 } else { f64::NAN };
        let val_loss = eval_loss(&model, &xv, &tv, &maskv)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss(format!("validation loss {val_loss} at epoch {epoch}")));
        }
        epochs.push(EpochRecord { epoch, train_loss, val_loss });
        let (improved, stop) = stopper.observe(val_loss);
        if improved {
            best = model.clone();
        }
        if stop {
            stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }
    Ok(Trained {
        model: best,
        scaler,
        history: History { epochs, best_epoch: stopper.best_epoch, stopped_early },
    })
}
