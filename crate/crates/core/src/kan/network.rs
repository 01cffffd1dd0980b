use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bspline::BSplineConfig;
use super::layer::{KanLayer, KanLayerCache};
use crate::error::{Error, Result};
use crate::nncore::param::join;
use crate::nncore::{dropout, dropout_backward, Linear, Mode, Module, Param, Tensor};

pub const KAN_OUTPUTS: usize = 4;

/// Knot distance below which a gradient check instance is skipped; see
/// [`KanNetwork::knot_margin`].
pub const KNOT_MARGIN: f64 = 0.05;

/// KAN layers between consecutive widths, dropout after each, then a linear
/// head to the four targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KanNetwork {
    pub layers: Vec<KanLayer>,
    pub head: Linear,
    pub dropout: f64,
}

#[derive(Debug, Clone)]
pub struct KanCache {
    layers: Vec<KanLayerCache>,
    masks: Vec<Option<Vec<f64>>>,
    head_input: Tensor,
}

/// `widths = [27]` alone is a bare linear head.
pub fn build_kan(widths: &[usize], config: BSplineConfig, dropout: f64, seed: u64) -> Result<KanNetwork> {
    if widths.is_empty() || widths.contains(&0) {
        return Err(Error::InvalidWidths(format!("{widths:?}")));
    }
    if !(0.0..1.0).contains(&dropout) {
        return Err(Error::InvalidRate(dropout));
    }
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = widths
        .windows(2)
        .map(|w| KanLayer::new(w[0], w[1], config, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let head = Linear::new(*widths.last().unwrap(), KAN_OUTPUTS, &mut rng);
    Ok(KanNetwork { layers, head, dropout })
}

/// `Σ in·out·(G + k + 2)` over KAN layers plus `last·4 + 4` for the head.
pub fn kan_param_count(widths: &[usize], config: &BSplineConfig) -> usize {
    let body: usize = widths.windows(2).map(|w| KanLayer::param_count_formula(w[0], w[1], config)).sum();
    body + widths.last().map_or(0, |&w| w * KAN_OUTPUTS + KAN_OUTPUTS)
}

impl KanNetwork {
    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(self.head.in_dim(), |l| l.in_dim)
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_width()];
        w.extend(self.layers.iter().map(|l| l.out_dim));
        w
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, KanCache)> {
        if x.cols() != self.input_width() {
            return Err(Error::ShapeMismatch(format!(
                "kan network expects {} inputs, got {}",
                self.input_width(),
                x.cols()
            )));
        }
        let mut h = x.clone();
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(self.layers.len());
        for (site, layer) in self.layers.iter().enumerate() {
            let (y, c) = layer.forward(&h)?;
            let (y, m) = dropout(&y, self.dropout, mode, site as u64)?;
            layers.push(c);
            masks.push(m);
            h = y;
        }
        let out = self.head.forward(&h)?;
        Ok((out, KanCache { layers, masks, head_input: h }))
    }

    /// Smallest knot distance over every spline input of a pass. Central
    /// differences cannot resolve the gradient of a coefficient whose basis
    /// value is within round-off of zero, which happens when an input sits
    /// almost on a knot; gradient checks skip such instances.
    pub fn knot_margin(&self, cache: &KanCache) -> f64 {
        self.layers.iter().zip(&cache.layers).map(|(l, c)| l.knot_margin(c)).fold(f64::INFINITY, f64::min)
    }

    /// Accumulates gradients for every parameter and returns `∂L/∂x`.
    pub fn backward(&mut self, cache: &KanCache, dy: &Tensor) -> Tensor {
        let mut g = self.head.backward(&cache.head_input, dy);
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            g = dropout_backward(&g, &cache.masks[i]);
            g = layer.backward(&cache.layers[i], &g);
        }
        g
    }
}

impl Module for KanNetwork {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&join(prefix, &format!("kan{i}")), f);
        }
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("kan{i}")), f);
        }
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}
