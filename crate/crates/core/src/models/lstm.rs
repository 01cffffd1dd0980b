use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::summary::{Stage, Summary};
use crate::error::{Error, Result};
use crate::nncore::param::join;
use crate::nncore::{
    dropout, dropout_backward, Attention, AttentionCache, BatchNorm, BnCache, Linear, Lstm, LstmCache, Mode, Module,
    Param, Tensor,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmForecasterConfig {
    /// Features per time step.
    pub input_width: usize,
    /// Time steps per sample.
    pub seq_len: usize,
    pub hidden: usize,
    pub bidirectional: bool,
    pub attention_width: usize,
    pub head_widths: [usize; 3],
    pub output: usize,
    pub dropout: f64,
}

impl Default for LstmForecasterConfig {
    fn default() -> Self {
        LstmForecasterConfig {
            input_width: 23,
            seq_len: 2,
            hidden: 64,
            bidirectional: true,
            attention_width: 128,
            head_widths: [64, 32, 16],
            output: 4,
            dropout: 0.2,
        }
    }
}

impl LstmForecasterConfig {
    pub fn validate(&self) -> Result<()> {
        let dirs = if self.bidirectional { 2 } else { 1 };
        if self.input_width == 0 || self.seq_len == 0 || self.hidden == 0 || self.head_widths.contains(&0) {
            return Err(Error::InvalidConfig("lstm forecaster widths must be positive".into()));
        }
        if self.attention_width != self.hidden * dirs {
            return Err(Error::InvalidConfig(format!(
                "attention width {} must equal hidden × directions = {}",
                self.attention_width,
                self.hidden * dirs
            )));
        }
        if self.output != 4 {
            return Err(Error::InvalidConfig(format!("output must be 4, got {}", self.output)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidRate(self.dropout));
        }
        Ok(())
    }
}

/// (Bi)LSTM → dropout → attention pooling → FC → ReLU → FC → BN → ReLU →
/// FC → BN → ReLU → FC.
///
/// In training mode the two linear layers feeding a batch norm skip their
/// bias: the batch mean removes it anyway, and leaving it out keeps its
/// gradient exactly zero. Eval mode applies it and the running mean carries
/// it (see [`BatchNorm::commit`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmForecaster {
    pub config: LstmForecasterConfig,
    pub lstm: Lstm,
    pub attention: Attention,
    pub fc1: Linear,
    pub fc2: Linear,
    pub bn1: BatchNorm,
    pub fc3: Linear,
    pub bn2: BatchNorm,
    pub fc4: Linear,
}

#[derive(Debug, Clone)]
pub struct LstmForecastCache {
    lstm: LstmCache,
    mask: Option<Vec<f64>>,
    attention: AttentionCache,
    ctx: Tensor,
    z1: Tensor,
    a1: Tensor,
    bn1: Option<BnCache>,
    z2: Tensor,
    a2: Tensor,
    bn2: Option<BnCache>,
    z3: Tensor,
    a3: Tensor,
}

fn relu(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data.iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

fn relu_backward(z: &Tensor, dy: &Tensor) -> Tensor {
    let mut dx = dy.clone();
    dx.data.iter_mut().zip(&z.data).for_each(|(d, &v)| {
        if v <= 0.0 {
            *d = 0.0
        }
    });
    dx
}

impl LstmForecaster {
    pub fn new(config: LstmForecasterConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [h1, h2, h3] = config.head_widths;
        let lstm = Lstm::new(config.input_width, config.hidden, config.bidirectional, &mut rng);
        let attention = Attention::new(config.attention_width, &mut rng);
        let fc1 = Linear::new(config.attention_width, h1, &mut rng);
        let fc2 = Linear::new(h1, h2, &mut rng);
        let fc3 = Linear::new(h2, h3, &mut rng);
        let fc4 = Linear::new(h3, config.output, &mut rng);
        Ok(LstmForecaster {
            lstm,
            attention,
            fc1,
            fc2,
            bn1: BatchNorm::new(h2),
            fc3,
            bn2: BatchNorm::new(h3),
            fc4,
            config,
        })
    }

    pub fn input_width(&self) -> usize {
        self.config.seq_len * self.config.input_width
    }

    /// `x: [B, seq_len·input_width]`, time-major within each row.
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, LstmForecastCache)> {
        if x.shape.len() != 2 || x.cols() != self.input_width() {
            return Err(Error::ShapeMismatch(format!(
                "lstm forecaster expects {} inputs per row, got shape {:?}",
                self.input_width(),
                x.shape
            )));
        }
        let c = &self.config;
        let seq = Tensor::from_vec(&[x.rows(), c.seq_len, c.input_width], x.data.clone())?;
        let (h, lstm) = self.lstm.forward(&seq)?;
        let (h, mask) = dropout(&h, c.dropout, mode, 0)?;
        let (ctx, attention) = self.attention.forward(&h)?;
        let z1 = self.fc1.forward(&ctx)?;
        let a1 = relu(&z1);
        let train = matches!(mode, Mode::Train { .. });
        let (z2, bn1) = if train {
            let (y, cache) = self.bn1.forward_train(&self.fc2.forward_no_bias(&a1)?)?;
            (y, Some(cache))
        } else {
            (self.bn1.forward_eval(&self.fc2.forward(&a1)?)?, None)
        };
        let a2 = relu(&z2);
        let (z3, bn2) = if train {
            let (y, cache) = self.bn2.forward_train(&self.fc3.forward_no_bias(&a2)?)?;
            (y, Some(cache))
        } else {
            (self.bn2.forward_eval(&self.fc3.forward(&a2)?)?, None)
        };
        let a3 = relu(&z3);
        let out = self.fc4.forward(&a3)?;
        Ok((out, LstmForecastCache { lstm, mask, attention, ctx, z1, a1, bn1, z2, a2, bn2, z3, a3 }))
    }

    /// Accumulates parameter gradients. Needs a training-mode cache.
    pub fn backward(&mut self, cache: &LstmForecastCache, dy: &Tensor) -> Result<Tensor> {
        let (Some(bn1), Some(bn2)) = (&cache.bn1, &cache.bn2) else {
            return Err(Error::InvalidConfig("backward needs a training-mode forward".into()));
        };
        let g = self.fc4.backward(&cache.a3, dy);
        let g = relu_backward(&cache.z3, &g);
        let g = self.bn2.backward(bn2, &g);
        let g = self.fc3.backward_no_bias(&cache.a2, &g);
        let g = relu_backward(&cache.z2, &g);
        let g = self.bn1.backward(bn1, &g);
        let g = self.fc2.backward_no_bias(&cache.a1, &g);
        let g = relu_backward(&cache.z1, &g);
        let g = self.fc1.backward(&cache.ctx, &g);
        let g = self.attention.backward(&cache.attention, &g);
        let g = dropout_backward(&g, &cache.mask);
        let dx = self.lstm.backward(&cache.lstm, &g);
        let rows = dx.shape[0];
        Tensor::from_vec(&[rows, self.input_width()], dx.data)
    }

    /// Folds the batch statistics of a training pass into the running
    /// estimates.
    pub fn commit(&mut self, cache: &LstmForecastCache) {
        if let Some(c) = &cache.bn1 {
            self.bn1.commit(c, Some(&self.fc2.bias.value.data));
        }
        if let Some(c) = &cache.bn2 {
            self.bn2.commit(c, Some(&self.fc3.bias.value.data));
        }
    }

    /// Sign pattern of every ReLU input in a pass.
    pub fn relu_pattern(&self, cache: &LstmForecastCache) -> Vec<bool> {
        [&cache.z1, &cache.z2, &cache.z3].iter().flat_map(|z| z.data.iter().map(|&v| v > 0.0)).collect()
    }

    pub fn summary(&self) -> Summary {
        let c = &self.config;
        let [h1, h2, h3] = c.head_widths;
        Summary::new(vec![
            Stage::of(if c.bidirectional { "BiLSTM" } else { "LSTM" }, c.attention_width, &self.lstm),
            Stage::new("Dropout", c.attention_width, 0),
            Stage::of("Attention", c.attention_width, &self.attention),
            Stage::of("FC", h1, &self.fc1),
            Stage::of("FC", h2, &self.fc2),
            Stage::of("BatchNorm", h2, &self.bn1),
            Stage::of("FC", h3, &self.fc3),
            Stage::of("BatchNorm", h3, &self.bn2),
            Stage::of("FC", c.output, &self.fc4),
        ])
    }
}

impl Module for LstmForecaster {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.lstm.visit(&join(prefix, "lstm"), f);
        self.attention.visit(&join(prefix, "attention"), f);
        self.fc1.visit(&join(prefix, "fc1"), f);
        self.fc2.visit(&join(prefix, "fc2"), f);
        self.bn1.visit(&join(prefix, "bn1"), f);
        self.fc3.visit(&join(prefix, "fc3"), f);
        self.bn2.visit(&join(prefix, "bn2"), f);
        self.fc4.visit(&join(prefix, "fc4"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.lstm.visit_mut(&join(prefix, "lstm"), f);
        self.attention.visit_mut(&join(prefix, "attention"), f);
        self.fc1.visit_mut(&join(prefix, "fc1"), f);
        self.fc2.visit_mut(&join(prefix, "fc2"), f);
        self.bn1.visit_mut(&join(prefix, "bn1"), f);
        self.fc3.visit_mut(&join(prefix, "fc3"), f);
        self.bn2.visit_mut(&join(prefix, "bn2"), f);
        self.fc4.visit_mut(&join(prefix, "fc4"), f);
    }
}
