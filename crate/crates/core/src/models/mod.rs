//! The two forecasters behind one model type.

mod kan;
mod lstm;
mod summary;

use serde::{Deserialize, Serialize};

pub use self::kan::{KanForecaster, KanForecasterConfig};
pub use self::lstm::{LstmForecastCache, LstmForecaster, LstmForecasterConfig};
pub use self::summary::{Stage, Summary};
use crate::error::{Error, Result};
use crate::features::{FeatureLayout, SupervisedSet};
use crate::kan::KanCache;
use crate::nncore::{Checkpoint, Mode, Module, Param, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lstm,
    Kan,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lstm => "lstm",
            ModelKind::Kan => "kan",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelConfig {
    Lstm(LstmForecasterConfig),
    Kan(KanForecasterConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Forecaster {
    Lstm(LstmForecaster),
    Kan(KanForecaster),
}

#[derive(Debug, Clone)]
pub enum ForecastCache {
    Lstm(LstmForecastCache),
    Kan(KanCache),
}

impl Forecaster {
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        Ok(match config {
            ModelConfig::Lstm(c) => Forecaster::Lstm(LstmForecaster::new(c.clone(), seed)?),
            ModelConfig::Kan(c) => Forecaster::Kan(KanForecaster::new(c.clone(), seed)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Forecaster::Lstm(_) => ModelKind::Lstm,
            Forecaster::Kan(_) => ModelKind::Kan,
        }
    }

    pub fn config(&self) -> ModelConfig {
        match self {
            Forecaster::Lstm(m) => ModelConfig::Lstm(m.config.clone()),
            Forecaster::Kan(m) => ModelConfig::Kan(m.config.clone()),
        }
    }

    /// Row width expected by [`Forecaster::forward`].
    pub fn input_width(&self) -> usize {
        match self {
            Forecaster::Lstm(m) => m.input_width(),
            Forecaster::Kan(m) => m.input_width(),
        }
    }

    /// Model inputs for every row of `set`: the flat feature vector for the
    /// KAN, the oldest-first lag sequence for the LSTM.
    pub fn prepare_inputs(&self, set: &SupervisedSet) -> Result<Tensor> {
        self.prepare_rows(&set.inputs, set.len(), set.layout)
    }

    /// As [`Forecaster::prepare_inputs`] for `rows` flat feature rows laid
    /// out as `layout`.
    pub fn prepare_rows(&self, inputs: &[f64], rows: usize, layout: FeatureLayout) -> Result<Tensor> {
        let n = layout.n_features();
        if inputs.len() != rows * n {
            return Err(Error::ShapeMismatch(format!("{} values do not form {rows} rows of {n}", inputs.len())));
        }
        let data = match self {
            Forecaster::Kan(_) => inputs.to_vec(),
            Forecaster::Lstm(m) => {
                if layout.lag_depth != m.config.seq_len || layout.step_width() != m.config.input_width {
                    return Err(Error::ShapeMismatch(format!(
                        "lstm expects {} steps of {}, data has {} of {}",
                        m.config.seq_len,
                        m.config.input_width,
                        layout.lag_depth,
                        layout.step_width()
                    )));
                }
                inputs.chunks(n).flat_map(|row| layout.to_sequence(row)).collect()
            }
        };
        let width = if rows == 0 { self.input_width() } else { data.len() / rows };
        if width != self.input_width() {
            return Err(Error::ShapeMismatch(format!("model expects {} inputs, data has {width}", self.input_width())));
        }
        Tensor::from_vec(&[rows, width], data)
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, ForecastCache)> {
        match self {
            Forecaster::Lstm(m) => m.forward(x, mode).map(|(y, c)| (y, ForecastCache::Lstm(c))),
            Forecaster::Kan(m) => m.forward(x, mode).map(|(y, c)| (y, ForecastCache::Kan(c))),
        }
    }

    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(x, Mode::Eval)?.0)
    }

    /// Accumulates parameter gradients and returns `∂L/∂x`.
    pub fn backward(&mut self, cache: &ForecastCache, dy: &Tensor) -> Result<Tensor> {
        match (self, cache) {
            (Forecaster::Lstm(m), ForecastCache::Lstm(c)) => m.backward(c, dy),
            (Forecaster::Kan(m), ForecastCache::Kan(c)) => Ok(m.backward(c, dy)),
            _ => Err(Error::InvalidConfig("cache belongs to a different model".into())),
        }
    }

    /// Updates running statistics after a training step.
    pub fn commit(&mut self, cache: &ForecastCache) {
        if let (Forecaster::Lstm(m), ForecastCache::Lstm(c)) = (self, cache) {
            m.commit(c);
        }
    }

    pub fn summary(&self) -> Summary {
        match self {
            Forecaster::Lstm(m) => m.summary(),
            Forecaster::Kan(m) => m.summary(),
        }
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Ok(Checkpoint::from_module(serde_json::to_string(&self.config())?, self))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config: ModelConfig = serde_json::from_str(&ck.manifest)?;
        let mut model = Forecaster::build(&config, 0)?;
        ck.load_into(&mut model)?;
        Ok(model)
    }
}

impl Module for Forecaster {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        match self {
            Forecaster::Lstm(m) => m.visit(prefix, f),
            Forecaster::Kan(m) => m.visit(prefix, f),
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        match self {
            Forecaster::Lstm(m) => m.visit_mut(prefix, f),
            Forecaster::Kan(m) => m.visit_mut(prefix, f),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SynthConfig};
    use crate::features::{build_supervised, LagConfig};
    use crate::nncore::random_tensor;
    use crate::preprocess::{FeatureMatrix, FittedPreprocessor, MergeOptions, PreprocessConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kan_default_shape_and_total() {
        let m = Forecaster::build(&ModelConfig::Kan(KanForecasterConfig::default()), 0).unwrap();
        assert_eq!(m.input_width(), 27);
        let s = m.summary();
        assert_eq!(s.total, 330_181);
        assert_eq!(s.total, m.param_count());
        assert_eq!(s.stages.len(), 4);
        assert_eq!(s.stages[3].params, 736);
        // within 15% of the published 374,107
        assert!((s.total as f64 - 374_107.0).abs() / 374_107.0 < 0.15);
        let x = random_tensor(&[3, 27], &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(m.predict(&x).unwrap().shape, vec![3, 4]);
    }

    #[test]
    fn lstm_total_near_published() {
        let cfg = LstmForecasterConfig { input_width: 415, ..Default::default() };
        let m = Forecaster::build(&ModelConfig::Lstm(cfg), 0).unwrap();
        assert!((m.summary().total as f64 - 271_861.0).abs() / 271_861.0 < 0.01);
    }

    #[test]
    fn same_seed_same_model() {
        for cfg in [ModelConfig::Kan(KanForecasterConfig::default()), ModelConfig::Lstm(LstmForecasterConfig::default())] {
            assert_eq!(Forecaster::build(&cfg, 3).unwrap(), Forecaster::build(&cfg, 3).unwrap());
            assert_ne!(Forecaster::build(&cfg, 3).unwrap(), Forecaster::build(&cfg, 4).unwrap());
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let cfg = ModelConfig::Lstm(LstmForecasterConfig { hidden: 4, attention_width: 8, ..Default::default() });
        let mut m = Forecaster::build(&cfg, 1).unwrap();
        m.visit_mut("", &mut |_, p| p.value.data.iter_mut().for_each(|v| *v += 0.01));
        let bytes = m.to_checkpoint().unwrap().to_bytes();
        let back = Forecaster::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn inputs_follow_the_model() {
        let cohort = generate_synthetic(&SynthConfig { n_patients: 30, ..Default::default() }).unwrap();
        let matrix = FeatureMatrix::from_cohort(&cohort, MergeOptions::modelling());
        let prep = FittedPreprocessor::fit(&matrix, &PreprocessConfig::default()).unwrap();
        let set = build_supervised(&cohort, &prep, &LagConfig::default()).unwrap();
        let kan = Forecaster::build(&ModelConfig::Kan(KanForecasterConfig::default()), 0).unwrap();
        let xk = kan.prepare_inputs(&set).unwrap();
        assert_eq!(xk.shape, vec![set.len(), 27]);
        assert_eq!(xk.row(0), set.input_row(0));

        let lstm = Forecaster::build(&ModelConfig::Lstm(LstmForecasterConfig::default()), 0).unwrap();
        let xl = lstm.prepare_inputs(&set).unwrap();
        assert_eq!(xl.shape, vec![set.len(), 46]);
        let row = set.input_row(0);
        // step 0 is lag 1, step 1 is lag 0, each followed by the static block
        assert_eq!(&xl.row(0)[..4], &row[4..8]);
        assert_eq!(&xl.row(0)[4..23], &row[8..]);
        assert_eq!(&xl.row(0)[23..27], &row[..4]);
        assert_eq!(lstm.predict(&xl).unwrap().shape, vec![set.len(), 4]);

        let wide = Forecaster::build(&ModelConfig::Lstm(LstmForecasterConfig { input_width: 10, ..Default::default() }), 0).unwrap();
        assert!(matches!(wide.prepare_inputs(&set), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn config_json_is_tagged() {
        let j = serde_json::to_string(&ModelConfig::Kan(KanForecasterConfig::default())).unwrap();
        assert!(j.starts_with(r#"{"kind":"kan""#));
        let back: ModelConfig = serde_json::from_str(&j).unwrap();
        assert_eq!(back, ModelConfig::Kan(KanForecasterConfig::default()));
    }
}
