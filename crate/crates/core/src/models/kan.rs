use serde::{Deserialize, Serialize};

use super::summary::{Stage, Summary};
use crate::error::{Error, Result};
use crate::kan::{build_kan, BSplineConfig, KanCache, KanNetwork};
use crate::nncore::{Mode, Module, Param, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KanForecasterConfig {
    pub widths: Vec<usize>,
    pub grid_size: usize,
    pub spline_order: usize,
    pub grid_min: f64,
    pub grid_max: f64,
    pub output: usize,
    pub dropout: f64,
}

impl Default for KanForecasterConfig {
    fn default() -> Self {
        KanForecasterConfig {
            widths: vec![27, 45, 91, 183],
            grid_size: 10,
            spline_order: 3,
            grid_min: -3.0,
            grid_max: 3.0,
            output: 4,
            dropout: 0.2,
        }
    }
}

impl KanForecasterConfig {
    pub fn spline(&self) -> BSplineConfig {
        BSplineConfig {
            grid_size: self.grid_size,
            spline_order: self.spline_order,
            grid_min: self.grid_min,
            grid_max: self.grid_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.output != 4 {
            return Err(Error::InvalidConfig(format!("output must be 4, got {}", self.output)));
        }
        self.spline().validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KanForecaster {
    pub config: KanForecasterConfig,
    pub net: KanNetwork,
}

impl KanForecaster {
    pub fn new(config: KanForecasterConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let net = build_kan(&config.widths, config.spline(), config.dropout, seed)?;
        Ok(KanForecaster { config, net })
    }

    pub fn input_width(&self) -> usize {
        self.net.input_width()
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, KanCache)> {
        self.net.forward(x, mode)
    }

    pub fn backward(&mut self, cache: &KanCache, dy: &Tensor) -> Tensor {
        self.net.backward(cache, dy)
    }

    pub fn summary(&self) -> Summary {
        let mut stages: Vec<Stage> = self
            .net
            .layers
            .iter()
            .map(|l| Stage::of(&format!("KAN {}->{}", l.in_dim, l.out_dim), l.out_dim, l))
            .collect();
        stages.push(Stage::of("Output", self.config.output, &self.net.head));
        Summary::new(stages)
    }
}

impl Module for KanForecaster {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.net.visit(prefix, f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.net.visit_mut(prefix, f);
    }
}
