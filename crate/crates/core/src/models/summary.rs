use std::fmt::Write as _;

use serde::Serialize;

use crate::nncore::Module;

/// One row of a model summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Stage {
    pub name: String,
    /// Output width of the stage.
    pub width: usize,
    pub params: usize,
}

impl Stage {
    pub fn new(name: &str, width: usize, params: usize) -> Self {
        Stage { name: name.to_string(), width, params }
    }

    pub fn of<M: Module + ?Sized>(name: &str, width: usize, module: &M) -> Self {
        Stage::new(name, width, module.param_count())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub stages: Vec<Stage>,
    pub total: usize,
}

impl Summary {
    pub fn new(stages: Vec<Stage>) -> Self {
        let total = stages.iter().map(|s| s.params).sum();
        Summary { stages, total }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,width,params\n");
        for s in &self.stages {
            let _ = writeln!(out, "{},{},{}", s.name, s.width, s.params);
        }
        let _ = writeln!(out, "Total,,{}", self.total);
        out
    }

    pub fn to_text(&self) -> String {
        let name_w = self.stages.iter().map(|s| s.name.len()).max().unwrap_or(0).max(5);
        let mut out = format!("{:<name_w$}  {:>6}  {:>10}\n", "Stage", "Width", "Params");
        for s in &self.stages {
            let _ = writeln!(out, "{:<name_w$}  {:>6}  {:>10}", s.name, s.width, s.params);
        }
        let _ = writeln!(out, "{:<name_w$}  {:>6}  {:>10}", "Total", "", self.total);
        out
    }
}
