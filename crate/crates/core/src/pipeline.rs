//! End-to-end runs: cohort → preprocessing → supervised pairs → training →
//! evaluation, plus the analysis and benchmark artifacts written by the CLI.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{generate_synthetic, load_cohort, Cohort, CohortPaths, SynthConfig, UPDRS_NAMES};
use crate::error::{Error, Result};
use crate::features::{
    build_supervised_with, correlation_matrix, default_grid, enumerate_pairs, kde, FeatureLayout, split_patients, top_peptides, LagConfig, SupervisedSet,
};
use crate::models::{Forecaster, KanForecasterConfig, LstmForecasterConfig, ModelConfig, ModelKind, Summary};
use crate::nncore::Checkpoint;
use crate::preprocess::{FeatureMatrix, FittedPreprocessor, MergeOptions, PreprocessConfig, VISIT_MONTH_COLUMN};
use crate::traineval::{evaluate, mean_baseline, train, EvalReport, TargetScaler, TrainConfig, Trained};

/// Everything a command needs. `seed` drives data generation, the patient
/// split, weight initialization, shuffling and dropout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Directory holding the four cohort CSVs; a synthetic cohort is generated
    /// in memory when unset.
    pub data_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub model: ModelKind,
    pub validation_fraction: f64,
    pub synth: SynthConfig,
    pub lag: LagConfig,
    pub preprocess: PreprocessConfig,
    /// Input widths are taken from the feature layout at run time.
    pub lstm: LstmForecasterConfig,
    pub kan: KanForecasterConfig,
    pub lstm_train: TrainConfig,
    pub kan_train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: None,
            out_dir: PathBuf::from("out"),
            seed: 42,
            model: ModelKind::Kan,
            validation_fraction: 0.2,
            synth: SynthConfig::default(),
            lag: LagConfig::default(),
            preprocess: PreprocessConfig::default(),
            lstm: LstmForecasterConfig::default(),
            kan: KanForecasterConfig::default(),
            lstm_train: TrainConfig::for_model(ModelKind::Lstm),
            kan_train: TrainConfig::for_model(ModelKind::Kan),
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Copies `seed` into every nested config that carries one.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        out.synth.seed = self.seed;
        out.lstm_train.seed = self.seed;
        out.kan_train.seed = self.seed;
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.lag.validate()?;
        self.lstm_train.validate()?;
        self.kan_train.validate()?;
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "validation_fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }

    pub fn train_config(&self, kind: ModelKind) -> TrainConfig {
        let mut c = match kind {
            ModelKind::Lstm => self.lstm_train.clone(),
            ModelKind::Kan => self.kan_train.clone(),
        };
        c.seed = self.seed;
        c
    }

    /// Writes the resolved config as `config.json` into `dir`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(&self.resolved())?)?;
        Ok(())
    }

    pub fn cohort(&self) -> Result<Cohort> {
        match &self.data_dir {
            Some(dir) => load_cohort(&CohortPaths::in_dir(dir)),
            None => generate_synthetic(&self.resolved().synth),
        }
    }
}

/// The cohort restricted to `patients`.
pub fn restrict_cohort(cohort: &Cohort, patients: &BTreeSet<i64>) -> Cohort {
    let keep = |id: &i64| patients.contains(id);
    Cohort {
        peptides: cohort.peptides.iter().filter(|r| keep(&r.patient_id)).cloned().collect(),
        proteins: cohort.proteins.iter().filter(|r| keep(&r.patient_id)).cloned().collect(),
        clinical: cohort.clinical.iter().filter(|r| keep(&r.patient_id)).cloned().collect(),
        supplemental: cohort.supplemental.iter().filter(|r| keep(&r.patient_id)).cloned().collect(),
    }
}

/// Data side of a run. Preprocessing and presence peptides are fitted on the
/// training patients only.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: SupervisedSet,
    pub val: SupervisedSet,
    pub preprocessor: FittedPreprocessor,
    pub peptides: Vec<String>,
}

pub fn prepare(cohort: &Cohort, run: &RunConfig) -> Result<Prepared> {
    run.lag.validate()?;
    let pairs = enumerate_pairs(cohort, run.lag.horizon_months);
    if pairs.is_empty() {
        return Err(Error::NoPairsProduced { horizon: run.lag.horizon_months });
    }
    let ids: BTreeSet<i64> = pairs.iter().map(|p| p.patient_id).collect();
    let (train_ids, val_ids) = split_patients(&ids, run.validation_fraction, run.seed)?;
    let train_cohort = restrict_cohort(cohort, &train_ids);
    let matrix = FeatureMatrix::from_cohort(&train_cohort, MergeOptions::modelling());
    let preprocessor = FittedPreprocessor::fit(&matrix, &run.preprocess)?;
    let peptides = top_peptides(&train_cohort, run.lag.n_peptide_slots());
    let set = build_supervised_with(cohort, &preprocessor, &run.lag, &peptides)?;
    Ok(Prepared {
        train: set.select_patients(&train_ids),
        val: set.select_patients(&val_ids),
        preprocessor,
        peptides,
    })
}

/// Model config for `kind` with its input widths matched to `set`.
pub fn model_config(run: &RunConfig, kind: ModelKind, set: &SupervisedSet) -> ModelConfig {
    match kind {
        ModelKind::Lstm => ModelConfig::Lstm(LstmForecasterConfig {
            input_width: set.layout.step_width(),
            seq_len: set.layout.lag_depth,
            ..run.lstm.clone()
        }),
        ModelKind::Kan => {
            let mut c = run.kan.clone();
            if let Some(w) = c.widths.first_mut() {
                *w = set.n_features;
            }
            ModelConfig::Kan(c)
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub trained: Trained,
    pub report: EvalReport,
    pub baseline: EvalReport,
    pub summary: Summary,
    pub train_seconds: f64,
}

pub fn fit_and_evaluate(prepared: &Prepared, run: &RunConfig, kind: ModelKind) -> Result<Outcome> {
    let model = Forecaster::build(&model_config(run, kind, &prepared.train), run.seed)?;
    let summary = model.summary();
    let start = Instant::now();
    let trained = train(model, &prepared.train, &prepared.val, &run.train_config(kind))?;
    let train_seconds = start.elapsed().as_secs_f64();
    let report = evaluate(&trained.model, &trained.scaler, &prepared.val)?;
    let baseline = mean_baseline(&trained.scaler, &prepared.val)?;
    Ok(Outcome { trained, report, baseline, summary, train_seconds })
}

/// What `evaluate` needs besides the weights to rebuild a run's inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub scaler: TargetScaler,
    pub layout: FeatureLayout,
    pub peptides: Vec<String>,
    pub lag: LagConfig,
    pub validation_fraction: f64,
    pub seed: u64,
    pub preprocessor: FittedPreprocessor,
}

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const BUNDLE_FILE: &str = "bundle.json";

impl Bundle {
    pub fn new(trained: &Trained, prepared: &Prepared, run: &RunConfig) -> Self {
        Bundle {
            scaler: trained.scaler,
            layout: prepared.train.layout,
            peptides: prepared.peptides.clone(),
            lag: run.lag.clone(),
            validation_fraction: run.validation_fraction,
            seed: run.seed,
            preprocessor: prepared.preprocessor.clone(),
        }
    }
}

/// Writes `model.ckpt` and `bundle.json` into `dir`.
pub fn save_model(dir: &Path, model: &Forecaster, bundle: &Bundle) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    model.to_checkpoint()?.write(&dir.join(CHECKPOINT_FILE))?;
    std::fs::write(dir.join(BUNDLE_FILE), serde_json::to_string_pretty(bundle)?)?;
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<(Forecaster, Bundle)> {
    let model = Forecaster::from_checkpoint(&Checkpoint::read(&dir.join(CHECKPOINT_FILE))?)?;
    let bundle: Bundle = serde_json::from_str(&std::fs::read_to_string(dir.join(BUNDLE_FILE))?)?;
    Ok((model, bundle))
}

/// Writes the model files plus history, metrics, baseline, predictions and
/// the parameter summary into `dir`.
pub fn write_outcome(dir: &Path, outcome: &Outcome, prepared: &Prepared, run: &RunConfig) -> Result<()> {
    save_model(dir, &outcome.trained.model, &Bundle::new(&outcome.trained, prepared, run))?;
    outcome.trained.history.write_csv(&dir.join("history.csv"))?;
    outcome.report.write(dir)?;
    std::fs::write(dir.join("baseline_metrics.csv"), outcome.baseline.to_csv())?;
    std::fs::write(dir.join("summary.csv"), outcome.summary.to_csv())?;
    Ok(())
}

/// Reloads a trained run from `dir` and scores it on the validation patients
/// of `cohort`, split as at training time.
pub fn evaluate_saved(dir: &Path, cohort: &Cohort) -> Result<EvalReport> {
    let (model, bundle) = load_model(dir)?;
    let set = build_supervised_with(cohort, &bundle.preprocessor, &bundle.lag, &bundle.peptides)?;
    let (_, val_ids) = split_patients(&set.patient_ids(), bundle.validation_fraction, bundle.seed)?;
    evaluate(&model, &bundle.scaler, &set.select_patients(&val_ids))
}

/// Targets on which `report` has a strictly lower MSE than `baseline`.
pub fn targets_beating(report: &EvalReport, baseline: &EvalReport) -> Vec<String> {
    report
        .per_target
        .iter()
        .zip(&baseline.per_target)
        .filter(|((_, m), (_, b))| m.mse < b.mse)
        .map(|((n, _), _)| n.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub model: ModelKind,
    pub avg_smape: f64,
    pub avg_mse: f64,
    pub avg_rmse: f64,
    pub train_seconds: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub beats_baseline: Vec<String>,
}

impl BenchmarkRow {
    pub fn of(kind: ModelKind, o: &Outcome) -> Self {
        let h = &o.trained.history;
        BenchmarkRow {
            model: kind,
            avg_smape: o.report.average.smape,
            avg_mse: o.report.average.mse,
            avg_rmse: o.report.average.rmse,
            train_seconds: o.train_seconds,
            best_epoch: h.best_epoch,
            epochs_run: h.epochs.len(),
            stopped_early: h.stopped_early,
            beats_baseline: targets_beating(&o.report, &o.baseline),
        }
    }
}

pub fn benchmark_csv(rows: &[BenchmarkRow]) -> String {
    let mut out = String::from("model,avg_smape,avg_mse,avg_rmse,train_seconds\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{:.3}", r.model.name(), r.avg_smape, r.avg_mse, r.avg_rmse, r.train_seconds);
    }
    out
}

pub fn benchmark_text(rows: &[BenchmarkRow]) -> String {
    let mut out = format!(
        "{:<6} {:>10} {:>10} {:>10} {:>12} {:>8} {:>8}\n",
        "Model", "SMAPE", "MSE", "RMSE", "Time (s)", "Best", "Epochs"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<6} {:>10.2} {:>10.2} {:>10.3} {:>12.1} {:>8} {:>8}",
            r.model.name(),
            r.avg_smape,
            r.avg_mse,
            r.avg_rmse,
            r.train_seconds,
            r.best_epoch,
            r.epochs_run
        );
    }
    out
}

/// Trains both models on the same split and seed, one after the other, and
/// writes `benchmark.csv`, `benchmark.txt` and a directory per model.
pub fn run_benchmark(cohort: &Cohort, run: &RunConfig) -> Result<Vec<BenchmarkRow>> {
    let prepared = prepare(cohort, run)?;
    let mut rows = Vec::new();
    for kind in [ModelKind::Lstm, ModelKind::Kan] {
        let o = fit_and_evaluate(&prepared, run, kind)?;
        write_outcome(&run.out_dir.join(kind.name()), &o, &prepared, run)?;
        rows.push(BenchmarkRow::of(kind, &o));
    }
    std::fs::create_dir_all(&run.out_dir)?;
    std::fs::write(run.out_dir.join("benchmark.csv"), benchmark_csv(&rows))?;
    std::fs::write(run.out_dir.join("benchmark.txt"), benchmark_text(&rows))?;
    Ok(rows)
}

/// Correlation over the UPDRS parts and visit month, all clinical visits.
pub fn correlation_csv(cohort: &Cohort) -> Result<String> {
    let opts = MergeOptions { include_supplemental: true, include_visit_month: true, include_peptides: false, include_proteins: false };
    let m = FeatureMatrix::from_cohort(cohort, opts);
    let names: Vec<&str> = UPDRS_NAMES.iter().copied().chain([VISIT_MONTH_COLUMN]).collect();
    let cols: Vec<usize> = names
        .iter()
        .map(|n| m.col_index(n).ok_or_else(|| Error::ColumnMismatch(format!("merged table lacks `{n}`"))))
        .collect::<Result<_>>()?;
    let c = correlation_matrix(&m, &cols)?;
    let mut out = format!(",{}\n", names.join(","));
    for (n, row) in names.iter().zip(&c) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{n},{}", cells.join(","));
    }
    Ok(out)
}

/// Density of total UPDRS at clinical visits where each of the `top_k` most
/// frequent peptides was detected versus not, as long-format
/// `peptide,presence,x,density` rows.
pub fn kde_csv(cohort: &Cohort, top_k: usize) -> Result<String> {
    let visits: BTreeSet<(i64, u32)> = cohort.peptides.iter().map(|p| (p.patient_id, p.visit_month)).collect();
    let mut out = String::from("peptide,presence,x,density\n");
    for seq in top_peptides(cohort, top_k) {
        let present: BTreeSet<(i64, u32)> = cohort
            .peptides
            .iter()
            .filter(|p| p.peptide_sequence == seq && p.peptide_abundance.is_some())
            .map(|p| (p.patient_id, p.visit_month))
            .collect();
        let (mut yes, mut no) = (Vec::new(), Vec::new());
        for r in cohort.clinical.iter().filter(|r| visits.contains(&(r.patient_id, r.visit_month))) {
            if present.contains(&(r.patient_id, r.visit_month)) {
                yes.push(r.updrs_total());
            } else {
                no.push(r.updrs_total());
            }
        }
        for (label, samples) in [("present", &yes), ("absent", &no)] {
            if samples.len() < 2 {
                continue;
            }
            let est = kde(samples, None, &default_grid(samples, 3.0, 128))?;
            for (x, d) in est.grid.iter().zip(&est.density) {
                let _ = writeln!(out, "{seq},{label},{x},{d}");
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_run(out: &Path) -> RunConfig {
        let mut run = RunConfig { out_dir: out.to_path_buf(), seed: 3, ..Default::default() };
        run.synth.n_patients = 40;
        run.kan.widths = vec![27, 8];
        run.kan.grid_size = 5;
        run.lstm.hidden = 8;
        run.lstm.attention_width = 16;
        run.lstm.head_widths = [16, 8, 4];
        for t in [&mut run.lstm_train, &mut run.kan_train] {
            t.max_epochs = 4;
        }
        run.resolved()
    }

    #[test]
    fn split_is_patient_disjoint() {
        let run = small_run(Path::new("unused"));
        let p = prepare(&run.cohort().unwrap(), &run).unwrap();
        assert!(p.train.patient_ids().is_disjoint(&p.val.patient_ids()));
        assert!(!p.val.is_empty() && p.train.len() > p.val.len());
        assert_eq!(p.peptides.len(), run.lag.n_peptide_slots());
    }

    #[test]
    fn model_widths_follow_the_layout() {
        let mut run = small_run(Path::new("unused"));
        run.lag.lag_depth = 3;
        let p = prepare(&run.cohort().unwrap(), &run).unwrap();
        for kind in [ModelKind::Lstm, ModelKind::Kan] {
            let m = Forecaster::build(&model_config(&run, kind, &p.train), 0).unwrap();
            assert_eq!(m.prepare_inputs(&p.train).unwrap().cols(), m.input_width());
        }
    }

    #[test]
    fn benchmark_outputs_and_rerun() {
        let dir = tempfile::tempdir().unwrap();
        let run = small_run(&dir.path().join("a"));
        let cohort = run.cohort().unwrap();
        let rows = run_benchmark(&cohort, &run).unwrap();
        let csv = std::fs::read_to_string(run.out_dir.join("benchmark.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "model,avg_smape,avg_mse,avg_rmse,train_seconds");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("lstm,") && lines[2].starts_with("kan,"));
        for r in &rows {
            let metrics = std::fs::read_to_string(run.out_dir.join(r.model.name()).join("metrics.csv")).unwrap();
            let rmse: Vec<f64> = metrics.lines().skip(1).take(4).map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
            assert!((rmse.iter().sum::<f64>() / 4.0 - r.avg_rmse).abs() < 1e-9);
        }

        let again = small_run(&dir.path().join("b"));
        run_benchmark(&cohort, &again).unwrap();
        for m in ["lstm", "kan"] {
            for f in ["metrics.csv", "history.csv", "predictions.csv"] {
                let a = std::fs::read(run.out_dir.join(m).join(f)).unwrap();
                let b = std::fs::read(again.out_dir.join(m).join(f)).unwrap();
                assert_eq!(a, b, "{m}/{f}");
            }
        }
    }

    #[test]
    fn saved_run_reevaluates_identically() {
        let dir = tempfile::tempdir().unwrap();
        let run = small_run(dir.path());
        let cohort = run.cohort().unwrap();
        let p = prepare(&cohort, &run).unwrap();
        let o = fit_and_evaluate(&p, &run, ModelKind::Kan).unwrap();
        write_outcome(dir.path(), &o, &p, &run).unwrap();
        assert_eq!(evaluate_saved(dir.path(), &cohort).unwrap(), o.report);
    }

    #[test]
    fn echoed_config_reproduces_the_report() {
        let dir = tempfile::tempdir().unwrap();
        let run = small_run(dir.path());
        run.echo(dir.path()).unwrap();
        let back = RunConfig::from_json_file(&dir.path().join("config.json")).unwrap();
        assert_eq!(back, run);
        let a = fit_and_evaluate(&prepare(&run.cohort().unwrap(), &run).unwrap(), &run, ModelKind::Lstm).unwrap();
        let b = fit_and_evaluate(&prepare(&back.cohort().unwrap(), &back).unwrap(), &back, ModelKind::Lstm).unwrap();
        assert_eq!(a.report, b.report);
    }

    #[test]
    fn analysis_outputs() {
        let run = small_run(Path::new("unused"));
        let cohort = run.cohort().unwrap();
        let corr = correlation_csv(&cohort).unwrap();
        let rows: Vec<Vec<String>> = corr.lines().map(|l| l.split(',').map(String::from).collect()).collect();
        assert_eq!(rows.len(), 6);
        for i in 1..6 {
            assert_eq!(rows[i][i], "1");
            for j in 1..6 {
                assert_eq!(rows[i][j], rows[j][i]);
            }
        }
        let kde = kde_csv(&cohort, 3).unwrap();
        let curves: BTreeSet<(String, String)> = kde
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[0].to_string(), f[1].to_string())
            })
            .collect();
        assert_eq!(curves.len(), 6);
    }

    #[test]
    fn synthetic_correlation_is_calibrated() {
        let cohort = generate_synthetic(&SynthConfig::default()).unwrap();
        let corr = correlation_csv(&cohort).unwrap();
        let r12: f64 = corr.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
        assert!((r12 - 0.66).abs() < 0.05, "{r12}");
    }
}
