//! Command-line surface. Every command starts from the defaults (or a
//! `--config` JSON file), applies the flags on top and echoes the result as
//! `config.json` into the output directory.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::dataset::{generate_synthetic, profile, write_cohort, CohortPaths};
use crate::error::{Error, Result};
use crate::gradsuite::{render, run_suite, SuiteConfig};
use crate::models::ModelKind;
use crate::pipeline::{
    benchmark_text, correlation_csv, evaluate_saved, fit_and_evaluate, kde_csv, prepare, run_benchmark, targets_beating, write_outcome,
    RunConfig,
};

#[derive(Debug, Parser)]
#[command(name = "updrs-forecast", version, about = "Forecast MDS-UPDRS scores with attention-LSTM and KAN models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Opts,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic cohort (four CSVs) and its profile.
    Generate,
    /// Print the data profile of a cohort.
    Profile,
    /// Correlation matrix and per-peptide KDE curves.
    Analyze,
    /// Train one model and evaluate it on the validation patients.
    Train,
    /// Score a trained model directory on the validation patients.
    Evaluate {
        /// Directory written by `train` (defaults to the output directory).
        #[arg(long)]
        model_dir: Option<PathBuf>,
    },
    /// Train both models on one split and compare them.
    Benchmark,
    /// Finite-difference gradient checks for every layer family.
    Gradcheck {
        #[arg(long, default_value_t = crate::nncore::GRAD_EPS)]
        eps: f64,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct Opts {
    /// Cohort CSV directory; a synthetic cohort is used when omitted.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON run config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, global = true)]
    pub model: Option<ModelKind>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub weight_decay: Option<f64>,
    #[arg(long, global = true)]
    pub max_epochs: Option<usize>,
    #[arg(long, global = true)]
    pub patience: Option<usize>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    /// Months between input and target visit.
    #[arg(long, global = true)]
    pub horizon: Option<u32>,
    #[arg(long, global = true)]
    pub lag_depth: Option<usize>,
    /// Synthetic cohort size.
    #[arg(long, global = true)]
    pub patients: Option<usize>,
}

impl Opts {
    /// Config file (or defaults) with the flags applied. Training flags
    /// apply to both models.
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_json_file(p)?,
            None => RunConfig::default(),
        };
        if self.data_dir.is_some() {
            c.data_dir = self.data_dir.clone();
        }
        if let Some(d) = &self.out_dir {
            c.out_dir = d.clone();
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(m) = self.model {
            c.model = m;
        }
        for t in [&mut c.lstm_train, &mut c.kan_train] {
            if let Some(v) = self.lr {
                t.lr = v;
            }
            if let Some(v) = self.weight_decay {
                t.weight_decay = v;
            }
            if let Some(v) = self.max_epochs {
                t.max_epochs = v;
            }
            if let Some(v) = self.patience {
                t.patience = v;
            }
            if let Some(v) = self.batch_size {
                t.batch_size = v;
            }
        }
        if let Some(h) = self.horizon {
            c.lag.horizon_months = h;
        }
        if let Some(d) = self.lag_depth {
            c.lag.lag_depth = d;
        }
        if let Some(n) = self.patients {
            c.synth.n_patients = n;
        }
        let c = c.resolved();
        c.validate()?;
        Ok(c)
    }
}

/// Runs one command, printing its report to stdout.
pub fn run(cli: &Cli) -> Result<()> {
    let run = cli.opts.run_config()?;
    let out = run.out_dir.clone();
    match &cli.command {
        Command::Generate => {
            let cohort = generate_synthetic(&run.synth)?;
            run.echo(&out)?;
            write_cohort(&cohort, &CohortPaths::in_dir(&out))?;
            let text = profile(&cohort)?.render();
            std::fs::write(out.join("profile.txt"), &text)?;
            print!("{text}");
        }
        Command::Profile => {
            let text = profile(&run.cohort()?)?.render();
            run.echo(&out)?;
            std::fs::write(out.join("profile.txt"), &text)?;
            print!("{text}");
        }
        Command::Analyze => {
            let cohort = run.cohort()?;
            run.echo(&out)?;
            let corr = correlation_csv(&cohort)?;
            std::fs::write(out.join("correlation.csv"), &corr)?;
            std::fs::write(out.join("kde.csv"), kde_csv(&cohort, 5)?)?;
            print!("{corr}");
            println!("wrote {} and {}", out.join("correlation.csv").display(), out.join("kde.csv").display());
        }
        Command::Train => {
            let cohort = run.cohort()?;
            run.echo(&out)?;
            let prepared = prepare(&cohort, &run)?;
            let o = fit_and_evaluate(&prepared, &run, run.model)?;
            write_outcome(&out, &o, &prepared, &run)?;
            let h = &o.trained.history;
            println!(
                "{}: {} epochs, best epoch {} (val loss {:.4}){}, {:.1} s",
                run.model.name(),
                h.epochs.len(),
                h.best_epoch,
                h.best_val_loss(),
                if h.stopped_early { ", stopped early" } else { "" },
                o.train_seconds
            );
            print!("{}", o.report.to_text());
            println!("beats the training-mean baseline (MSE) on: {}", targets_beating(&o.report, &o.baseline).join(", "));
        }
        Command::Evaluate { model_dir } => {
            let dir = model_dir.clone().unwrap_or_else(|| out.clone());
            let report = evaluate_saved(&dir, &run.cohort()?)?;
            let dest = out.join("evaluation");
            run.echo(&dest)?;
            report.write(&dest)?;
            print!("{}", report.to_text());
        }
        Command::Benchmark => {
            let cohort = run.cohort()?;
            run.echo(&out)?;
            let rows = run_benchmark(&cohort, &run)?;
            print!("{}", benchmark_text(&rows));
        }
        Command::Gradcheck { eps } => {
            let results = run_suite(&SuiteConfig { eps: *eps, ..Default::default() })?;
            let text = render(&results);
            print!("{text}");
            let failed: Vec<&str> = results.iter().filter(|r| !r.pass).map(|r| r.family).collect();
            if !failed.is_empty() {
                return Err(Error::GradCheckFailed(failed.join(", ")));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("updrs-forecast").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_defaults() {
        let cli = parse(&["train", "--model", "lstm", "--lr", "0.01", "--max-epochs", "2", "--horizon", "12", "--seed", "9"]);
        let c = cli.opts.run_config().unwrap();
        assert_eq!(c.model, ModelKind::Lstm);
        assert_eq!(c.lstm_train.lr, 0.01);
        assert_eq!(c.kan_train.max_epochs, 2);
        assert_eq!(c.lag.horizon_months, 12);
        assert_eq!((c.seed, c.synth.seed, c.kan_train.seed), (9, 9, 9));
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"seed": 3, "model": "lstm", "kan_train": {"patience": 7}}"#).unwrap();
        let p = path.to_str().unwrap();
        let c = parse(&["train", "--config", p]).opts.run_config().unwrap();
        assert_eq!((c.seed, c.model, c.kan_train.patience, c.kan_train.max_epochs), (3, ModelKind::Lstm, 7, 500));
        let c = parse(&["train", "--config", p, "--seed", "4", "--model", "kan"]).opts.run_config().unwrap();
        assert_eq!((c.seed, c.model), (4, ModelKind::Kan));
    }

    #[test]
    fn invalid_values_are_usage_errors() {
        let e = parse(&["generate", "--patients", "0"]).opts.run_config().unwrap_err();
        assert_eq!(e.category().exit_code(), 1);
        let e = parse(&["train", "--lr=-1"]).opts.run_config().unwrap_err();
        assert_eq!(e.category().exit_code(), 1);
        assert!(Cli::try_parse_from(["updrs-forecast", "train", "--model", "gru"]).is_err());
    }

    #[test]
    fn missing_config_file_is_a_data_error() {
        let e = parse(&["train", "--config", "/nonexistent/run.json"]).opts.run_config().unwrap_err();
        assert_eq!(e.category().exit_code(), 2);
    }
}
