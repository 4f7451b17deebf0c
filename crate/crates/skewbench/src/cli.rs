//! Command-line surface. Every subcommand returns the files it wrote.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use skewbench_core::data::{Dataset, Split};
use skewbench_core::diagnostics::{evaluate, gamma_sweep, oracle_finetune};

use crate::checkpoint::Checkpoint;
use crate::config::{preset, ExperimentConfig, GammaGrid, PRESETS};
use crate::error::{Error, Result};
use crate::pipeline::{self, check_compatible};
use crate::reports::{self, Metrics, OracleReport, RunInfo, FEATURES_FILE};
use crate::tables::{export_features, load_csv, write_dataset, write_trace};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const ORACLE_FILE: &str = "oracle.json";
pub const TRAIN_DATA_FILE: &str = "train.csv";
pub const TEST_DATA_FILE: &str = "test.csv";

#[derive(Debug, Parser)]
#[command(name = "skewbench", version, about = "Class-imbalanced classification experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the prepared train and test sets as CSV.
    Generate(Common),
    /// Train a model; writes a checkpoint and the per-epoch trace.
    Train(Common),
    /// Re-scale the weight vectors of a checkpoint.
    Rescale(Common),
    /// Test-set metrics of a checkpoint.
    Evaluate(Common),
    /// Cluster statistics, confusion matrix, norms, γ sweep and features.
    Diagnose(Common),
    /// Test error over a grid of re-scaling exponents.
    Sweep(Common),
    /// Fine-tune the classifier on test features over the frozen extractor.
    Oracle(Common),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Experiment config (JSON).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Built-in config instead of --config.
    #[arg(long, value_name = "NAME", conflicts_with = "config")]
    pub preset: Option<String>,
    /// Checkpoint written by `train` or `rescale`.
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    /// Re-scaling exponent for `rescale`.
    #[arg(long, value_name = "F")]
    pub gamma: Option<f64>,
    /// Inclusive grid `start:stop:step`.
    #[arg(long, value_name = "A:B:STEP")]
    pub gamma_grid: Option<GammaGrid>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Test set CSV for `evaluate` and `oracle`, instead of the one the config
    /// describes.
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
}

impl Common {
    fn explicit_config(&self) -> Result<Option<ExperimentConfig>> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => preset(name).ok_or_else(|| {
                Error::config("preset", format!("unknown preset `{name}`; known: {}", PRESETS.join(", ")))
            })?,
            (None, None) => return Ok(None),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(Some(cfg))
    }

    fn config(&self) -> Result<ExperimentConfig> {
        self.explicit_config()?
            .ok_or_else(|| Error::config("config", "pass --config PATH or --preset NAME"))
    }

    fn checkpoint(&self) -> Result<(PathBuf, Checkpoint)> {
        let path = self
            .checkpoint
            .clone()
            .ok_or_else(|| Error::config("checkpoint", "pass --checkpoint PATH"))?;
        let ckpt = Checkpoint::load(&path)?;
        Ok((path, ckpt))
    }

    /// The config a checkpoint-based command rebuilds data from: --config or
    /// --preset if given, otherwise the one embedded in the checkpoint.
    fn data_config(&self, ckpt: &Checkpoint) -> Result<ExperimentConfig> {
        match self.explicit_config()? {
            Some(c) => Ok(c),
            None => {
                let mut c = ckpt.config.clone();
                if let Some(seed) = self.seed {
                    c.seed = seed;
                }
                Ok(c)
            }
        }
    }

    fn out_or(&self, default: impl FnOnce() -> PathBuf) -> PathBuf {
        self.out.clone().unwrap_or_else(default)
    }
}

fn parent_of(path: &Path) -> PathBuf {
    path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn run_info(ckpt: &Checkpoint) -> RunInfo {
    RunInfo {
        method: ckpt.method,
        gamma: ckpt.gamma,
        seed: ckpt.seed,
    }
}

pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Rescale(a) => cmd_rescale(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Oracle(a) => cmd_oracle(a),
    }
}

pub fn cmd_generate(a: &Common) -> Result<Vec<PathBuf>> {
    let cfg = a.config()?;
    let data = pipeline::prepare(&cfg)?;
    let out = a.out_or(|| cfg.out_dir.clone());
    let (train, test) = (out.join(TRAIN_DATA_FILE), out.join(TEST_DATA_FILE));
    write_dataset(&train, &data.train)?;
    write_dataset(&test, &data.test)?;
    log::info!("train counts {:?}", data.train.class_counts());
    Ok(vec![train, test])
}

pub fn cmd_train(a: &Common) -> Result<Vec<PathBuf>> {
    let cfg = a.config()?;
    let (_, trained) = pipeline::run(&cfg)?;
    let out = a.out_or(|| cfg.out_dir.clone());
    let (ckpt, trace) = (out.join(CHECKPOINT_FILE), out.join(TRACE_FILE));
    trained.checkpoint(&cfg).save(&ckpt)?;
    write_trace(&trace, &trained.trace, trained.model.num_classes())?;
    Ok(vec![ckpt, trace])
}

pub fn cmd_rescale(a: &Common) -> Result<Vec<PathBuf>> {
    let gamma = a.gamma.ok_or_else(|| Error::config("gamma", "pass --gamma F"))?;
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::config("gamma", format!("must be finite and >= 0, got {gamma}")));
    }
    let (path, ckpt) = a.checkpoint()?;
    let out = a.out_or(|| parent_of(&path).join("rescaled")).join(CHECKPOINT_FILE);
    ckpt.rescaled(gamma)?.save(&out)?;
    Ok(vec![out])
}

fn test_set(a: &Common, ckpt: &Checkpoint) -> Result<Dataset> {
    let test = match &a.data {
        Some(path) => load_csv(path, Split::Test)?,
        None => pipeline::prepare(&a.data_config(ckpt)?)?.test,
    };
    Ok(test)
}

pub fn cmd_evaluate(a: &Common) -> Result<Vec<PathBuf>> {
    let (path, ckpt) = a.checkpoint()?;
    let model = ckpt.model()?;
    let test = test_set(a, &ckpt)?;
    check_compatible(&model, &test)?;
    let eval = evaluate(&model, &test)?;
    let out = a.out_or(|| parent_of(&path)).join(METRICS_FILE);
    Metrics::new(&eval, run_info(&ckpt)).save(&out)?;
    log::info!("top-1 error {:.4}, balanced {:.4}", eval.top1_error, eval.balanced_error);
    Ok(vec![out])
}

pub fn cmd_diagnose(a: &Common) -> Result<Vec<PathBuf>> {
    let (path, ckpt) = a.checkpoint()?;
    let model = ckpt.model()?;
    let cfg = a.data_config(&ckpt)?;
    let data = pipeline::prepare(&cfg)?;
    check_compatible(&model, &data.train)?;
    let grid = a.gamma_grid.unwrap_or(cfg.gamma_grid).points();
    let diag = reports::diagnose(&model, &ckpt.class_counts, &data.train, &data.test, &grid, run_info(&ckpt))?;
    let out = a.out_or(|| parent_of(&path).join("diagnostics"));
    reports::write_diagnostics(&out, &diag)?;
    let features = out.join(FEATURES_FILE);
    export_features(&model, &[&data.train, &data.test], &features)?;
    Ok([
        reports::CLUSTERS_FILE,
        reports::CONFUSION_FILE,
        reports::NORMS_FILE,
        reports::SWEEP_FILE,
        reports::SUMMARY_FILE,
        FEATURES_FILE,
    ]
    .iter()
    .map(|f| out.join(f))
    .collect())
}

pub fn cmd_sweep(a: &Common) -> Result<Vec<PathBuf>> {
    let (path, ckpt) = a.checkpoint()?;
    let model = ckpt.model()?;
    let cfg = a.data_config(&ckpt)?;
    let test = pipeline::prepare(&cfg)?.test;
    check_compatible(&model, &test)?;
    let grid = a.gamma_grid.unwrap_or(cfg.gamma_grid).points();
    let sweep = gamma_sweep(&model, &ckpt.class_counts, &test, &grid)?;
    let out = a.out_or(|| parent_of(&path)).join(reports::SWEEP_FILE);
    reports::write_sweep(&out, &sweep)?;
    if let Some(best) = sweep.best() {
        log::info!("best gamma {} (balanced error {:.4})", best.gamma, best.balanced_error);
    }
    Ok(vec![out])
}

pub fn cmd_oracle(a: &Common) -> Result<Vec<PathBuf>> {
    let (path, ckpt) = a.checkpoint()?;
    let model = ckpt.model()?;
    let cfg = a.data_config(&ckpt)?;
    let test = test_set(a, &ckpt)?;
    check_compatible(&model, &test)?;
    let result = oracle_finetune(&model, &test, &cfg.oracle)?;
    let out = a.out_or(|| parent_of(&path)).join(ORACLE_FILE);
    OracleReport::new(&result, run_info(&ckpt), &cfg.oracle).save(&out)?;
    log::info!("oracle error {:.4} (from {:.4})", result.error, result.error_before);
    Ok(vec![out])
}
