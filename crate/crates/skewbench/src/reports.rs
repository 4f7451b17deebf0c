//! Metrics, diagnostics and oracle outputs, with readers for each.

use std::path::Path;

use serde::{Deserialize, Serialize};
use skewbench_core::boundary::{norm_profile, radial_derivative};
use skewbench_core::data::Dataset;
use skewbench_core::diagnostics::{
    cluster_stats_from_features, evaluate_features, gamma_sweep_features, spearman, ClassCluster,
    ClusterStats, ConfusionMatrix, Evaluation, Features, OracleConfig, OracleResult, SweepPoint,
    SweepResult,
};
use skewbench_core::model::Model;

use crate::config::Method;
use crate::error::{Error, Result};
use crate::fsio::{read_json, write_json};
use crate::tables::{fmt_real, Table};

pub const CLUSTERS_FILE: &str = "clusters.csv";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const NORMS_FILE: &str = "norms.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const FEATURES_FILE: &str = "features.csv";

/// Identifies the model a report was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub method: Method,
    pub gamma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metrics {
    pub top1_error: f64,
    pub top5_error: f64,
    pub balanced_error: f64,
    pub per_class_error: Vec<f64>,
    pub method: Method,
    pub gamma: f64,
    pub seed: u64,
}

impl Metrics {
    pub fn new(eval: &Evaluation, run: RunInfo) -> Self {
        Metrics {
            top1_error: eval.top1_error,
            top5_error: eval.top5_error,
            balanced_error: eval.balanced_error,
            per_class_error: eval.per_class_error.clone(),
            method: run.method,
            gamma: run.gamma,
            seed: run.seed,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleReport {
    pub error_before: f64,
    pub balanced_error_before: f64,
    pub error: f64,
    pub balanced_error: f64,
    pub method: Method,
    pub gamma: f64,
    pub seed: u64,
    pub config: OracleConfig,
}

impl OracleReport {
    pub fn new(r: &OracleResult, run: RunInfo, config: &OracleConfig) -> Self {
        OracleReport {
            error_before: r.error_before,
            balanced_error_before: r.balanced_error_before,
            error: r.error,
            balanced_error: r.balanced_error,
            method: run.method,
            gamma: run.gamma,
            seed: run.seed,
            config: config.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormRow {
    pub class: usize,
    pub count: usize,
    pub norm: f64,
    pub relative_norm: f64,
    /// Mean derivative of the class's training loss with respect to its own
    /// weight norm.
    pub radial_derivative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub top1_error: f64,
    pub top5_error: f64,
    pub balanced_error: f64,
    pub accuracy: f64,
    pub per_class_error: Vec<f64>,
    pub method: Method,
    pub gamma: f64,
    pub seed: u64,
    /// Rank correlation of training counts with weight norms.
    pub norm_count_spearman: Option<f64>,
    /// Rank correlation of training counts with train/test center gaps.
    pub center_gap_count_spearman: Option<f64>,
    pub negative_radial_fraction: f64,
    pub best_gamma: f64,
    pub best_balanced_error: f64,
    pub zero_features: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub clusters: ClusterStats,
    pub confusion: ConfusionMatrix,
    pub norms: Vec<NormRow>,
    pub sweep: SweepResult,
    pub summary: Summary,
}

fn as_reals(xs: &[usize]) -> Vec<f64> {
    xs.iter().map(|&x| x as f64).collect()
}

/// Runs every analysis on a trained model. `counts` are the training counts
/// used for re-scaling.
pub fn diagnose(
    model: &Model,
    counts: &[usize],
    train: &Dataset,
    test: &Dataset,
    grid: &[f64],
    run: RunInfo,
) -> Result<Diagnostics> {
    let train_f = Features::extract(model, train)?;
    let test_f = Features::extract(model, test)?;
    let eval = evaluate_features(model.classifier(), &test_f)?;
    let confusion = ConfusionMatrix::from_predictions(model.num_classes(), &test_f.labels, &eval.predictions)?;
    let clusters = cluster_stats_from_features(&train_f, &test_f)?;
    let sweep = gamma_sweep_features(model.classifier(), counts, &test_f, grid)?;
    let norms_abs = model.weight_norms();
    let relative = norm_profile(model.classifier());
    let norms = (0..model.num_classes())
        .map(|k| {
            Ok(NormRow {
                class: k,
                count: counts[k],
                norm: norms_abs[k],
                relative_norm: relative[k],
                radial_derivative: radial_derivative(model, train, k, k)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cf = as_reals(counts);
    let gaps: Vec<f64> = clusters.classes.iter().map(|c| c.center_gap).collect();
    let best = sweep.best().expect("nonempty grid");
    let summary = Summary {
        top1_error: eval.top1_error,
        top5_error: eval.top5_error,
        balanced_error: eval.balanced_error,
        accuracy: confusion.accuracy(),
        per_class_error: eval.per_class_error.clone(),
        method: run.method,
        gamma: run.gamma,
        seed: run.seed,
        norm_count_spearman: spearman(&cf, &norms_abs),
        center_gap_count_spearman: spearman(&cf, &gaps),
        negative_radial_fraction: norms.iter().filter(|n| n.radial_derivative < 0.0).count() as f64
            / norms.len() as f64,
        best_gamma: best.gamma,
        best_balanced_error: best.balanced_error,
        zero_features: clusters.classes.iter().map(|c| c.zero_features).sum(),
    };
    Ok(Diagnostics {
        clusters,
        confusion,
        norms,
        sweep,
        summary,
    })
}

fn strings<const N: usize>(xs: [&str; N]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

pub fn write_clusters(path: &Path, c: &ClusterStats) -> Result<()> {
    let header = strings([
        "class",
        "train_count",
        "test_count",
        "sigma_train",
        "sigma_test",
        "center_gap",
        "zero_features",
    ]);
    let rows: Vec<Vec<String>> = c
        .classes
        .iter()
        .enumerate()
        .map(|(k, s)| {
            vec![
                k.to_string(),
                s.train_count.to_string(),
                s.test_count.to_string(),
                fmt_real(s.sigma_train),
                fmt_real(s.sigma_test),
                fmt_real(s.center_gap),
                s.zero_features.to_string(),
            ]
        })
        .collect();
    Table::write(path, &header, &rows)
}

pub fn read_clusters(path: &Path) -> Result<ClusterStats> {
    let t = Table::read(path)?;
    let cols = ["train_count", "test_count", "sigma_train", "sigma_test", "center_gap", "zero_features"]
        .map(|c| t.column(c));
    let [tc, sc, st, ss, gap, zf] = cols;
    let (tc, sc, st, ss, gap, zf) = (tc?, sc?, st?, ss?, gap?, zf?);
    let classes = (0..t.rows.len())
        .map(|r| {
            Ok(ClassCluster {
                sigma_train: t.real(r, st)?,
                sigma_test: t.real(r, ss)?,
                center_gap: t.real(r, gap)?,
                train_count: t.count(r, tc)?,
                test_count: t.count(r, sc)?,
                zero_features: t.count(r, zf)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClusterStats { classes })
}

pub fn write_confusion(path: &Path, c: &ConfusionMatrix) -> Result<()> {
    let k = c.num_classes();
    let mut header = vec!["true".to_string()];
    header.extend((0..k).map(|p| format!("pred_{p}")));
    let rows: Vec<Vec<String>> = (0..k)
        .map(|t| {
            let mut row = vec![t.to_string()];
            row.extend(c.row(t).iter().map(usize::to_string));
            row
        })
        .collect();
    Table::write(path, &header, &rows)
}

pub fn read_confusion(path: &Path) -> Result<ConfusionMatrix> {
    let t = Table::read(path)?;
    let (first, k) = t.numbered("pred_");
    if t.rows.len() != k {
        return Err(Error::malformed(path, format!("{} rows for {k} classes", t.rows.len())));
    }
    let first = first.unwrap_or(0);
    let mut counts = Vec::with_capacity(k * k);
    for r in 0..k {
        for c in first..first + k {
            counts.push(t.count(r, c)?);
        }
    }
    Ok(ConfusionMatrix::from_counts(k, counts)?)
}

pub fn write_norms(path: &Path, rows: &[NormRow]) -> Result<()> {
    let header = strings(["class", "count", "norm", "relative_norm", "radial_derivative"]);
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|n| {
            vec![
                n.class.to_string(),
                n.count.to_string(),
                fmt_real(n.norm),
                fmt_real(n.relative_norm),
                fmt_real(n.radial_derivative),
            ]
        })
        .collect();
    Table::write(path, &header, &rows)
}

pub fn read_norms(path: &Path) -> Result<Vec<NormRow>> {
    let t = Table::read(path)?;
    let [class, count, norm, rel, rad] =
        ["class", "count", "norm", "relative_norm", "radial_derivative"].map(|c| t.column(c));
    let (class, count, norm, rel, rad) = (class?, count?, norm?, rel?, rad?);
    (0..t.rows.len())
        .map(|r| {
            Ok(NormRow {
                class: t.count(r, class)?,
                count: t.count(r, count)?,
                norm: t.real(r, norm)?,
                relative_norm: t.real(r, rel)?,
                radial_derivative: t.real(r, rad)?,
            })
        })
        .collect()
}

pub fn write_sweep(path: &Path, s: &SweepResult) -> Result<()> {
    let k = s.points.first().map_or(0, |p| p.per_class_error.len());
    let mut header = strings(["gamma", "top1_error", "balanced_error"]);
    header.extend((0..k).map(|c| format!("class_error_{c}")));
    let rows: Vec<Vec<String>> = s
        .points
        .iter()
        .map(|p| {
            let mut row = vec![fmt_real(p.gamma), fmt_real(p.top1_error), fmt_real(p.balanced_error)];
            row.extend(p.per_class_error.iter().map(|&e| fmt_real(e)));
            row
        })
        .collect();
    Table::write(path, &header, &rows)
}

pub fn read_sweep(path: &Path) -> Result<SweepResult> {
    let t = Table::read(path)?;
    let [g, top1, bal] = ["gamma", "top1_error", "balanced_error"].map(|c| t.column(c));
    let (g, top1, bal) = (g?, top1?, bal?);
    let (first, k) = t.numbered("class_error_");
    let points = (0..t.rows.len())
        .map(|r| {
            Ok(SweepPoint {
                gamma: t.real(r, g)?,
                top1_error: t.real(r, top1)?,
                balanced_error: t.real(r, bal)?,
                per_class_error: match first {
                    Some(s) => (s..s + k).map(|c| t.real(r, c)).collect::<Result<_>>()?,
                    None => Vec::new(),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { points })
}

/// Writes the five fixed-name report files into `dir`.
pub fn write_diagnostics(dir: &Path, d: &Diagnostics) -> Result<()> {
    write_clusters(&dir.join(CLUSTERS_FILE), &d.clusters)?;
    write_confusion(&dir.join(CONFUSION_FILE), &d.confusion)?;
    write_norms(&dir.join(NORMS_FILE), &d.norms)?;
    write_sweep(&dir.join(SWEEP_FILE), &d.sweep)?;
    write_json(&dir.join(SUMMARY_FILE), &d.summary)
}

pub fn read_diagnostics(dir: &Path) -> Result<Diagnostics> {
    Ok(Diagnostics {
        clusters: read_clusters(&dir.join(CLUSTERS_FILE))?,
        confusion: read_confusion(&dir.join(CONFUSION_FILE))?,
        norms: read_norms(&dir.join(NORMS_FILE))?,
        sweep: read_sweep(&dir.join(SWEEP_FILE))?,
        summary: read_json(&dir.join(SUMMARY_FILE))?,
    })
}
