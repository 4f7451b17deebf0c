//! Experiment configuration: a versioned JSON document.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use skewbench_core::data::{ImbalanceKind, ImbalanceSpec, SyntheticSpec};
use skewbench_core::diagnostics::OracleConfig;
use skewbench_core::losses::{LossSpec, DEFAULT_CB_BETA};
use skewbench_core::optim::TrainConfig;

use crate::error::{Error, ParseError, Result};
use crate::fsio::read_bytes;

pub const CONFIG_VERSION: u32 = 1;
pub const DEFAULT_FOCAL_GAMMA: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Baseline,
    BaselineRs,
    WvnRs,
    Oversample,
    Undersample,
    Reweight,
    Focal,
    Cb,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Baseline,
        Method::BaselineRs,
        Method::WvnRs,
        Method::Oversample,
        Method::Undersample,
        Method::Reweight,
        Method::Focal,
        Method::Cb,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::BaselineRs => "baseline_rs",
            Method::WvnRs => "wvn_rs",
            Method::Oversample => "oversample",
            Method::Undersample => "undersample",
            Method::Reweight => "reweight",
            Method::Focal => "focal",
            Method::Cb => "cb",
        }
    }

    /// Whether training ends with a re-scaling step.
    pub fn rescales(self) -> bool {
        matches!(self, Method::BaselineRs | Method::WvnRs)
    }

    pub fn default_loss(self) -> LossSpec {
        match self {
            Method::Reweight => LossSpec::ReweightedCe,
            Method::Focal => LossSpec::Focal {
                gamma: DEFAULT_FOCAL_GAMMA,
            },
            Method::Cb => LossSpec::ClassBalancedCe {
                beta: DEFAULT_CB_BETA,
            },
            _ => LossSpec::PlainCe,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn one() -> usize {
    1
}

/// Gaussian mixture; the seed comes from the top-level `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSource {
    pub num_classes: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub input_dim: usize,
    pub class_separation: f64,
    pub noise_scale: f64,
    #[serde(default = "one")]
    pub modes_per_class: usize,
    #[serde(default)]
    pub mode_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxSource {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub train: PathBuf,
    pub test: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticSource),
    Idx(IdxSource),
    Csv(CsvSource),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImbalanceConfig {
    pub kind: ImbalanceKind,
    #[serde(default = "unit_ratio")]
    pub ratio: f64,
}

fn unit_ratio() -> f64 {
    1.0
}

impl Default for ImbalanceConfig {
    fn default() -> Self {
        ImbalanceConfig {
            kind: ImbalanceKind::None,
            ratio: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDims {
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
}

/// Optimizer settings; the seed is the top-level one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
    pub wvn: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            learning_rate: d.learning_rate,
            momentum: d.momentum,
            weight_decay: d.weight_decay,
            epochs: d.epochs,
            batch_size: d.batch_size,
            decay_epochs: d.decay_epochs,
            decay_factor: d.decay_factor,
            wvn: d.wvn,
        }
    }
}

/// Inclusive grid `start, start + step, ..., stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for GammaGrid {
    fn default() -> Self {
        GammaGrid {
            start: 0.0,
            stop: 1.0,
            step: 0.05,
        }
    }
}

impl GammaGrid {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let finite = self.start.is_finite() && self.stop.is_finite() && self.step.is_finite();
        if !finite || self.start < 0.0 || self.stop < self.start || self.step <= 0.0 {
            return Err(format!(
                "need 0 <= start <= stop and step > 0, got {}:{}:{}",
                self.start, self.stop, self.step
            ));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

impl FromStr for GammaGrid {
    type Err = String;

    /// Parses `"a:b:step"`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, step] = parts.as_slice() else {
            return Err(format!("expected a:b:step, got `{s}`"));
        };
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number"));
        let grid = GammaGrid {
            start: num(a)?,
            stop: num(b)?,
            step: num(step)?,
        };
        grid.validate()?;
        Ok(grid)
    }
}

fn runs_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    /// Every random stream (data, implantation, init, shuffling, resampling)
    /// is derived from this one value.
    pub seed: u64,
    pub method: Method,
    pub data: DataSource,
    #[serde(default)]
    pub imbalance: ImbalanceConfig,
    pub model: ModelDims,
    /// Defaults from `method` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossSpec>,
    #[serde(default)]
    pub train: TrainSection,
    /// Re-scaling exponent; required by `baseline_rs` and `wvn_rs`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub gamma_grid: GammaGrid,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default = "runs_dir")]
    pub out_dir: PathBuf,
}

/// Tagged enums hide the path of a bad field, so re-read `data` as the
/// variant its `source` names to locate it.
fn data_error(text: &str) -> Option<Error> {
    fn probe<T: serde::de::DeserializeOwned>(v: serde_json::Value) -> Option<Error> {
        serde_path_to_error::deserialize::<_, T>(v)
            .err()
            .map(|e| Error::config(format!("data.{}", e.path()), e.into_inner().to_string()))
    }
    let doc: serde_json::Value = serde_json::from_str(text).ok()?;
    let mut data = doc.get("data")?.as_object()?.clone();
    let source = data.remove("source")?;
    let data = serde_json::Value::Object(data);
    match source.as_str()? {
        "synthetic" => probe::<SyntheticSource>(data),
        "idx" => probe::<IdxSource>(data),
        "csv" => probe::<CsvSource>(data),
        _ => None,
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            let inner = e.into_inner();
            if inner.is_syntax() || inner.is_eof() {
                Error::parse(origin, ParseError::Json(inner.to_string()))
            } else if key == "data" {
                data_error(text).unwrap_or_else(|| Error::config(key, inner.to_string()))
            } else {
                Error::config(key, inner.to_string())
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_bytes(path)?;
        let text = String::from_utf8(bytes).map_err(|e| Error::malformed(path, e.to_string()))?;
        Self::from_json(&text, path)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// The loss actually optimized.
    pub fn loss_spec(&self) -> LossSpec {
        self.loss.unwrap_or_else(|| self.method.default_loss())
    }

    /// Whether weight vectors are projected during training.
    pub fn wvn(&self) -> bool {
        self.train.wvn || self.method == Method::WvnRs
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            learning_rate: t.learning_rate,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            epochs: t.epochs,
            batch_size: t.batch_size,
            decay_epochs: t.decay_epochs.clone(),
            decay_factor: t.decay_factor,
            wvn: self.wvn(),
            seed: self.seed,
        }
    }

    pub fn imbalance_spec(&self) -> ImbalanceSpec {
        ImbalanceSpec {
            kind: self.imbalance.kind,
            ratio: self.imbalance.ratio,
            seed: self.seed,
        }
    }

    pub fn synthetic_spec(&self) -> Option<SyntheticSpec> {
        match self.data {
            DataSource::Synthetic(d) => Some(SyntheticSpec {
                num_classes: d.num_classes,
                per_class: d.per_class,
                test_per_class: d.test_per_class,
                input_dim: d.input_dim,
                class_separation: d.class_separation,
                noise_scale: d.noise_scale,
                modes_per_class: d.modes_per_class,
                mode_spread: d.mode_spread,
                seed: self.seed,
            }),
            _ => None,
        }
    }

    /// Same experiment under another method, with the loss and `wvn` flag
    /// reset to that method's defaults.
    pub fn with_method(&self, method: Method, gamma: Option<f64>) -> Self {
        let mut c = self.clone();
        c.method = method;
        c.loss = None;
        c.train.wvn = false;
        c.gamma = gamma;
        c
    }

    /// Checks cross-field consistency; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config(
                "version",
                format!("unsupported version {}, expected {CONFIG_VERSION}", self.version),
            ));
        }
        if let DataSource::Synthetic(d) = self.data {
            let checks: [(&str, bool, &str); 8] = [
                ("data.num_classes", d.num_classes >= 2, "must be >= 2"),
                ("data.per_class", d.per_class >= 1, "must be >= 1"),
                ("data.test_per_class", d.test_per_class >= 1, "must be >= 1"),
                ("data.input_dim", d.input_dim >= 2, "must be >= 2"),
                (
                    "data.class_separation",
                    d.class_separation.is_finite() && d.class_separation >= 0.0,
                    "must be finite and >= 0",
                ),
                (
                    "data.noise_scale",
                    d.noise_scale.is_finite() && d.noise_scale >= 0.0,
                    "must be finite and >= 0",
                ),
                ("data.modes_per_class", d.modes_per_class >= 1, "must be >= 1"),
                (
                    "data.mode_spread",
                    d.mode_spread.is_finite() && d.mode_spread >= 0.0,
                    "must be finite and >= 0",
                ),
            ];
            if let Some((key, _, msg)) = checks.iter().find(|c| !c.1) {
                return Err(Error::config(*key, *msg));
            }
        }
        let ratio = self.imbalance.ratio;
        if !ratio.is_finite() || ratio < 1.0 {
            return Err(Error::config("imbalance.ratio", format!("must be finite and >= 1, got {ratio}")));
        }
        if let Some(i) = self.model.hidden.iter().position(|&w| w == 0) {
            return Err(Error::config(format!("model.hidden[{i}]"), "layer width must be >= 1"));
        }
        if self.model.feature_dim == 0 {
            return Err(Error::config("model.feature_dim", "must be >= 1"));
        }
        if let Some(loss) = self.loss {
            let expected = self.method.default_loss();
            if std::mem::discriminant(&loss) != std::mem::discriminant(&expected) {
                return Err(Error::config(
                    "loss.kind",
                    format!("method `{}` trains with {:?}, not {:?}", self.method, expected, loss),
                ));
            }
            loss.validate().map_err(|e| Error::config("loss", e.to_string()))?;
        }
        if self.train.wvn && !matches!(self.method, Method::WvnRs) {
            return Err(Error::config(
                "train.wvn",
                format!("weight vector normalization belongs to `wvn_rs`, not `{}`", self.method),
            ));
        }
        self.train_config().validate().map_err(|e| {
            // Core messages lead with the field name.
            let msg = match e {
                skewbench_core::Error::InvalidArgument(m) => m,
                other => other.to_string(),
            };
            let field = msg.split_whitespace().next().unwrap_or_default();
            Error::config(format!("train.{field}"), msg.clone())
        })?;
        match (self.method.rescales(), self.gamma) {
            (true, None) => {
                return Err(Error::config("gamma", format!("required by method `{}`", self.method)));
            }
            (_, Some(g)) if !g.is_finite() || g < 0.0 => {
                return Err(Error::config("gamma", format!("must be finite and >= 0, got {g}")));
            }
            _ => {}
        }
        self.gamma_grid.validate().map_err(|m| Error::config("gamma_grid", m))?;
        let o = &self.oracle;
        if !(o.learning_rate.is_finite() && o.learning_rate >= 0.0) {
            return Err(Error::config("oracle.learning_rate", "must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&o.momentum) {
            return Err(Error::config("oracle.momentum", "must lie in [0, 1)"));
        }
        if !(o.weight_decay.is_finite() && o.weight_decay >= 0.0) {
            return Err(Error::config("oracle.weight_decay", "must be finite and >= 0"));
        }
        if o.batch_size == Some(0) {
            return Err(Error::config("oracle.batch_size", "must be >= 1"));
        }
        Ok(())
    }
}

pub const PRESETS: [&str; 3] = ["synthetic-lt100", "synthetic-step10", "paper-cifar-schedule"];

fn desk_data() -> DataSource {
    DataSource::Synthetic(SyntheticSource {
        num_classes: 10,
        per_class: 500,
        test_per_class: 200,
        input_dim: 64,
        class_separation: 3.0,
        noise_scale: 0.5,
        modes_per_class: 1,
        mode_spread: 0.0,
    })
}

fn desk_train() -> TrainSection {
    TrainSection {
        learning_rate: 0.05,
        momentum: 0.9,
        weight_decay: 5e-4,
        epochs: 40,
        batch_size: 64,
        decay_epochs: vec![26],
        decay_factor: 0.1,
        wvn: false,
    }
}

/// Built-in experiment presets, also shipped as JSON under `configs/`.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let base = ExperimentConfig {
        version: CONFIG_VERSION,
        seed: 7,
        method: Method::Baseline,
        data: desk_data(),
        imbalance: ImbalanceConfig {
            kind: ImbalanceKind::LongTailed,
            ratio: 100.0,
        },
        model: ModelDims {
            hidden: vec![64],
            feature_dim: 32,
        },
        loss: None,
        train: desk_train(),
        gamma: None,
        gamma_grid: GammaGrid::default(),
        oracle: OracleConfig::default(),
        out_dir: PathBuf::from("runs").join(name),
    };
    match name {
        "synthetic-lt100" => Some(base),
        "synthetic-step10" => Some(ExperimentConfig {
            method: Method::WvnRs,
            imbalance: ImbalanceConfig {
                kind: ImbalanceKind::Step,
                ratio: 10.0,
            },
            gamma: Some(0.1),
            ..base
        }),
        "paper-cifar-schedule" => Some(ExperimentConfig {
            train: TrainSection {
                learning_rate: 0.1,
                epochs: 180,
                decay_epochs: vec![80, 150],
                decay_factor: 0.1,
                ..desk_train()
            },
            ..base
        }),
        _ => None,
    }
}
