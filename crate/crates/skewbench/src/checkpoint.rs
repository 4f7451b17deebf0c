//! JSON checkpoints.
//!
//! Reals use serde_json's shortest round-trip formatting and are parsed with
//! correct rounding, so a save/load cycle is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};
use skewbench_core::boundary::rescale;
use skewbench_core::model::{Layer, Model};
use skewbench_core::numerics::Matrix;

use crate::config::{ExperimentConfig, Method};
use crate::error::{Error, Result};
use crate::fsio::{read_json, write_json};

pub const CHECKPOINT_FORMAT: &str = "skewbench-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub feature: usize,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerParams {
    /// `out` rows of `in` weights.
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub dims: Dims,
    pub layers: Vec<LayerParams>,
    /// One weight vector per class.
    pub classifier: Vec<Vec<f64>>,
    /// Per-class counts of the set the model was trained on.
    pub class_counts: Vec<usize>,
    pub method: Method,
    /// Total re-scaling exponent applied so far; exponents add up.
    pub gamma: f64,
    pub seed: u64,
    pub config: ExperimentConfig,
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.iter_rows().map(<[f64]>::to_vec).collect()
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    Matrix::from_rows(rows).map_err(|e| Error::Mismatch(format!("{what}: {e}")))
}

impl Checkpoint {
    pub fn new(model: &Model, class_counts: &[usize], gamma: f64, config: &ExperimentConfig) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            dims: Dims {
                input: model.input_dim(),
                hidden: model.layers()[..model.layers().len() - 1]
                    .iter()
                    .map(|l| l.bias.len())
                    .collect(),
                feature: model.feature_dim(),
                classes: model.num_classes(),
            },
            layers: model
                .layers()
                .iter()
                .map(|l| LayerParams {
                    weight: rows_of(&l.weight),
                    bias: l.bias.clone(),
                })
                .collect(),
            classifier: rows_of(model.classifier()),
            class_counts: class_counts.to_vec(),
            method: config.method,
            gamma,
            seed: config.seed,
            config: config.clone(),
        }
    }

    /// Rebuilds the model, checking every declared dimension.
    pub fn model(&self) -> Result<Model> {
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                Ok(Layer {
                    weight: matrix(&l.weight, &format!("layer {i} weight"))?,
                    bias: l.bias.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let model = Model::from_parts(layers, matrix(&self.classifier, "classifier")?)
            .map_err(|e| Error::Mismatch(e.to_string()))?;
        let dims = Dims {
            input: model.input_dim(),
            hidden: model.layers()[..model.layers().len() - 1]
                .iter()
                .map(|l| l.bias.len())
                .collect(),
            feature: model.feature_dim(),
            classes: model.num_classes(),
        };
        if dims != self.dims {
            return Err(Error::Mismatch(format!(
                "declared dims {:?} but parameters have {:?}",
                self.dims, dims
            )));
        }
        if self.class_counts.len() != dims.classes {
            return Err(Error::Mismatch(format!(
                "{} class counts for {} classes",
                self.class_counts.len(),
                dims.classes
            )));
        }
        Ok(model)
    }

    /// A copy with every weight vector multiplied by `(n_max / n_i)^gamma`.
    pub fn rescaled(&self, gamma: f64) -> Result<Checkpoint> {
        let model = self.model()?;
        let w = rescale(model.classifier(), &self.class_counts, gamma)?;
        let mut out = self.clone();
        out.classifier = rows_of(&w);
        out.gamma = self.gamma + gamma;
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let c: Checkpoint = read_json(path)?;
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(Error::malformed(
                path,
                format!("not a version {CHECKPOINT_VERSION} {CHECKPOINT_FORMAT}"),
            ));
        }
        c.model().map_err(|e| match e {
            Error::Mismatch(m) => Error::malformed(path, m),
            other => other,
        })?;
        Ok(c)
    }
}
