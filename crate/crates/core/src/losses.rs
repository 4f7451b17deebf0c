//! Cross-entropy and the per-sample weighting schemes used by the baseline
//! methods (inverse-frequency re-weighting, focal loss, class-balanced loss).

use alloc::format;
use alloc::vec::Vec;

use crate::model::ForwardRecord;
use crate::numerics::cross_entropy;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum LossSpec {
    PlainCe,
    ReweightedCe,
    Focal { gamma: f64 },
    ClassBalancedCe { beta: f64 },
}

pub const DEFAULT_CB_BETA: f64 = 0.999;

impl LossSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LossSpec::Focal { gamma } if !(gamma >= 0.0) || !gamma.is_finite() => Err(
                Error::invalid(format!("focal exponent must be finite and >= 0, got {gamma}")),
            ),
            LossSpec::ClassBalancedCe { beta } if !(0.0..1.0).contains(&beta) => Err(
                Error::invalid(format!("class-balanced beta must lie in [0, 1), got {beta}")),
            ),
            _ => Ok(()),
        }
    }
}

fn check_counts(counts: &[usize]) -> Result<()> {
    if counts.is_empty() || counts.contains(&0) {
        return Err(Error::invalid("class counts must all be >= 1"));
    }
    Ok(())
}

/// Per-class weights before normalisation: `1`, `1/n_j`, or
/// `(1 - β) / (1 - β^n_j)`.
pub fn raw_class_weights(spec: &LossSpec, counts: &[usize]) -> Result<Vec<f64>> {
    spec.validate()?;
    check_counts(counts)?;
    Ok(counts
        .iter()
        .map(|&n| match *spec {
            LossSpec::PlainCe | LossSpec::Focal { .. } => 1.0,
            LossSpec::ReweightedCe => 1.0 / n as f64,
            LossSpec::ClassBalancedCe { beta } => {
                (1.0 - beta) / (1.0 - libm::pow(beta, n as f64))
            }
        })
        .collect())
}

/// Per-class weights scaled so that `Σ_j n_j w_j / N = 1`.
pub fn class_weights(spec: &LossSpec, counts: &[usize]) -> Result<Vec<f64>> {
    let raw = raw_class_weights(spec, counts)?;
    let total: usize = counts.iter().sum();
    let mass: f64 = raw.iter().zip(counts).map(|(w, &n)| w * n as f64).sum();
    let scale = total as f64 / mass;
    Ok(raw.into_iter().map(|w| w * scale).collect())
}

pub fn sample_weight(spec: &LossSpec, class: usize, counts: &[usize]) -> Result<f64> {
    class_weights(spec, counts)?
        .get(class)
        .copied()
        .ok_or_else(|| Error::invalid(format!("class {class} out of range")))
}

/// `(1 - p_y)^γ · (-ln p_y)`.
pub fn focal_term(p: &[f64], class: usize, gamma: f64) -> Result<f64> {
    let ce = cross_entropy(p, class)?;
    if gamma == 0.0 {
        return Ok(ce);
    }
    Ok(libm::pow(1.0 - p[class], gamma) * ce)
}

/// `∂ℓ/∂logits` of the focal term, given `p = softmax(logits)`.
fn focal_logit_grad(p: &[f64], class: usize, gamma: f64, out: &mut [f64]) {
    let py = p[class];
    let q = 1.0 - py;
    // p_y · ∂ℓ/∂p_y, whose product with (δ_yk − p_k) is ∂ℓ/∂z_k.
    let pressure = if gamma == 0.0 {
        -1.0
    } else {
        let radial = if q > 0.0 {
            -gamma * libm::pow(q, gamma - 1.0) * py * -libm::log(py)
        } else {
            0.0
        };
        radial - libm::pow(q, gamma)
    };
    for (k, o) in out.iter_mut().enumerate() {
        let delta = if k == class { 1.0 } else { 0.0 };
        *o = pressure * (delta - p[k]);
    }
}

/// Loss value and `∂L/∂logits` per sample for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    pub value: f64,
    pub logit_grads: Vec<Vec<f64>>,
}

/// A loss specification bound to the training class counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    spec: LossSpec,
    class_weights: Vec<f64>,
}

impl Objective {
    pub fn new(spec: LossSpec, counts: &[usize]) -> Result<Self> {
        Ok(Objective {
            class_weights: class_weights(&spec, counts)?,
            spec,
        })
    }

    pub fn spec(&self) -> &LossSpec {
        &self.spec
    }

    pub fn class_weights(&self) -> &[f64] {
        &self.class_weights
    }

    pub fn term(&self, probs: &[f64], class: usize) -> Result<f64> {
        match self.spec {
            LossSpec::Focal { gamma } => focal_term(probs, class, gamma),
            _ => cross_entropy(probs, class),
        }
    }

    /// `Σ w_i ℓ_i / Σ w_i` over the batch, with its logit gradients.
    pub fn batch(&self, records: &[ForwardRecord], labels: &[usize]) -> Result<BatchLoss> {
        if records.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} records but {} labels",
                records.len(),
                labels.len()
            )));
        }
        if records.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let mut weights = Vec::with_capacity(labels.len());
        for &y in labels {
            weights.push(*self.class_weights.get(y).ok_or_else(|| {
                Error::invalid(format!("label {y} out of range"))
            })?);
        }
        let total: f64 = weights.iter().sum();
        let mut value = 0.0;
        let mut logit_grads = Vec::with_capacity(records.len());
        for ((rec, &y), &w) in records.iter().zip(labels).zip(&weights) {
            value += w * self.term(&rec.probs, y)?;
            let mut g = alloc::vec![0.0; rec.probs.len()];
            match self.spec {
                LossSpec::Focal { gamma } => focal_logit_grad(&rec.probs, y, gamma, &mut g),
                _ => {
                    g.copy_from_slice(&rec.probs);
                    g[y] -= 1.0;
                }
            }
            let scale = w / total;
            g.iter_mut().for_each(|v| *v *= scale);
            logit_grads.push(g);
        }
        Ok(BatchLoss {
            value: value / total,
            logit_grads,
        })
    }
}
