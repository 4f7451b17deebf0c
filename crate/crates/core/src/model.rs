//! MLP feature extractor with a ReLU after every layer, followed by a
//! bias-free linear classifier.
//!
//! The classifier is stored with one row per class, so row `k` is the weight
//! vector `w_k` and the logit of class `k` is `w_k · f(x)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::numerics::{dot, softmax_into, Matrix};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Shape `out × in`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    layers: Vec<Layer>,
    classifier: Matrix,
}

/// Everything a forward pass computes for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardRecord {
    /// `activations[0]` is the input; `activations[l + 1] = relu(pre[l])`.
    pub activations: Vec<Vec<f64>>,
    pub pre_activations: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ForwardRecord {
    /// The feature vector `f(x)`.
    pub fn feature(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn predicted(&self) -> usize {
        argmax(&self.logits)
    }
}

/// Parameter gradients, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
    pub classifier: Matrix,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
            classifier: Matrix::zeros(model.classifier.rows(), model.classifier.cols()),
        }
    }

    /// Flat parameter blocks, in the same order as [`Model::blocks`].
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 1);
        for l in &self.layers {
            out.push(l.weight.as_slice());
            out.push(l.bias.as_slice());
        }
        out.push(self.classifier.as_slice());
        out
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

impl Model {
    /// Random model with weights drawn from `N(0, 1/fan_in)` and zero biases.
    ///
    /// The extractor maps `input_dim → hidden[0] → … → feature_dim`.
    pub fn init(
        input_dim: usize,
        hidden: &[usize],
        feature_dim: usize,
        num_classes: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input_dim);
        widths.extend_from_slice(hidden);
        widths.push(feature_dim);
        if widths.contains(&0) || num_classes == 0 {
            return Err(Error::invalid(format!(
                "all widths must be >= 1 (widths {widths:?}, classes {num_classes})"
            )));
        }
        let mut rng = rng::stream(seed, "init");
        let mut gaussian = |rows: usize, cols: usize| {
            let scale = 1.0 / libm::sqrt(cols as f64);
            let data = (0..rows * cols)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            Matrix::from_vec(rows, cols, data)
        };
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for w in widths.windows(2) {
            layers.push(Layer {
                weight: gaussian(w[1], w[0])?,
                bias: vec![0.0; w[1]],
            });
        }
        let classifier = gaussian(num_classes, feature_dim)?;
        Ok(Model { layers, classifier })
    }

    /// Assembles a model from explicit parameters, checking that shapes chain.
    pub fn from_parts(layers: Vec<Layer>, classifier: Matrix) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("the extractor needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weight.rows() == 0 || l.weight.cols() == 0 || l.bias.len() != l.weight.rows() {
                return Err(Error::invalid(format!("layer {i} has inconsistent shape")));
            }
            crate::numerics::ensure_finite(&l.bias)?;
            if i > 0 && layers[i - 1].weight.rows() != l.weight.cols() {
                return Err(Error::invalid(format!(
                    "layer {i} expects {} inputs but layer {} produces {}",
                    l.weight.cols(),
                    i - 1,
                    layers[i - 1].weight.rows()
                )));
            }
        }
        let feature_dim = layers[layers.len() - 1].weight.rows();
        if classifier.cols() != feature_dim || classifier.rows() == 0 {
            return Err(Error::invalid(format!(
                "classifier is {}x{}, features have dimension {feature_dim}",
                classifier.rows(),
                classifier.cols()
            )));
        }
        Ok(Model { layers, classifier })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn feature_dim(&self) -> usize {
        self.classifier.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.rows()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn classifier(&self) -> &Matrix {
        &self.classifier
    }

    pub fn classifier_mut(&mut self) -> &mut Matrix {
        &mut self.classifier
    }

    pub fn set_classifier(&mut self, classifier: Matrix) -> Result<()> {
        if classifier.rows() != self.classifier.rows() || classifier.cols() != self.classifier.cols()
        {
            return Err(Error::invalid("classifier shape mismatch"));
        }
        self.classifier = classifier;
        Ok(())
    }

    /// `w_k`.
    pub fn weight_vector(&self, k: usize) -> &[f64] {
        self.classifier.row(k)
    }

    /// Norms of every weight vector.
    pub fn weight_norms(&self) -> Vec<f64> {
        self.classifier
            .iter_rows()
            .map(crate::numerics::norm)
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    /// Flat parameter blocks: each layer's weight then bias, then the
    /// classifier.
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 1);
        for l in &self.layers {
            out.push(l.weight.as_slice());
            out.push(l.bias.as_slice());
        }
        out.push(self.classifier.as_slice());
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 1);
        for l in &mut self.layers {
            out.push(l.weight.as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        out.push(self.classifier.as_mut_slice());
        out
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "input has length {}, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        crate::numerics::ensure_finite(x)
    }

    /// `f(x)` alone.
    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        for l in &self.layers {
            let mut z = l.bias.clone();
            for (zi, row) in z.iter_mut().zip(l.weight.iter_rows()) {
                *zi = (*zi + dot(row, &a)).max(0.0);
            }
            a = z;
        }
        Ok(a)
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardRecord> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        activations.push(x.to_vec());
        for l in &self.layers {
            let prev = &activations[activations.len() - 1];
            let mut z = vec![0.0; l.weight.rows()];
            l.weight.mul_vec_into(prev, &mut z);
            z.iter_mut().zip(&l.bias).for_each(|(zi, b)| *zi += b);
            let a = z.iter().map(|&v| v.max(0.0)).collect();
            pre_activations.push(z);
            activations.push(a);
        }
        let logits = logits_with(&self.classifier, &activations[activations.len() - 1]);
        let mut probs = vec![0.0; logits.len()];
        softmax_into(&logits, &mut probs);
        Ok(ForwardRecord {
            activations,
            pre_activations,
            logits,
            probs,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&logits_with(&self.classifier, &self.features(x)?)))
    }

    /// Accumulates parameter gradients given `∂L/∂logits` for each record.
    pub fn backward_from_logit_grads(
        &self,
        records: &[ForwardRecord],
        logit_grads: &[Vec<f64>],
    ) -> Result<Gradients> {
        if records.is_empty() {
            return Err(Error::invalid("backward pass over an empty batch"));
        }
        if records.len() != logit_grads.len() {
            return Err(Error::invalid(format!(
                "{} records but {} logit gradients",
                records.len(),
                logit_grads.len()
            )));
        }
        let mut grads = Gradients::zeros_like(self);
        let k = self.num_classes();
        for (rec, g) in records.iter().zip(logit_grads) {
            if g.len() != k {
                return Err(Error::invalid("logit gradient has the wrong length"));
            }
            let feature = rec.feature();
            // dL/dW rows and dL/df.
            let mut delta = vec![0.0; self.feature_dim()];
            for (c, &gc) in g.iter().enumerate() {
                if gc == 0.0 {
                    continue;
                }
                let grad_row = grads.classifier.row_mut(c);
                for (gw, &f) in grad_row.iter_mut().zip(feature) {
                    *gw += gc * f;
                }
                for (d, &w) in delta.iter_mut().zip(self.classifier.row(c)) {
                    *d += gc * w;
                }
            }
            for li in (0..self.layers.len()).rev() {
                let pre = &rec.pre_activations[li];
                delta.iter_mut().zip(pre).for_each(|(d, &z)| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                let input = &rec.activations[li];
                let gl = &mut grads.layers[li];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    gl.bias[o] += d;
                    for (gw, &a) in gl.weight.row_mut(o).iter_mut().zip(input) {
                        *gw += d * a;
                    }
                }
                if li > 0 {
                    let w = &self.layers[li].weight;
                    let mut next = vec![0.0; w.cols()];
                    for (o, &d) in delta.iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        for (n, &wv) in next.iter_mut().zip(w.row(o)) {
                            *n += d * wv;
                        }
                    }
                    delta = next;
                }
            }
        }
        Ok(grads)
    }

    /// Weighted mean cross-entropy `Σ w_i ℓ_i / Σ w_i` over a batch and its
    /// gradient with respect to every parameter.
    pub fn backward(
        &self,
        inputs: &[&[f64]],
        labels: &[usize],
        sample_weights: Option<&[f64]>,
    ) -> Result<(f64, Gradients)> {
        if inputs.is_empty() {
            return Err(Error::invalid("backward pass over an empty batch"));
        }
        if inputs.len() != labels.len() || sample_weights.is_some_and(|w| w.len() != labels.len())
        {
            return Err(Error::invalid("batch inputs, labels and weights differ in length"));
        }
        let ones = vec![1.0; labels.len()];
        let weights = sample_weights.unwrap_or(&ones);
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("sample weights must sum to a positive value"));
        }
        let mut loss = 0.0;
        let mut records = Vec::with_capacity(inputs.len());
        let mut logit_grads = Vec::with_capacity(inputs.len());
        for ((x, &y), &w) in inputs.iter().zip(labels).zip(weights) {
            let rec = self.forward(x)?;
            loss += w * crate::numerics::cross_entropy(&rec.probs, y)?;
            let mut g: Vec<f64> = rec.probs.iter().map(|p| w / total * p).collect();
            g[y] -= w / total;
            records.push(rec);
            logit_grads.push(g);
        }
        let grads = self.backward_from_logit_grads(&records, &logit_grads)?;
        Ok((loss / total, grads))
    }
}

/// Logits `W f` for an arbitrary classifier matrix.
pub fn logits_with(classifier: &Matrix, feature: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; classifier.rows()];
    classifier.mul_vec_into(feature, &mut out);
    out
}
