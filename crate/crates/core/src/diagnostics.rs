//! Evaluation and analysis: error metrics, confusion matrices, angular
//! cluster statistics, γ sweeps and the oracle fine-tune.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::boundary::rescale;
use crate::data::Dataset;
use crate::model::{argmax, logits_with, Model};
use crate::numerics::{angle_deg, mean_std, norm, softmax_into, unit_angle_rad, Matrix};
use crate::{Error, Result};

/// Extracted features of a dataset, so the classifier can be varied without
/// re-running the extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Features {
    pub fn extract(model: &Model, dataset: &Dataset) -> Result<Self> {
        if dataset.num_classes() != model.num_classes() {
            return Err(Error::invalid(format!(
                "dataset has {} classes, model {}",
                dataset.num_classes(),
                model.num_classes()
            )));
        }
        let features = dataset
            .iter()
            .map(|(x, _)| model.features(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(Features {
            features,
            labels: dataset.labels().to_vec(),
            num_classes: dataset.num_classes(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub predictions: Vec<usize>,
    pub top1_error: f64,
    pub top5_error: f64,
    pub per_class_error: Vec<f64>,
    /// Mean of the per-class errors over classes present in the data.
    pub balanced_error: f64,
}

/// Evaluates `classifier` on precomputed features.
pub fn evaluate_features(classifier: &Matrix, features: &Features) -> Result<Evaluation> {
    if features.is_empty() {
        return Err(Error::invalid("evaluation on an empty dataset"));
    }
    let k = classifier.rows();
    let top = k.min(5);
    let mut predictions = Vec::with_capacity(features.len());
    let mut wrong = vec![0usize; k];
    let mut seen = vec![0usize; k];
    let mut top5_miss = 0usize;
    for (f, &y) in features.features.iter().zip(&features.labels) {
        let logits = logits_with(classifier, f);
        let pred = argmax(&logits);
        let better = logits.iter().filter(|&&l| l > logits[y]).count();
        top5_miss += usize::from(better >= top);
        seen[y] += 1;
        wrong[y] += usize::from(pred != y);
        predictions.push(pred);
    }
    let n = features.len() as f64;
    let per_class_error: Vec<f64> = wrong
        .iter()
        .zip(&seen)
        .map(|(&w, &s)| if s == 0 { f64::NAN } else { w as f64 / s as f64 })
        .collect();
    let present: Vec<f64> = per_class_error.iter().copied().filter(|e| !e.is_nan()).collect();
    Ok(Evaluation {
        top1_error: wrong.iter().sum::<usize>() as f64 / n,
        top5_error: top5_miss as f64 / n,
        balanced_error: present.iter().sum::<f64>() / present.len() as f64,
        per_class_error,
        predictions,
    })
}

pub fn evaluate(model: &Model, dataset: &Dataset) -> Result<Evaluation> {
    evaluate_features(model.classifier(), &Features::extract(model, dataset)?)
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn from_predictions(num_classes: usize, truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::invalid("truth and predictions differ in length"));
        }
        let mut counts = vec![0; num_classes * num_classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= num_classes || p >= num_classes {
                return Err(Error::invalid(format!("class index out of range ({t}, {p})")));
            }
            counts[t * num_classes + p] += 1;
        }
        Ok(ConfusionMatrix { num_classes, counts })
    }

    /// Row-major counts, `counts[truth * K + predicted]`.
    pub fn from_counts(num_classes: usize, counts: Vec<usize>) -> Result<Self> {
        if counts.len() != num_classes * num_classes {
            return Err(Error::invalid(format!(
                "{} counts for {num_classes} classes",
                counts.len()
            )));
        }
        Ok(ConfusionMatrix { num_classes, counts })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> usize {
        self.counts[truth * self.num_classes + predicted]
    }

    pub fn row(&self, truth: usize) -> &[usize] {
        &self.counts[truth * self.num_classes..(truth + 1) * self.num_classes]
    }

    pub fn row_sums(&self) -> Vec<usize> {
        (0..self.num_classes).map(|t| self.row(t).iter().sum()).collect()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.num_classes).map(|c| self.get(c, c)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }
}

pub fn confusion(model: &Model, test: &Dataset) -> Result<ConfusionMatrix> {
    let eval = evaluate(model, test)?;
    ConfusionMatrix::from_predictions(model.num_classes(), test.labels(), &eval.predictions)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassCluster {
    /// Angular standard deviation (degrees) of train features around their
    /// center.
    pub sigma_train: f64,
    pub sigma_test: f64,
    /// Angle (degrees) between the train and test centers.
    pub center_gap: f64,
    pub train_count: usize,
    pub test_count: usize,
    /// Zero feature vectors left out of the angular statistics.
    pub zero_features: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStats {
    pub classes: Vec<ClassCluster>,
}

/// Center and angular spread of a set of features, after projecting each to
/// the unit sphere. Returns `(center, sigma_deg, zero_count)`.
pub fn angular_cluster(features: &[&[f64]]) -> (Option<Vec<f64>>, f64, usize) {
    let dim = features.first().map_or(0, |f| f.len());
    let mut sum = vec![0.0; dim];
    let mut units = Vec::with_capacity(features.len());
    let mut zeros = 0;
    for f in features {
        let n = norm(f);
        if n == 0.0 {
            zeros += 1;
            continue;
        }
        let u: Vec<f64> = f.iter().map(|v| v / n).collect();
        sum.iter_mut().zip(&u).for_each(|(s, v)| *s += v);
        units.push(u);
    }
    let c_norm = norm(&sum);
    if units.is_empty() || c_norm == 0.0 {
        return (None, f64::NAN, zeros);
    }
    let center: Vec<f64> = sum.iter().map(|v| v / c_norm).collect();
    let angles: Vec<f64> = units
        .iter()
        .map(|u| unit_angle_rad(u, &center).to_degrees())
        .collect();
    (Some(center), mean_std(&angles).1, zeros)
}

/// Per-class angular cluster size on both splits and the train/test center
/// gap.
pub fn cluster_stats(model: &Model, train: &Dataset, test: &Dataset) -> Result<ClusterStats> {
    let tr = Features::extract(model, train)?;
    let te = Features::extract(model, test)?;
    cluster_stats_from_features(&tr, &te)
}

pub fn cluster_stats_from_features(train: &Features, test: &Features) -> Result<ClusterStats> {
    let k = train.num_classes;
    let mut classes = Vec::with_capacity(k);
    for c in 0..k {
        let pick = |fs: &'_ Features| -> Vec<Vec<f64>> {
            fs.features
                .iter()
                .zip(&fs.labels)
                .filter(|(_, &y)| y == c)
                .map(|(f, _)| f.clone())
                .collect()
        };
        let (a, b) = (pick(train), pick(test));
        if a.is_empty() || b.is_empty() {
            return Err(Error::invalid(format!(
                "class {c} is missing from the {} split",
                if a.is_empty() { "train" } else { "test" }
            )));
        }
        let refs_a: Vec<&[f64]> = a.iter().map(Vec::as_slice).collect();
        let refs_b: Vec<&[f64]> = b.iter().map(Vec::as_slice).collect();
        let (center_a, sigma_train, zeros_a) = angular_cluster(&refs_a);
        let (center_b, sigma_test, zeros_b) = angular_cluster(&refs_b);
        if zeros_a + zeros_b > 0 {
            log::warn!("class {c}: {} zero feature vectors excluded", zeros_a + zeros_b);
        }
        let center_gap = match (center_a, center_b) {
            (Some(x), Some(y)) => angle_deg(&x, &y)?,
            _ => f64::NAN,
        };
        classes.push(ClassCluster {
            sigma_train,
            sigma_test,
            center_gap,
            train_count: a.len(),
            test_count: b.len(),
            zero_features: zeros_a + zeros_b,
        });
    }
    Ok(ClusterStats { classes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub gamma: f64,
    pub top1_error: f64,
    pub balanced_error: f64,
    pub per_class_error: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    /// The point with the lowest balanced error (first one on ties).
    pub fn best(&self) -> Option<&SweepPoint> {
        self.points.iter().fold(None, |best: Option<&SweepPoint>, p| match best {
            Some(b) if b.balanced_error <= p.balanced_error => Some(b),
            _ => Some(p),
        })
    }
}

/// Evaluates re-scaled copies of the classifier for every γ in `grid`.
pub fn gamma_sweep(model: &Model, counts: &[usize], test: &Dataset, grid: &[f64]) -> Result<SweepResult> {
    gamma_sweep_features(model.classifier(), counts, &Features::extract(model, test)?, grid)
}

pub fn gamma_sweep_features(
    classifier: &Matrix,
    counts: &[usize],
    test: &Features,
    grid: &[f64],
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::invalid("empty gamma grid"));
    }
    let points = grid
        .iter()
        .map(|&gamma| {
            let scaled = rescale(classifier, counts, gamma)?;
            let eval = evaluate_features(&scaled, test)?;
            Ok(SweepPoint {
                gamma,
                top1_error: eval.top1_error,
                balanced_error: eval.balanced_error,
                per_class_error: eval.per_class_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { points })
}

/// Hyperparameters of the classifier-only fine-tune on test features.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct OracleConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// `None` means full batch.
    pub batch_size: Option<usize>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            epochs: 100,
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 0.0,
            batch_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub error_before: f64,
    pub balanced_error_before: f64,
    pub error: f64,
    pub balanced_error: f64,
    pub classifier: Matrix,
}

/// Fine-tunes the classifier alone on the test features with plain
/// cross-entropy, starting from the current weights. The extractor is only
/// read. The resulting error is a lower bound for what any linear classifier
/// can reach on top of this extractor.
pub fn oracle_finetune(model: &Model, test: &Dataset, config: &OracleConfig) -> Result<OracleResult> {
    let features = Features::extract(model, test)?;
    oracle_finetune_features(model.classifier(), &features, config)
}

pub fn oracle_finetune_features(
    classifier: &Matrix,
    test: &Features,
    config: &OracleConfig,
) -> Result<OracleResult> {
    if test.is_empty() {
        return Err(Error::invalid("oracle fine-tune on an empty test set"));
    }
    if !(config.learning_rate >= 0.0) || !(0.0..1.0).contains(&config.momentum) {
        return Err(Error::invalid("oracle learning rate must be >= 0 and momentum in [0, 1)"));
    }
    let before = evaluate_features(classifier, test)?;
    let mut w = classifier.clone();
    let mut velocity = vec![0.0; w.as_slice().len()];
    let batch = config.batch_size.unwrap_or(test.len()).max(1);
    let (k, d) = (w.rows(), w.cols());
    let mut probs = vec![0.0; k];
    let mut grad = vec![0.0; k * d];
    for _ in 0..config.epochs {
        for start in (0..test.len()).step_by(batch) {
            let end = (start + batch).min(test.len());
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / (end - start) as f64;
            for i in start..end {
                let f = &test.features[i];
                let logits = logits_with(&w, f);
                softmax_into(&logits, &mut probs);
                probs[test.labels[i]] -= 1.0;
                for (c, &pc) in probs.iter().enumerate() {
                    for (g, &fv) in grad[c * d..(c + 1) * d].iter_mut().zip(f) {
                        *g += scale * pc * fv;
                    }
                }
            }
            for ((p, g), v) in w.as_mut_slice().iter_mut().zip(&grad).zip(&mut velocity) {
                *v = config.momentum * *v + g + config.weight_decay * *p;
                *p -= config.learning_rate * *v;
            }
        }
    }
    let after = evaluate_features(&w, test)?;
    Ok(OracleResult {
        error_before: before.top1_error,
        balanced_error_before: before.balanced_error,
        error: after.top1_error,
        balanced_error: after.balanced_error,
        classifier: w,
    })
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // Ties share the mean of their positions.
        for &k in &order[i..=j] {
            out[k] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties. `None` when the
/// lengths differ, fewer than two points are given, or either side is
/// constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / libm::sqrt(va * vb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use crate::model::Layer;

    fn identity_model(classifier: Matrix) -> Model {
        let d = classifier.cols();
        let layer = Layer {
            weight: Matrix::identity(d),
            bias: vec![0.0; d],
        };
        Model::from_parts(vec![layer], classifier).unwrap()
    }

    #[test]
    fn confusion_examples() {
        let m = identity_model(Matrix::identity(3));
        let test = Dataset::new(
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.2, 0.9, 0.1],
            vec![0, 1, 2, 0],
            3,
            3,
            Split::Test,
        )
        .unwrap();
        let cm = confusion(&m, &test).unwrap();
        // Hand-checked: the last sample (class 0) is predicted as 1.
        assert_eq!(cm.row(0), &[1, 1, 0]);
        assert_eq!(cm.row(1), &[0, 1, 0]);
        assert_eq!(cm.row(2), &[0, 0, 1]);
        assert_eq!(cm.row_sums(), test.class_counts());
        assert!((cm.accuracy() - 0.75).abs() < 1e-15);

        let perfect = Dataset::new(
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            vec![0, 1, 2],
            3,
            3,
            Split::Test,
        )
        .unwrap();
        let cm = confusion(&m, &perfect).unwrap();
        assert_eq!(cm.trace(), 3);

        // Always class 0.
        let constant = identity_model(Matrix::from_vec(3, 3, vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap());
        let cm = confusion(&constant, &perfect).unwrap();
        for t in 0..3 {
            assert_eq!(cm.row(t), &[1, 0, 0]);
        }
    }

    #[test]
    fn top5_and_balanced_error() {
        let feats = Features {
            features: vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            labels: vec![0, 1, 1],
            num_classes: 2,
        };
        let e = evaluate_features(&Matrix::identity(2), &feats).unwrap();
        assert!((e.top1_error - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.top5_error, 0.0);
        assert_eq!(e.per_class_error, vec![0.0, 0.5]);
        assert_eq!(e.balanced_error, 0.25);
    }

    #[test]
    fn cluster_examples() {
        let same: Vec<&[f64]> = vec![&[1.0, 2.0], &[2.0, 4.0], &[0.5, 1.0]];
        let (c, s, z) = angular_cluster(&same);
        assert!(s.abs() < 1e-6);
        assert_eq!(z, 0);
        assert!(angle_deg(&c.unwrap(), &[1.0, 2.0]).unwrap() < 1e-6);

        let ortho: Vec<&[f64]> = vec![&[1.0, 0.0], &[0.0, 1.0]];
        let (c, s, _) = angular_cluster(&ortho);
        assert!(angle_deg(&c.unwrap(), &[1.0, 1.0]).unwrap() < 1e-6);
        assert!(s.abs() < 1e-12);

        // Angles 45, 45, 0 about the bisector: population std = sqrt(450).
        let three: Vec<&[f64]> = vec![&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]];
        let (_, s, _) = angular_cluster(&three);
        assert!((s - 21.213_203_435_596_427).abs() < 1e-9);

        let with_zero: Vec<&[f64]> = vec![&[1.0, 0.0], &[0.0, 0.0]];
        let (_, s, z) = angular_cluster(&with_zero);
        assert_eq!((s, z), (0.0, 1));
    }

    #[test]
    fn cluster_stats_identical_splits() {
        let m = identity_model(Matrix::identity(2));
        let d = Dataset::new(vec![1.0, 0.1, 1.0, 0.1, 0.2, 3.0], vec![0, 0, 1], 2, 2, Split::Train).unwrap();
        let stats = cluster_stats(&m, &d, &d.clone().with_split(Split::Test)).unwrap();
        for c in &stats.classes {
            assert!(c.sigma_train.abs() < 1e-6 && c.sigma_test.abs() < 1e-6);
            assert!(c.center_gap.abs() < 1e-6);
        }
        let missing = Dataset::new(vec![1.0, 0.1], vec![0], 2, 2, Split::Test).unwrap();
        assert!(cluster_stats(&m, &d, &missing).is_err());
    }

    fn toy() -> (Model, Dataset) {
        let m = identity_model(Matrix::from_vec(2, 2, vec![3.0, 0.0, 0.0, 1.0]).unwrap());
        let test = Dataset::new(
            vec![1.0, 0.5, 0.5, 1.0, 0.2, 0.8, 0.9, 0.1],
            vec![0, 1, 1, 0],
            2,
            2,
            Split::Test,
        )
        .unwrap();
        (m, test)
    }

    #[test]
    fn sweep_at_zero_matches_baseline() {
        let (m, test) = toy();
        let base = evaluate(&m, &test).unwrap();
        let s = gamma_sweep(&m, &[100, 1], &test, &[0.0]).unwrap();
        assert_eq!(s.points[0].top1_error, base.top1_error);
        assert_eq!(s, gamma_sweep(&m, &[100, 1], &test, &[0.0]).unwrap());
        assert!(gamma_sweep(&m, &[100, 1], &test, &[]).is_err());
        // Larger γ lifts the rare class.
        let s = gamma_sweep(&m, &[100, 1], &test, &[0.0, 0.5]).unwrap();
        assert!(s.points[1].per_class_error[1] <= s.points[0].per_class_error[1]);
    }

    #[test]
    fn oracle_reaches_zero_on_separable_features() {
        let (m, test) = toy();
        let cfg = OracleConfig {
            epochs: 500,
            learning_rate: 0.5,
            ..OracleConfig::default()
        };
        let r = oracle_finetune(&m, &test, &cfg).unwrap();
        assert!(r.error_before > 0.0);
        assert_eq!(r.error, 0.0);
        let zero = OracleConfig { epochs: 0, ..cfg };
        let r = oracle_finetune(&m, &test, &zero).unwrap();
        assert_eq!(r.error, r.error_before);
        assert_eq!(&r.classifier, m.classifier());
    }

    #[test]
    fn spearman_examples() {
        let counts = [500.0, 300.0, 180.0, 5.0];
        assert_eq!(spearman(&counts, &[4.0, 3.0, 2.0, 1.0]), Some(1.0));
        assert_eq!(spearman(&counts, &[1.0, 2.0, 3.0, 9.0]), Some(-1.0));
        assert_eq!(spearman(&counts, &[1.0, 1.0, 1.0, 1.0]), None);
        // Ranks (0.5, 0.5, 2, 3) against (0, 1, 2, 3).
        let r = spearman(&[1.0, 1.0, 2.0, 3.0], &[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!((r - 4.5 / (4.5f64 * 5.0).sqrt()).abs() < 1e-12);
    }
}
