//! Weight re-scaling and the geometry of the decision boundaries of a
//! bias-free linear classifier.
//!
//! Between classes `i` and `j` the boundary is the set of features where
//! `‖w_i‖ cos θ_i = ‖w_j‖ cos θ_j`. Lengthening `w_i` pushes the boundary away
//! from `w_i`, enlarging the region assigned to class `i`. Re-scaling every
//! `w_i` by `(n_max / n_i)^γ` therefore hands feature-space volume back to
//! the rare classes after training.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::data::Dataset;
use crate::model::Model;
use crate::numerics::{dot, norm, Matrix};
use crate::{Error, Result};

/// Re-scaling parameters: the exponent and the training class counts.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RescaleSpec {
    pub gamma: f64,
    pub class_counts: Vec<usize>,
}

impl RescaleSpec {
    pub fn new(gamma: f64, class_counts: &[usize]) -> Self {
        RescaleSpec {
            gamma,
            class_counts: class_counts.to_vec(),
        }
    }

    pub fn factors(&self) -> Result<Vec<f64>> {
        rescale_factors(&self.class_counts, self.gamma)
    }

    pub fn apply(&self, classifier: &Matrix) -> Result<Matrix> {
        rescale(classifier, &self.class_counts, self.gamma)
    }
}

/// `(n_max / n_i)^γ` for every class.
pub fn rescale_factors(counts: &[usize], gamma: f64) -> Result<Vec<f64>> {
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::invalid(format!("gamma must be finite and >= 0, got {gamma}")));
    }
    if counts.is_empty() || counts.contains(&0) {
        return Err(Error::invalid("re-scaling needs positive class counts"));
    }
    let n_max = counts.iter().copied().max().unwrap_or(1) as f64;
    Ok(counts
        .iter()
        .map(|&n| libm::pow(n_max / n as f64, gamma))
        .collect())
}

/// Multiplies weight vector `i` by `(n_max / n_i)^γ`. `γ = 0` returns an exact
/// copy.
pub fn rescale(classifier: &Matrix, counts: &[usize], gamma: f64) -> Result<Matrix> {
    if counts.len() != classifier.rows() {
        return Err(Error::invalid(format!(
            "{} class counts for {} weight vectors",
            counts.len(),
            classifier.rows()
        )));
    }
    let factors = rescale_factors(counts, gamma)?;
    let mut out = classifier.clone();
    if gamma == 0.0 {
        return Ok(out);
    }
    for (k, f) in factors.into_iter().enumerate() {
        out.row_mut(k).iter_mut().for_each(|v| *v *= f);
    }
    Ok(out)
}

/// `(w_i − w_j) · f / ‖f‖`, i.e. `‖w_i‖ cos θ_i − ‖w_j‖ cos θ_j`. Positive on
/// class `i`'s side of the pairwise boundary.
pub fn boundary_residual(w_i: &[f64], w_j: &[f64], feature: &[f64]) -> Result<f64> {
    if w_i.len() != w_j.len() || w_i.len() != feature.len() {
        return Err(Error::invalid("weight vectors and feature differ in length"));
    }
    let f_norm = norm(feature);
    if f_norm == 0.0 {
        return Err(Error::invalid("boundary residual of a zero feature"));
    }
    Ok((dot(w_i, feature) - dot(w_j, feature)) / f_norm)
}

/// Angle in degrees, measured from `w_i` towards `w_j`, of the boundary ray
/// lying between two 2-D weight vectors. Found by bisection on the residual.
pub fn boundary_angle_2d(w_i: &[f64], w_j: &[f64]) -> Result<f64> {
    if w_i.len() != 2 || w_j.len() != 2 {
        return Err(Error::invalid("boundary_angle_2d works on 2-D weight vectors"));
    }
    let (n_i, n_j) = (norm(w_i), norm(w_j));
    if n_i == 0.0 || n_j == 0.0 {
        return Err(Error::invalid("zero weight vector"));
    }
    let a_i = libm::atan2(w_i[1], w_i[0]);
    let mut span = libm::atan2(w_j[1], w_j[0]) - a_i;
    if span > PI {
        span -= 2.0 * PI;
    } else if span <= -PI {
        span += 2.0 * PI;
    }
    let cross = w_i[0] * w_j[1] - w_i[1] * w_j[0];
    if cross.abs() <= 1e-12 * n_i * n_j {
        return Err(Error::DegenerateGeometry(
            "weight vectors are parallel; no boundary ray lies between them".into(),
        ));
    }
    let residual = |t: f64| {
        let u = [libm::cos(a_i + t), libm::sin(a_i + t)];
        dot(w_i, &u) - dot(w_j, &u)
    };
    let (mut lo, mut hi) = (0.0f64, span);
    let (mut r_lo, r_hi) = (residual(lo), residual(hi));
    if r_lo == 0.0 {
        return Ok(0.0);
    }
    if r_hi == 0.0 {
        return Ok(span.abs().to_degrees());
    }
    if (r_lo > 0.0) == (r_hi > 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "one class dominates the whole sector between the vectors (norms {n_i} and {n_j})"
        )));
    }
    // Bisect down to adjacent doubles.
    loop {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let r = residual(mid);
        if r == 0.0 {
            return Ok(mid.abs().to_degrees());
        }
        if (r > 0.0) == (r_lo > 0.0) {
            lo = mid;
            r_lo = r;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).abs().to_degrees())
}

/// `‖w_j‖` divided by the mean weight-vector norm.
pub fn norm_profile(classifier: &Matrix) -> Vec<f64> {
    let norms: Vec<f64> = classifier.iter_rows().map(norm).collect();
    let mean = norms.iter().sum::<f64>() / norms.len() as f64;
    norms.into_iter().map(|n| n / mean).collect()
}

/// Mean over `x ∈ D_j` of `∂ℓ(j, x)/∂‖w_k‖`, which for a sample is
/// `(p^k(x) − [k = j]) ‖f(x)‖ cos θ_k^x`.
pub fn radial_derivative(model: &Model, dataset: &Dataset, class_j: usize, k: usize) -> Result<f64> {
    if class_j >= model.num_classes() || k >= model.num_classes() {
        return Err(Error::invalid("class index out of range"));
    }
    let w_k = model.weight_vector(k);
    let w_norm = norm(w_k);
    if w_norm == 0.0 {
        return Err(Error::invalid(format!("weight vector {k} is zero")));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (x, y) in dataset.iter() {
        if y != class_j {
            continue;
        }
        count += 1;
        let rec = model.forward(x)?;
        let f = rec.feature();
        let f_norm = norm(f);
        if f_norm == 0.0 {
            continue;
        }
        let cos = (dot(w_k, f) / (w_norm * f_norm)).clamp(-1.0, 1.0);
        let indicator = if k == class_j { 1.0 } else { 0.0 };
        sum += (rec.probs[k] - indicator) * f_norm * cos;
    }
    if count == 0 {
        return Err(Error::invalid(format!("class {class_j} has no samples")));
    }
    Ok(sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use crate::model::Layer;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn rescale_examples() {
        let w = Matrix::from_vec(2, 2, vec![0.3, -1.7, 2.2, 0.9]).unwrap();
        assert_eq!(rescale(&w, &[100, 1], 0.0).unwrap(), w);
        // mpmath: 100^0.1.
        let f = rescale_factors(&[100, 1], 0.1).unwrap();
        assert_eq!(f[0], 1.0);
        assert!((f[1] - 1.584_893_192_461_113_5).abs() < 1e-12);
        assert_eq!(rescale_factors(&[100, 1], 1.0).unwrap()[1], 100.0);
        assert!(rescale_factors(&[100, 0], 1.0).is_err());
        assert!(rescale_factors(&[1, 1], -0.5).is_err());
        assert!(rescale(&w, &[1, 1, 1], 0.5).is_err());
    }

    #[test]
    fn residual_examples() {
        let s = core::f64::consts::FRAC_1_SQRT_2;
        let r = boundary_residual(&[2.0, 0.0], &[0.0, 1.0], &[s, s]).unwrap();
        assert!((r - s).abs() < 1e-15);
        let r = boundary_residual(&[1.0, 0.0], &[0.0, 1.0], &[s, s]).unwrap();
        assert_eq!(r, 0.0);
        assert!(boundary_residual(&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn boundary_angle_examples() {
        assert!((boundary_angle_2d(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 45.0).abs() < 1e-9);
        // Root of 2 cos t = sin t: atan(2), from mpmath.
        let a = boundary_angle_2d(&[2.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((a - 63.434_948_822_922_01).abs() < 1e-9);
        // Orientation does not matter.
        let b = boundary_angle_2d(&[0.0, -2.0], &[-1.0, 0.0]).unwrap();
        assert!((a - b).abs() < 1e-9);
        assert!(matches!(
            boundary_angle_2d(&[1.0, 1.0], &[2.0, 2.0]),
            Err(Error::DegenerateGeometry(_))
        ));
        assert!(matches!(
            boundary_angle_2d(&[10.0, 0.0], &[1.0, 0.1]),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn boundary_angle_grows_with_norm_ratio() {
        let mut last = 0.0;
        for r in [1.0, 2.0, 4.0, 8.0] {
            let a = boundary_angle_2d(&[r, 0.0], &[0.0, 1.0]).unwrap();
            assert!(a > last);
            last = a;
        }
    }

    #[test]
    fn profile_examples() {
        let w = Matrix::from_vec(3, 1, vec![2.0, 1.0, -1.0]).unwrap();
        assert_eq!(norm_profile(&w), vec![1.5, 0.75, 0.75]);
        let eq = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, -1.0]).unwrap();
        assert_eq!(norm_profile(&eq), vec![1.0, 1.0]);
    }

    fn identity_model(classifier: Matrix) -> Model {
        let layer = Layer {
            weight: Matrix::identity(2),
            bias: vec![0.0; 2],
        };
        Model::from_parts(vec![layer], classifier).unwrap()
    }

    #[test]
    fn radial_derivative_special_cases() {
        // Saturated: p^0 = 1 for all samples of class 0.
        let m = identity_model(Matrix::from_vec(2, 2, vec![5000.0, 0.0, 0.0, 1.0]).unwrap());
        let d = Dataset::new(vec![1.0, 0.0, 2.0, 0.0], vec![0, 0], 2, 2, Split::Train).unwrap();
        assert_eq!(radial_derivative(&m, &d, 0, 0).unwrap(), 0.0);
        // Features along e1 are orthogonal to w_1 = e2.
        assert_eq!(radial_derivative(&m, &d, 0, 1).unwrap(), 0.0);
        assert!(radial_derivative(&m, &d, 1, 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn rescale_preserves_directions(
            data in prop::collection::vec(-5f64..5.0, 6),
            counts in prop::collection::vec(1usize..1000, 3),
            gamma in 0f64..2.0,
        ) {
            let w = Matrix::from_vec(3, 2, data).unwrap();
            prop_assume!(w.iter_rows().all(|r| norm(r) > 1e-6));
            let out = rescale(&w, &counts, gamma).unwrap();
            for k in 0..3 {
                let c = crate::numerics::cosine(w.row(k), out.row(k)).unwrap();
                prop_assert!((c - 1.0).abs() < 1e-12);
            }
            let f = rescale_factors(&counts, gamma).unwrap();
            for a in 0..3 {
                for b in 0..3 {
                    if counts[a] >= counts[b] {
                        prop_assert!(f[a] <= f[b]);
                    }
                }
            }
        }

        #[test]
        fn residual_sign_matches_pairwise_argmax(
            wi in prop::collection::vec(-3f64..3.0, 3),
            wj in prop::collection::vec(-3f64..3.0, 3),
            f in prop::collection::vec(0f64..3.0, 3),
        ) {
            prop_assume!(norm(&f) > 1e-6);
            let r = boundary_residual(&wi, &wj, &f).unwrap();
            let (li, lj) = (dot(&wi, &f), dot(&wj, &f));
            prop_assert_eq!(r > 0.0, li > lj);
        }
    }
}
