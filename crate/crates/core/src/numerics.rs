//! Dense vector/matrix helpers, stable softmax and cross-entropy, and angles.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(alloc::format!(
                "matrix of shape {rows}x{cols} needs {} elements, got {}",
                rows * cols,
                data.len()
            )));
        }
        ensure_finite(&data)?;
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged rows"));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// `out = self · x`.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.iter_rows()) {
            *o = dot(row, x);
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

pub fn ensure_finite(v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::invalid(alloc::format!(
            "non-finite value {} at index {i}",
            v[i]
        ))),
        None => Ok(()),
    }
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() {
        return Err(Error::invalid("softmax of an empty vector"));
    }
    ensure_finite(z)?;
    let mut out = vec![0.0; z.len()];
    softmax_into(z, &mut out);
    Ok(out)
}

/// Unchecked softmax into a caller-provided buffer. `z` must be finite and
/// non-empty.
pub fn softmax_into(z: &[f64], out: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = libm::exp(v - max);
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

/// `-ln p[class]`.
pub fn cross_entropy(p: &[f64], class: usize) -> Result<f64> {
    match p.get(class) {
        Some(&py) if py > 0.0 && py <= 1.0 => Ok(-libm::log(py)),
        Some(&py) => Err(Error::invalid(alloc::format!(
            "probability {py} outside (0, 1]"
        ))),
        None => Err(Error::invalid(alloc::format!(
            "class {class} out of range for {} probabilities",
            p.len()
        ))),
    }
}

/// Cosine similarity with the result clamped to `[-1, 1]`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::invalid(alloc::format!(
            "length mismatch: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::invalid("angle with a zero vector is undefined"));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Angle between two nonzero vectors, in degrees.
///
/// Uses `2·atan2(‖û − v̂‖, ‖û + v̂‖)`, which stays accurate near 0° and 180°
/// where `acos` of a rounded cosine loses about half the digits.
pub fn angle_deg(u: &[f64], v: &[f64]) -> Result<f64> {
    cosine(u, v)?;
    Ok(unit_angle_rad(&unit(u), &unit(v)).to_degrees())
}

fn unit(u: &[f64]) -> Vec<f64> {
    let n = norm(u);
    u.iter().map(|x| x / n).collect()
}

/// Angle in radians between two unit vectors.
pub fn unit_angle_rad(u: &[f64], v: &[f64]) -> f64 {
    let (mut diff, mut sum) = (0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        diff += (a - b) * (a - b);
        sum += (a + b) * (a + b);
    }
    2.0 * libm::atan2(libm::sqrt(diff), libm::sqrt(sum))
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        let p = softmax(&[0.0, libm::log(3.0)]).unwrap();
        assert!(close(p[0], 0.25, 1e-15) && close(p[1], 0.75, 1e-15));
        assert_eq!(softmax(&[1000.0, 1000.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_rejects_bad_input() {
        assert!(matches!(softmax(&[]), Err(Error::InvalidArgument(_))));
        assert!(softmax(&[0.0, f64::NAN]).is_err());
        assert!(softmax(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        assert!(close(
            cross_entropy(&[0.5, 0.5], 0).unwrap(),
            core::f64::consts::LN_2,
            1e-15
        ));
        assert!(cross_entropy(&[1.0 - 1e-15, 1e-15], 0).unwrap() < 1e-14);
        assert!(close(
            cross_entropy(&[0.25, 0.75], 1).unwrap(),
            0.287_682_072_451_780_9,
            1e-12
        ));
        assert!(cross_entropy(&[0.5, 0.5], 2).is_err());
    }

    #[test]
    fn angle_examples() {
        assert!(close(angle_deg(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 90.0, 1e-12));
        assert_eq!(angle_deg(&[0.3, -2.0, 5.0], &[0.3, -2.0, 5.0]).unwrap(), 0.0);
        assert!(close(angle_deg(&[1.0, 1.0], &[1.0, 0.0]).unwrap(), 45.0, 1e-12));
        assert!(angle_deg(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(angle_deg(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn matrix_shape_checks() {
        assert!(Matrix::from_vec(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let mut out = [0.0; 2];
        m.mul_vec_into(&[1.0, 1.0], &mut out);
        assert_eq!(out, [3.0, 7.0]);
    }

    proptest! {
        #[test]
        fn softmax_shift_invariant(z in prop::collection::vec(-1e3f64..1e3, 1..12), c in -1e3f64..1e3) {
            let a = softmax(&z).unwrap();
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let b = softmax(&shifted).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn softmax_sums_to_one(z in prop::collection::vec(-1e3f64..1e3, 1..32)) {
            let s: f64 = softmax(&z).unwrap().iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn cross_entropy_nonnegative(z in prop::collection::vec(-50f64..50.0, 2..8), y in 0usize..8) {
            let p = softmax(&z).unwrap();
            let y = y % p.len();
            prop_assert!(cross_entropy(&p, y).unwrap() >= 0.0);
        }

        #[test]
        fn angle_scale_invariant(u in prop::collection::vec(-10f64..10.0, 1..8), c in 1e-3f64..1e3) {
            prop_assume!(norm(&u) > 1e-6);
            let cu: Vec<f64> = u.iter().map(|v| v * c).collect();
            prop_assert!(angle_deg(&cu, &u).unwrap() < 1e-5);
        }
    }
}
