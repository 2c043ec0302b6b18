//! Dense vectors and the finite-difference gradient oracle.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real vector used for iterates, gradients and messages.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn zeros(d: usize) -> Self {
        Vector(vec![0.0; d])
    }

    /// Standard basis vector `e_k` in dimension `d`.
    pub fn basis(d: usize, k: usize) -> Self {
        let mut v = Self::zeros(d);
        v.0[k] = 1.0;
        v
    }

    pub fn filled(d: usize, value: f64) -> Self {
        Vector(vec![value; d])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `self += alpha * other`. Panics on length mismatch.
    pub fn axpy(&mut self, alpha: f64, other: &Vector) {
        assert_eq!(self.len(), other.len(), "axpy length mismatch");
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.0 {
            *a *= alpha;
        }
    }

    pub fn scaled(&self, alpha: f64) -> Vector {
        Vector(self.0.iter().map(|a| alpha * a).collect())
    }

    /// Elementwise `self + other`.
    pub fn add(&self, other: &Vector) -> Vector {
        assert_eq!(self.len(), other.len(), "add length mismatch");
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Elementwise `self - other`.
    pub fn sub(&self, other: &Vector) -> Vector {
        assert_eq!(self.len(), other.len(), "sub length mismatch");
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn dist_sq(&self, other: &Vector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Arithmetic mean of a nonempty set of equal-length vectors.
    pub fn mean(vectors: &[Vector]) -> Result<Vector> {
        let first = vectors.first().ok_or(Error::Empty("mean of no vectors"))?;
        let d = first.len();
        let mut acc = Vector::zeros(d);
        for v in vectors {
            if v.len() != d {
                return Err(Error::dim(d, v.len()));
            }
            acc.axpy(1.0, v);
        }
        acc.scale(1.0 / vectors.len() as f64);
        Ok(acc)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

impl<const N: usize> From<[f64; N]> for Vector {
    fn from(v: [f64; N]) -> Self {
        Vector(v.to_vec())
    }
}

impl FromIterator<f64> for Vector {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        Vector(iter.into_iter().collect())
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Central-difference gradient `(f(x + h e_j) - f(x - h e_j)) / 2h`.
pub fn finite_diff_grad<F>(f: F, x: &Vector, h: f64) -> Result<Vector>
where
    F: Fn(&Vector) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step h must be > 0, got {h}")));
    }
    let mut probe = x.clone();
    let mut out = Vector::zeros(x.len());
    for j in 0..x.len() {
        let orig = probe[j];
        probe[j] = orig + h;
        let fp = f(&probe);
        probe[j] = orig - h;
        let fm = f(&probe);
        probe[j] = orig;
        out[j] = (fp - fm) / (2.0 * h);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_dot_examples() {
        assert_eq!(dot(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        assert_eq!(dot(&[7.0, -3.0], &[0.0, 0.0]).unwrap(), 0.0);
        let e1 = Vector::basis(3, 0);
        let e2 = Vector::basis(3, 1);
        assert_eq!(dot(&e1, &e2).unwrap(), 0.0);
    }

    #[test]
    fn test_dot_length_mismatch() {
        assert!(matches!(
            dot(&[1.0], &[1.0, 2.0]),
            Err(Error::Dimension { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn test_norm_sq_examples() {
        assert_eq!(norm_sq(&[3.0, 4.0]), 25.0);
        assert_eq!(Vector::zeros(5).norm_sq(), 0.0);
        assert_eq!(Vector::basis(4, 2).norm_sq(), 1.0);
    }

    #[test]
    fn test_finite_diff_quadratic() {
        let x = Vector::from([1.0, 2.0]);
        let g = finite_diff_grad(|v| 0.5 * v.norm_sq(), &x, 1e-5).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-8);
        assert!((g[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn test_finite_diff_constant_is_zero() {
        let x = Vector::from([0.3, -1.0, 5.0]);
        let g = finite_diff_grad(|_| 4.2, &x, 1e-4).unwrap();
        assert_eq!(g, Vector::zeros(3));
    }

    #[test]
    fn test_finite_diff_rejects_bad_step() {
        assert!(finite_diff_grad(|_| 0.0, &Vector::zeros(1), 0.0).is_err());
    }

    #[test]
    fn test_mean_and_ops() {
        let m = Vector::mean(&[Vector::from([1.0, 2.0]), Vector::from([3.0, 6.0])]).unwrap();
        assert_eq!(m, Vector::from([2.0, 4.0]));
        assert!(Vector::mean(&[]).is_err());
        let mut a = Vector::from([1.0, 1.0]);
        a.axpy(2.0, &Vector::from([1.0, -1.0]));
        assert_eq!(a, Vector::from([3.0, -1.0]));
        assert_eq!(a.sub(&a), Vector::zeros(2));
    }
}
