//! Flat parameter vectors and the seeded Gaussian source shared by every stepper.

use std::ops::Index;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Fixed-dimension real vector holding parameters, gradients and accumulators.
///
/// Every constructor and every public operation rejects NaN/Inf entries, so a
/// `Vector` in hand is always finite and non-empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector<T> {
    values: Vec<T>,
}

impl<T: Real> Vector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyVector);
        }
        check_finite(&values, "vector")?;
        Ok(Self { values })
    }

    pub fn from_f64(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| T::lit(v)).collect())
    }

    /// All-zero vector of dimension `dim`.
    ///
    /// # Panics
    /// If `dim` is zero.
    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "vector dimension must be positive");
        Self {
            values: vec![T::zero(); dim],
        }
    }

    pub fn filled(dim: usize, value: T) -> Result<Self> {
        Self::new(vec![value; dim])
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.values.iter()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.to_f64_lossy()).collect()
    }

    pub fn norm(&self) -> T {
        self.dot_unchecked(self).sqrt()
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        self.check_dim(other)?;
        Ok(self.dot_unchecked(other))
    }

    fn dot_unchecked(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a * b)
            .sum()
    }

    pub fn scale(&self, a: T) -> Result<Self> {
        Self::new(self.values.iter().map(|&v| a * v).collect())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Elementwise map; the result is validated.
    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(self.values.iter().map(|&v| f(v)).collect())
    }

    /// Elementwise binary map over two equal-dimension vectors; the result is validated.
    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.check_dim(other)?;
        Self::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    /// Replaces coordinate `i`; used by finite-difference probes.
    pub(crate) fn with_coord(&self, i: usize, value: T) -> Result<Self> {
        let mut values = self.values.clone();
        values[i] = value;
        Self::new(values)
    }
}

impl<T> Index<usize> for Vector<T> {
    type Output = T;

    fn index(&self, i: usize) -> &T {
        &self.values[i]
    }
}

impl<'a, T> IntoIterator for &'a Vector<T> {
    type Item = &'a T;
    type IntoIter = std::slice::Iter<'a, T>;

    fn into_iter(self) -> Self::IntoIter {
        self.values.iter()
    }
}

pub(crate) fn check_finite<T: Real>(values: &[T], context: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { context })
    }
}

/// `a·x + y`.
pub fn axpy<T: Real>(a: T, x: &Vector<T>, y: &Vector<T>) -> Result<Vector<T>> {
    x.zip_with(y, |xi, yi| a * xi + yi)
}

/// Hadamard (elementwise) product.
pub fn elementwise_mul<T: Real>(x: &Vector<T>, y: &Vector<T>) -> Result<Vector<T>> {
    x.zip_with(y, |a, b| a * b)
}

/// Seeded source of standard-normal draws.
///
/// Backed by ChaCha8, so a seed reproduces the same sequence on every
/// platform. Not `Sync`-shared: each run owns its own stream.
#[derive(Debug, Clone)]
pub struct GaussianStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream keyed by `(seed, key)`, always starting from the
    /// beginning regardless of how far `self` has advanced.
    pub fn substream(&self, key: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        // stream 0 belongs to the parent
        rng.set_stream(key.wrapping_add(1));
        Self {
            seed: self.seed,
            rng,
        }
    }

    pub fn standard_normal<T: Real>(&mut self) -> T {
        T::standard_normal(&mut self.rng)
    }

    /// `mean + sqrt(variance) ⊙ z`, drawing exactly `dim` standard normals.
    pub fn sample<T: Real>(&mut self, mean: &Vector<T>, variance: &Vector<T>) -> Result<Vector<T>> {
        sample_gaussian(self, mean, variance)
    }
}

/// Draws from `N(mean, diag(variance))`.
///
/// A zero variance returns that coordinate of `mean` exactly. Negative
/// variances are rejected before the stream advances.
pub fn sample_gaussian<T: Real>(
    stream: &mut GaussianStream,
    mean: &Vector<T>,
    variance: &Vector<T>,
) -> Result<Vector<T>> {
    mean.check_dim(variance)?;
    if let Some((index, v)) = variance.iter().enumerate().find(|(_, v)| **v < T::zero()) {
        return Err(Error::NegativeVariance {
            index,
            value: v.to_f64_lossy(),
        });
    }
    let values = mean
        .iter()
        .zip(variance)
        .map(|(&m, &v)| {
            let z: T = stream.standard_normal();
            if v == T::zero() {
                m
            } else {
                m + v.sqrt() * z
            }
        })
        .collect();
    Vector::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector<f64> {
        Vector::from_f64(x).unwrap()
    }

    #[test]
    fn axpy_examples() {
        assert_eq!(axpy(0.0, &v(&[3.0, 4.0]), &v(&[1.0, 2.0])).unwrap(), v(&[1.0, 2.0]));
        assert_eq!(axpy(1.0, &v(&[0.0, 0.0]), &v(&[5.0, 6.0])).unwrap(), v(&[5.0, 6.0]));
        let r = axpy(-0.1, &v(&[2.0, -10.0]), &v(&[1.0, 2.0])).unwrap();
        assert!((r[0] - 0.8).abs() < 1e-15);
        assert!((r[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn axpy_dimension_mismatch() {
        let err = axpy(1.0, &v(&[1.0]), &v(&[1.0, 2.0])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 1, found: 2 }));
    }

    #[test]
    fn hadamard_examples() {
        let (a, b) = (0.3, -7.5);
        assert_eq!(elementwise_mul(&v(&[1.0, 1.0]), &v(&[a, b])).unwrap(), v(&[a, b]));
        assert_eq!(elementwise_mul(&v(&[0.0, 5.0]), &v(&[7.0, 0.0])).unwrap(), v(&[0.0, 0.0]));
        assert_eq!(elementwise_mul(&v(&[2.0, -3.0]), &v(&[4.0, 5.0])).unwrap(), v(&[8.0, -15.0]));
        assert!(elementwise_mul(&v(&[1.0]), &v(&[1.0, 1.0])).is_err());
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(matches!(Vector::<f64>::new(vec![]), Err(Error::EmptyVector)));
        assert!(matches!(
            Vector::new(vec![1.0, f64::NAN]),
            Err(Error::NonFinite { .. })
        ));
        // overflow inside an operation is surfaced too
        assert!(axpy(f64::MAX, &v(&[2.0]), &v(&[0.0])).is_err());
    }

    #[test]
    fn degenerate_gaussian_returns_mean() {
        let mut s = GaussianStream::new(7);
        let out = s.sample(&v(&[3.0, -1.0]), &v(&[0.0, 0.0])).unwrap();
        assert_eq!(out, v(&[3.0, -1.0]));
    }

    #[test]
    fn negative_variance_rejected_without_advancing() {
        let mut s = GaussianStream::new(1);
        let err = s.sample(&v(&[0.0, 0.0]), &v(&[1.0, -0.5])).unwrap_err();
        assert!(matches!(err, Error::NegativeVariance { index: 1, .. }));
        let mut fresh = GaussianStream::new(1);
        assert_eq!(s.standard_normal::<f64>(), fresh.standard_normal::<f64>());
    }

    #[test]
    fn sample_advances_by_dim_draws() {
        let mut a = GaussianStream::new(3);
        let mut b = GaussianStream::new(3);
        a.sample(&v(&[0.0; 4]), &v(&[1.0; 4])).unwrap();
        for _ in 0..4 {
            b.standard_normal::<f64>();
        }
        assert_eq!(a.standard_normal::<f64>(), b.standard_normal::<f64>());
    }

    #[test]
    fn substreams_are_keyed_and_restart() {
        let mut parent = GaussianStream::new(11);
        let first: f64 = parent.substream(5).standard_normal();
        parent.standard_normal::<f64>();
        let again: f64 = parent.substream(5).standard_normal();
        assert_eq!(first, again);
        let other: f64 = parent.substream(6).standard_normal();
        assert_ne!(first, other);
    }

    #[test]
    fn works_in_single_precision() {
        let x = Vector::<f32>::from_f64(&[2.0, -10.0]).unwrap();
        let y = Vector::<f32>::from_f64(&[1.0, 2.0]).unwrap();
        let r = axpy(-0.1f32, &x, &y).unwrap();
        assert!((r[0] - 0.8).abs() < 1e-6);
        let mut s = GaussianStream::new(0);
        let z = s.sample(&x, &Vector::filled(2, 1.0f32).unwrap()).unwrap();
        assert_eq!(z.dim(), 2);
    }
}
