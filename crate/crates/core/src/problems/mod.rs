//! Loss/gradient oracles.
//!
//! A [`Problem`] is pure: the same `(theta, batch)` always gives bit-identical
//! loss and gradient. Analytic landscapes ignore row batches; the
//! [`StochasticGradient`] wrapper keys its noise to [`Batch::Ticket`].

mod data;
mod landscape;
mod models;

pub use data::{load_csv_dataset, two_moons, Dataset, Partition};
pub use landscape::{quadratic_problem, rosenbrock_problem, saddle_problem, Quadratic, Rosenbrock, Saddle, StochasticGradient, stochastic_wrapper};
pub use models::{logistic_problem, mlp_problem, Logistic, Mlp};

use crate::error::{Error, Result};
use crate::math::{GaussianStream, Vector};
use crate::scalar::Real;

/// Which examples a loss or gradient is computed on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Batch {
    /// The whole training partition (or the exact loss for landscapes).
    Full,
    /// Explicit row indices into the dataset.
    Rows(Vec<usize>),
    /// Noise key for stochastic landscapes. Dataset problems treat it as `Full`.
    Ticket(u64),
}

pub trait Problem<T: Real>: Send + Sync {
    fn dim(&self) -> usize;

    fn loss(&self, theta: &Vector<T>, batch: &Batch) -> Result<T>;

    fn grad(&self, theta: &Vector<T>, batch: &Batch) -> Result<Vector<T>>;

    /// Deterministic exact (landscape) or full-training-set (dataset) loss.
    fn full_eval(&self, theta: &Vector<T>) -> Result<T> {
        self.loss(theta, &Batch::Full)
    }

    fn dataset(&self) -> Option<&Dataset<T>> {
        None
    }

    /// Predicted class of dataset row `row`. Ties go to the lowest class index.
    fn predict(&self, _theta: &Vector<T>, _row: usize) -> Result<usize> {
        Err(Error::NoDataset)
    }

    /// Starting point for a run. Zeros unless the model has its own initialiser.
    fn initial_point(&self, _seed: u64) -> Vector<T> {
        Vector::zeros(self.dim())
    }
}

impl<T: Real, P: Problem<T> + ?Sized> Problem<T> for Box<P> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn loss(&self, theta: &Vector<T>, batch: &Batch) -> Result<T> {
        (**self).loss(theta, batch)
    }
    fn grad(&self, theta: &Vector<T>, batch: &Batch) -> Result<Vector<T>> {
        (**self).grad(theta, batch)
    }
    fn full_eval(&self, theta: &Vector<T>) -> Result<T> {
        (**self).full_eval(theta)
    }
    fn dataset(&self) -> Option<&Dataset<T>> {
        (**self).dataset()
    }
    fn predict(&self, theta: &Vector<T>, row: usize) -> Result<usize> {
        (**self).predict(theta, row)
    }
    fn initial_point(&self, seed: u64) -> Vector<T> {
        (**self).initial_point(seed)
    }
}

pub(crate) fn check_theta<T: Real>(dim: usize, theta: &Vector<T>) -> Result<()> {
    if theta.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: theta.dim(),
        });
    }
    Ok(())
}

/// Central differences `(f(θ + h eᵢ) − f(θ − h eᵢ)) / 2h` on one fixed batch.
pub fn finite_difference_grad<T: Real, P: Problem<T> + ?Sized>(
    problem: &P,
    theta: &Vector<T>,
    batch: &Batch,
    h: T,
) -> Result<Vector<T>> {
    if !(h > T::zero()) {
        return Err(Error::InvalidArgument("finite-difference step must be > 0".into()));
    }
    check_theta(problem.dim(), theta)?;
    let two_h = h + h;
    let coords = (0..theta.dim())
        .map(|i| {
            let up = problem.loss(&theta.with_coord(i, theta[i] + h)?, batch)?;
            let down = problem.loss(&theta.with_coord(i, theta[i] - h)?, batch)?;
            Ok((up - down) / two_h)
        })
        .collect::<Result<Vec<T>>>()?;
    Vector::new(coords)
}

/// `‖a − b‖ / max(1, ‖a‖)`.
pub fn relative_error<T: Real>(analytic: &Vector<T>, reference: &Vector<T>) -> Result<T> {
    let diff = analytic.sub(reference)?.norm();
    Ok(diff / analytic.norm().max(T::one()))
}

/// Maximum relative error between the analytic gradient and central
/// differences at `points` standard-normal points drawn from `seed`.
pub fn gradient_check<T: Real, P: Problem<T> + ?Sized>(
    problem: &P,
    points: usize,
    seed: u64,
    h: T,
) -> Result<T> {
    let mut stream = GaussianStream::new(seed);
    let d = problem.dim();
    let mut worst = T::zero();
    for _ in 0..points {
        let theta = stream.sample(&Vector::zeros(d), &Vector::filled(d, T::one())?)?;
        let analytic = problem.grad(&theta, &Batch::Full)?;
        let numeric = finite_difference_grad(problem, &theta, &Batch::Full, h)?;
        worst = worst.max(relative_error(&analytic, &numeric)?);
    }
    Ok(worst)
}

/// Fraction of argmax-correct predictions over a partition.
pub fn accuracy<T: Real, P: Problem<T> + ?Sized>(
    problem: &P,
    theta: &Vector<T>,
    partition: Partition,
) -> Result<f64> {
    let data = problem.dataset().ok_or(Error::NoDataset)?;
    let rows = data.partition(partition);
    if rows.is_empty() {
        return Err(Error::EmptyPartition);
    }
    let mut correct = 0usize;
    for &r in rows {
        if problem.predict(theta, r)? == data.label(r) {
            correct += 1;
        }
    }
    Ok(correct as f64 / rows.len() as f64)
}

/// Mean loss over every row of a partition.
pub fn partition_loss<T: Real, P: Problem<T> + ?Sized>(
    problem: &P,
    theta: &Vector<T>,
    partition: Partition,
) -> Result<T> {
    let data = problem.dataset().ok_or(Error::NoDataset)?;
    let rows = data.partition(partition);
    if rows.is_empty() {
        return Err(Error::EmptyPartition);
    }
    problem.loss(theta, &Batch::Rows(rows.to_vec()))
}

/// A uniform minibatch: `size` distinct rows drawn from `rows`. Successive
/// calls are independent, so rows recur across batches.
pub fn sample_batch<R: rand::Rng + ?Sized>(rng: &mut R, rows: &[usize], size: usize) -> Batch {
    Batch::Rows(
        rand::seq::index::sample(rng, rows.len(), size)
            .into_iter()
            .map(|i| rows[i])
            .collect(),
    )
}

/// Scales one gradient coordinate by a fixed factor. A negative control for
/// gradient checks; loss and everything else pass through unchanged.
#[derive(Debug, Clone)]
pub struct ScaledGradient<P> {
    inner: P,
    coord: usize,
    factor: f64,
}

impl<P> ScaledGradient<P> {
    pub fn new(inner: P, coord: usize, factor: f64) -> Self {
        Self { inner, coord, factor }
    }
}

impl<T: Real, P: Problem<T>> Problem<T> for ScaledGradient<P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn loss(&self, theta: &Vector<T>, batch: &Batch) -> Result<T> {
        self.inner.loss(theta, batch)
    }
    fn grad(&self, theta: &Vector<T>, batch: &Batch) -> Result<Vector<T>> {
        let g = self.inner.grad(theta, batch)?;
        let scaled = g[self.coord] * T::lit(self.factor);
        g.with_coord(self.coord, scaled)
    }
    fn full_eval(&self, theta: &Vector<T>) -> Result<T> {
        self.inner.full_eval(theta)
    }
    fn dataset(&self) -> Option<&Dataset<T>> {
        self.inner.dataset()
    }
    fn predict(&self, theta: &Vector<T>, row: usize) -> Result<usize> {
        self.inner.predict(theta, row)
    }
    fn initial_point(&self, seed: u64) -> Vector<T> {
        self.inner.initial_point(seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear;

    impl Problem<f64> for Linear {
        fn dim(&self) -> usize {
            2
        }
        fn loss(&self, theta: &Vector<f64>, _: &Batch) -> Result<f64> {
            Ok(3.0 * theta[0] - 0.5 * theta[1] + 1.0)
        }
        fn grad(&self, _: &Vector<f64>, _: &Batch) -> Result<Vector<f64>> {
            Vector::from_f64(&[3.0, -0.5])
        }
    }

    #[test]
    fn fd_exact_for_quadratic_scalar() {
        let q = quadratic_problem::<f64>(1, 1.0).unwrap();
        let fd = finite_difference_grad(&q, &Vector::from_f64(&[3.0]).unwrap(), &Batch::Full, 1e-5)
            .unwrap();
        assert!((fd[0] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn fd_exact_for_linear_any_step() {
        let theta = Vector::from_f64(&[0.3, -1.2]).unwrap();
        for h in [1e-6, 1e-3, 0.5, 10.0] {
            let fd = finite_difference_grad(&Linear, &theta, &Batch::Full, h).unwrap();
            assert!((fd[0] - 3.0).abs() < 1e-9, "h={h}");
            assert!((fd[1] + 0.5).abs() < 1e-9, "h={h}");
        }
    }

    #[test]
    fn fd_rejects_bad_step() {
        let theta = Vector::from_f64(&[0.0, 0.0]).unwrap();
        assert!(finite_difference_grad(&Linear, &theta, &Batch::Full, 0.0).is_err());
    }

    #[test]
    fn accuracy_needs_dataset() {
        let q = quadratic_problem::<f64>(2, 1.0).unwrap();
        let err = accuracy(&q, &Vector::zeros(2), Partition::Train).unwrap_err();
        assert!(matches!(err, Error::NoDataset));
    }
}
