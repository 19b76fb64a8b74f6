use crate::error::{Error, Result};
use crate::math::{GaussianStream, Vector};
use crate::scalar::Real;

use super::{check_theta, Batch, Dataset, Problem};

/// `f(θ) = ½ θᵀ D θ` with `D` diagonal and log-spaced over `[1, condition]`.
#[derive(Debug, Clone)]
pub struct Quadratic<T> {
    diag: Vec<T>,
}

impl<T: Real> Quadratic<T> {
    pub fn diagonal(&self) -> &[T] {
        &self.diag
    }
}

pub fn quadratic_problem<T: Real>(d: usize, condition: T) -> Result<Quadratic<T>> {
    if d == 0 {
        return Err(Error::InvalidArgument("quadratic dimension must be >= 1".into()));
    }
    if !(condition >= T::one() && condition.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "condition number must be finite and >= 1, got {condition}"
        )));
    }
    let diag = (0..d)
        .map(|i| {
            if d == 1 {
                T::one()
            } else {
                let frac = T::lit(i as f64) / T::lit((d - 1) as f64);
                condition.powf(frac)
            }
        })
        .collect();
    Ok(Quadratic { diag })
}

impl<T: Real> Problem<T> for Quadratic<T> {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn loss(&self, theta: &Vector<T>, _: &Batch) -> Result<T> {
        check_theta(self.dim(), theta)?;
        let s: T = self.diag.iter().zip(theta).map(|(&d, &x)| d * x * x).sum();
        Ok(T::lit(0.5) * s)
    }

    fn grad(&self, theta: &Vector<T>, _: &Batch) -> Result<Vector<T>> {
        check_theta(self.dim(), theta)?;
        Vector::new(self.diag.iter().zip(theta).map(|(&d, &x)| d * x).collect())
    }
}

/// `f(x, y) = (1 − x)² + 100 (y − x²)²`, minimum at `(1, 1)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Rosenbrock;

pub fn rosenbrock_problem() -> Rosenbrock {
    Rosenbrock
}

impl<T: Real> Problem<T> for Rosenbrock {
    fn dim(&self) -> usize {
        2
    }

    fn loss(&self, theta: &Vector<T>, _: &Batch) -> Result<T> {
        check_theta(2, theta)?;
        let (x, y) = (theta[0], theta[1]);
        let a = T::one() - x;
        let b = y - x * x;
        Ok(a * a + T::lit(100.0) * b * b)
    }

    fn grad(&self, theta: &Vector<T>, _: &Batch) -> Result<Vector<T>> {
        check_theta(2, theta)?;
        let (x, y) = (theta[0], theta[1]);
        let b = y - x * x;
        let dx = T::lit(-2.0) * (T::one() - x) - T::lit(400.0) * x * b;
        let dy = T::lit(200.0) * b;
        Vector::new(vec![dx, dy])
    }
}

/// `f(x, y) = ½(x² − y²) + ¼ y⁴`: strict saddle at the origin, minima at
/// `(0, ±1)` with value `−¼`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Saddle;

pub fn saddle_problem() -> Saddle {
    Saddle
}

impl<T: Real> Problem<T> for Saddle {
    fn dim(&self) -> usize {
        2
    }

    fn loss(&self, theta: &Vector<T>, _: &Batch) -> Result<T> {
        check_theta(2, theta)?;
        let (x, y) = (theta[0], theta[1]);
        let y2 = y * y;
        Ok(T::lit(0.5) * (x * x - y2) + T::lit(0.25) * y2 * y2)
    }

    fn grad(&self, theta: &Vector<T>, _: &Batch) -> Result<Vector<T>> {
        check_theta(2, theta)?;
        let (x, y) = (theta[0], theta[1]);
        Vector::new(vec![x, -y + y * y * y])
    }
}

/// Adds `N(0, σ² I)` gradient noise keyed by [`Batch::Ticket`].
///
/// The draw for ticket `k` comes from a substream of the construction seed, so
/// asking twice with the same ticket returns the same gradient. Other batch
/// kinds get the noiseless gradient. Loss and `full_eval` are untouched.
#[derive(Debug, Clone)]
pub struct StochasticGradient<P, T> {
    inner: P,
    sigma: T,
    stream: GaussianStream,
}

pub fn stochastic_wrapper<T: Real, P: Problem<T>>(
    inner: P,
    sigma_g: T,
    stream: GaussianStream,
) -> Result<StochasticGradient<P, T>> {
    if !(sigma_g >= T::zero() && sigma_g.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "gradient noise must be finite and >= 0, got {sigma_g}"
        )));
    }
    Ok(StochasticGradient {
        inner,
        sigma: sigma_g,
        stream,
    })
}

impl<P, T> StochasticGradient<P, T> {
    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<T: Real, P: Problem<T>> Problem<T> for StochasticGradient<P, T> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn loss(&self, theta: &Vector<T>, batch: &Batch) -> Result<T> {
        self.inner.loss(theta, batch)
    }

    fn grad(&self, theta: &Vector<T>, batch: &Batch) -> Result<Vector<T>> {
        let g = self.inner.grad(theta, batch)?;
        match batch {
            Batch::Ticket(k) if self.sigma > T::zero() => {
                let var = Vector::filled(g.dim(), self.sigma * self.sigma)?;
                self.stream.substream(*k).sample(&g, &var)
            }
            _ => Ok(g),
        }
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

    fn v(x: &[f64]) -> Vector<f64> {
        Vector::from_f64(x).unwrap()
    }

    #[test]
    fn quadratic_examples() {
        let q = quadratic_problem(1, 1.0).unwrap();
        assert_eq!(q.loss(&v(&[3.0]), &Batch::Full).unwrap(), 4.5);
        assert_eq!(q.grad(&v(&[3.0]), &Batch::Full).unwrap(), v(&[3.0]));

        let q = quadratic_problem(2, 10.0).unwrap();
        assert_eq!(q.diagonal(), &[1.0, 10.0]);
        assert!((q.loss(&v(&[1.0, 1.0]), &Batch::Full).unwrap() - 5.5).abs() < 1e-14);

        for d in 1..6 {
            let q = quadratic_problem(d, 7.0).unwrap();
            assert_eq!(q.grad(&Vector::zeros(d), &Batch::Full).unwrap(), Vector::zeros(d));
        }
    }

    #[test]
    fn quadratic_rejects_bad_args() {
        assert!(quadratic_problem(3, 0.5).is_err());
        assert!(quadratic_problem(0, 2.0).is_err());
    }

    #[test]
    fn quadratic_diagonal_is_log_spaced() {
        let q = quadratic_problem(5, 16.0).unwrap();
        let expected = [1.0f64, 2.0, 4.0, 8.0, 16.0];
        for (a, b) in q.diagonal().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rosenbrock_examples() {
        let r = rosenbrock_problem();
        let f = |x: &[f64]| Problem::<f64>::loss(&r, &v(x), &Batch::Full).unwrap();
        let g = |x: &[f64]| Problem::<f64>::grad(&r, &v(x), &Batch::Full).unwrap();
        assert_eq!(f(&[1.0, 1.0]), 0.0);
        assert_eq!(g(&[1.0, 1.0]), v(&[0.0, 0.0]));
        assert_eq!(f(&[0.0, 0.0]), 1.0);
        assert_eq!(g(&[0.0, 0.0]), v(&[-2.0, 0.0]));
    }

    #[test]
    fn saddle_geometry() {
        let s = saddle_problem();
        let f = |x: &[f64]| Problem::<f64>::loss(&s, &v(x), &Batch::Full).unwrap();
        let g = |x: &[f64]| Problem::<f64>::grad(&s, &v(x), &Batch::Full).unwrap();
        assert_eq!(g(&[0.0, 0.0]), v(&[0.0, 0.0]));
        for y in [1.0, -1.0] {
            assert_eq!(f(&[0.0, y]), -0.25);
            assert_eq!(g(&[0.0, y]), v(&[0.0, 0.0]));
        }
        assert!(f(&[0.0, 0.0]) > f(&[0.0, 1.0]));
    }

    #[test]
    fn wrapper_zero_noise_is_identity() {
        let w = stochastic_wrapper(saddle_problem(), 0.0, GaussianStream::new(1)).unwrap();
        let th = v(&[0.3, -0.7]);
        for k in 0..10 {
            assert_eq!(
                Problem::<f64>::grad(&w, &th, &Batch::Ticket(k)).unwrap(),
                Problem::<f64>::grad(&saddle_problem(), &th, &Batch::Full).unwrap()
            );
        }
    }

    #[test]
    fn wrapper_same_ticket_same_gradient() {
        let w = stochastic_wrapper(rosenbrock_problem(), 0.5, GaussianStream::new(3)).unwrap();
        let th = v(&[0.1, 0.2]);
        let a: Vector<f64> = w.grad(&th, &Batch::Ticket(17)).unwrap();
        let b: Vector<f64> = w.grad(&th, &Batch::Ticket(17)).unwrap();
        let c: Vector<f64> = w.grad(&th, &Batch::Ticket(18)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(w.full_eval(&th).unwrap(), Problem::<f64>::full_eval(&rosenbrock_problem(), &th).unwrap());
    }

    #[test]
    fn wrapper_is_unbiased() {
        let sigma = 0.3;
        let q = quadratic_problem(2, 4.0).unwrap();
        let th = v(&[0.5, -1.0]);
        let exact = q.grad(&th, &Batch::Full).unwrap();
        let w = stochastic_wrapper(q, sigma, GaussianStream::new(5)).unwrap();
        let n = 100_000;
        let mut mean = [0.0; 2];
        for k in 0..n {
            let g = w.grad(&th, &Batch::Ticket(k)).unwrap();
            mean[0] += g[0];
            mean[1] += g[1];
        }
        let se = sigma / (n as f64).sqrt();
        for i in 0..2 {
            let m = mean[i] / n as f64;
            assert!((m - exact[i]).abs() < 5.0 * se, "coord {i}: {m} vs {}", exact[i]);
        }
    }
}
