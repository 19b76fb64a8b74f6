//! Update rules: SGD, momentum, SGLD, SGHMC, pSGLD, AdaGrad, Adam, AMSGrad and
//! adaptively preconditioned SGLD (ASGLD).
//!
//! Every stepper mutates an [`OptimizerState`] in place and returns a
//! [`StepReport`]. A step either commits completely or leaves the state
//! untouched (including its noise stream) and returns an error.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::math::{GaussianStream, Vector};
use crate::scalar::Real;

/// Validated hyperparameters. Build with [`HyperParams::builder`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams<T> {
    eta: T,
    rho: T,
    psi: T,
    epsilon_noise: T,
    beta1: T,
    beta2: T,
    stab: T,
    zero_mean_noise: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct HyperParamsBuilder<T> {
    inner: HyperParams<T>,
}

impl<T: Real> HyperParams<T> {
    /// Defaults: `rho = 0.9`, `psi = 1`, `epsilon_noise = 0`, `beta1 = 0.9`,
    /// `beta2 = 0.999`, `stab = 1e-8`, noise centred on `mu`.
    pub fn builder(eta: T) -> HyperParamsBuilder<T> {
        HyperParamsBuilder {
            inner: HyperParams {
                eta,
                rho: T::lit(0.9),
                psi: T::one(),
                epsilon_noise: T::zero(),
                beta1: T::lit(0.9),
                beta2: T::lit(0.999),
                stab: T::lit(1e-8),
                zero_mean_noise: false,
            },
        }
    }

    pub fn eta(&self) -> T {
        self.eta
    }
    pub fn rho(&self) -> T {
        self.rho
    }
    pub fn psi(&self) -> T {
        self.psi
    }
    pub fn epsilon_noise(&self) -> T {
        self.epsilon_noise
    }
    pub fn beta1(&self) -> T {
        self.beta1
    }
    pub fn beta2(&self) -> T {
        self.beta2
    }
    pub fn stab(&self) -> T {
        self.stab
    }
    pub fn zero_mean_noise(&self) -> bool {
        self.zero_mean_noise
    }

    /// Same parameters with a different step size (schedules call this every epoch).
    pub fn with_eta(&self, eta: T) -> Result<Self> {
        HyperParamsBuilder {
            inner: Self { eta, ..*self },
        }
        .build()
    }

    pub fn to_builder(&self) -> HyperParamsBuilder<T> {
        HyperParamsBuilder { inner: *self }
    }

    fn validate(&self) -> Result<()> {
        let bad = |name, value: T, reason| Error::InvalidHyperParam {
            name,
            value: value.to_f64_lossy(),
            reason,
        };
        let unit = |name, v: T| {
            if v >= T::zero() && v < T::one() {
                Ok(())
            } else {
                Err(bad(name, v, "must lie in [0, 1)"))
            }
        };
        if !(self.eta > T::zero() && self.eta.is_finite()) {
            return Err(bad("eta", self.eta, "must be finite and > 0"));
        }
        unit("rho", self.rho)?;
        unit("beta1", self.beta1)?;
        unit("beta2", self.beta2)?;
        if !(self.psi >= T::zero() && self.psi.is_finite()) {
            return Err(bad("psi", self.psi, "must be finite and >= 0"));
        }
        if !(self.epsilon_noise >= T::zero() && self.epsilon_noise.is_finite()) {
            return Err(bad("epsilon_noise", self.epsilon_noise, "must be finite and >= 0"));
        }
        if !(self.stab > T::zero() && self.stab.is_finite()) {
            return Err(bad("stab", self.stab, "must be finite and > 0"));
        }
        Ok(())
    }
}

impl<T: Real> HyperParamsBuilder<T> {
    pub fn eta(mut self, v: T) -> Self {
        self.inner.eta = v;
        self
    }
    pub fn rho(mut self, v: T) -> Self {
        self.inner.rho = v;
        self
    }
    pub fn psi(mut self, v: T) -> Self {
        self.inner.psi = v;
        self
    }
    pub fn epsilon_noise(mut self, v: T) -> Self {
        self.inner.epsilon_noise = v;
        self
    }
    pub fn beta1(mut self, v: T) -> Self {
        self.inner.beta1 = v;
        self
    }
    pub fn beta2(mut self, v: T) -> Self {
        self.inner.beta2 = v;
        self
    }
    pub fn stab(mut self, v: T) -> Self {
        self.inner.stab = v;
        self
    }
    /// Centre ASGLD noise on zero instead of on the running mean. Only for
    /// comparison against the as-written update.
    pub fn zero_mean_noise(mut self, v: bool) -> Self {
        self.inner.zero_mean_noise = v;
        self
    }

    pub fn build(self) -> Result<HyperParams<T>> {
        self.inner.validate()?;
        Ok(self.inner)
    }
}

/// Parameters plus every accumulator any stepper needs.
///
/// `mu` doubles as the first-moment buffer for Adam/AMSGrad and the momentum
/// buffer for momentum/SGHMC. `cov` holds the raw ASGLD covariance
/// accumulator, which may go negative per coordinate.
#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    pub(crate) theta: Vector<T>,
    pub(crate) mu: Vector<T>,
    pub(crate) cov: Vector<T>,
    pub(crate) second_moment: Vector<T>,
    pub(crate) max_second_moment: Vector<T>,
    pub(crate) t: u64,
    pub(crate) stream: GaussianStream,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(theta: Vector<T>, seed: u64) -> Self {
        let d = theta.dim();
        Self {
            theta,
            mu: Vector::zeros(d),
            cov: Vector::zeros(d),
            second_moment: Vector::zeros(d),
            max_second_moment: Vector::zeros(d),
            t: 0,
            stream: GaussianStream::new(seed),
        }
    }

    /// Overwrites the momentum / running-mean buffer.
    pub fn set_mu(&mut self, mu: Vector<T>) -> Result<()> {
        self.theta.check_dim(&mu)?;
        self.mu = mu;
        Ok(())
    }

    /// Overwrites the raw covariance accumulator.
    pub fn set_cov(&mut self, cov: Vector<T>) -> Result<()> {
        self.theta.check_dim(&cov)?;
        self.cov = cov;
        Ok(())
    }

    pub fn theta(&self) -> &Vector<T> {
        &self.theta
    }
    pub fn mu(&self) -> &Vector<T> {
        &self.mu
    }
    pub fn cov(&self) -> &Vector<T> {
        &self.cov
    }
    pub fn second_moment(&self) -> &Vector<T> {
        &self.second_moment
    }
    pub fn max_second_moment(&self) -> &Vector<T> {
        &self.max_second_moment
    }
    pub fn t(&self) -> u64 {
        self.t
    }
    pub fn dim(&self) -> usize {
        self.theta.dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport<T> {
    /// Noise actually injected; zeros for noiseless methods.
    pub noise_draw: Vector<T>,
    pub grad_norm: T,
    /// `theta_{t+1} - theta_t`.
    pub effective_step: Vector<T>,
}

/// The nine update rules behind one dispatch point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Sgd,
    Momentum,
    Sgld,
    Sghmc,
    Psgld,
    Adagrad,
    Adam,
    Amsgrad,
    Asgld,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Sgd,
        Method::Momentum,
        Method::Sgld,
        Method::Sghmc,
        Method::Psgld,
        Method::Adagrad,
        Method::Adam,
        Method::Amsgrad,
        Method::Asgld,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sgd => "sgd",
            Method::Momentum => "momentum",
            Method::Sgld => "sgld",
            Method::Sghmc => "sghmc",
            Method::Psgld => "psgld",
            Method::Adagrad => "adagrad",
            Method::Adam => "adam",
            Method::Amsgrad => "amsgrad",
            Method::Asgld => "asgld",
        }
    }

    pub fn step<T: Real>(
        self,
        state: &mut OptimizerState<T>,
        grad: &Vector<T>,
        hp: &HyperParams<T>,
    ) -> Result<StepReport<T>> {
        match self {
            Method::Sgd => sgd_step(state, grad, hp),
            Method::Momentum => momentum_step(state, grad, hp),
            Method::Sgld => sgld_step(state, grad, hp),
            Method::Sghmc => sghmc_step(state, grad, hp),
            Method::Psgld => psgld_step(state, grad, hp),
            Method::Adagrad => adagrad_step(state, grad, hp),
            Method::Adam => adam_step(state, grad, hp),
            Method::Amsgrad => amsgrad_step(state, grad, hp),
            Method::Asgld => asgld_step(state, grad, hp),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown optimizer `{s}`")))
    }
}

/// Buffers a step wants to write back. Anything left `None` is kept.
struct Update<T> {
    theta: Vector<T>,
    mu: Option<Vector<T>>,
    cov: Option<Vector<T>>,
    second_moment: Option<Vector<T>>,
    max_second_moment: Option<Vector<T>>,
    noise_draw: Vector<T>,
}

impl<T: Real> Update<T> {
    fn theta(theta: Vector<T>) -> Self {
        let d = theta.dim();
        Self {
            theta,
            mu: None,
            cov: None,
            second_moment: None,
            max_second_moment: None,
            noise_draw: Vector::zeros(d),
        }
    }
}

/// Runs `body` against a scratch copy of the stream and commits only if it
/// succeeds, so failed steps leave the state exactly as it was.
fn transact<T: Real>(
    state: &mut OptimizerState<T>,
    grad: &Vector<T>,
    body: impl FnOnce(&OptimizerState<T>, &mut GaussianStream) -> Result<Update<T>>,
) -> Result<StepReport<T>> {
    state.theta.check_dim(grad)?;
    let mut stream = state.stream.clone();
    let update = body(state, &mut stream)?;
    let effective_step = update.theta.sub(&state.theta)?;

    state.theta = update.theta;
    if let Some(mu) = update.mu {
        state.mu = mu;
    }
    if let Some(cov) = update.cov {
        state.cov = cov;
    }
    if let Some(v) = update.second_moment {
        state.second_moment = v;
    }
    if let Some(vmax) = update.max_second_moment {
        state.max_second_moment = vmax;
    }
    state.stream = stream;
    state.t += 1;

    Ok(StepReport {
        noise_draw: update.noise_draw,
        grad_norm: grad.norm(),
        effective_step,
    })
}

/// `μ_t = ρ μ_{t-1} + (1-ρ) g`
fn running_mean<T: Real>(mu: &Vector<T>, grad: &Vector<T>, rho: T) -> Result<Vector<T>> {
    mu.zip_with(grad, |m, g| rho * m + (T::one() - rho) * g)
}

fn isotropic_noise<T: Real>(
    stream: &mut GaussianStream,
    dim: usize,
    variance: T,
) -> Result<Vector<T>> {
    stream.sample(&Vector::zeros(dim), &Vector::filled(dim, variance)?)
}

/// `θ ← θ − η g`
pub fn sgd_step<T: Real>(
    state: &mut OptimizerState<T>,
    grad: &Vector<T>,
    hp: &HyperParams<T>,
) -> Result<StepReport<T>> {
    transact(state, grad, |s, _| {
        Ok(Update::theta(s.theta.zip_with(grad, |th, g| th - hp.eta * g)?))
    })
}

/// `μ ← ρ μ + (1−ρ) g`, then `θ ← θ − η μ`.
pub fn momentum_step<T: Real>(
    state: &mut OptimizerState<T>,
    grad: &Vector<T>,
    hp: &HyperParams<T>,
) -> Result<StepReport<T>> {
    transact(state, grad, |s, _| {
        let mu = running_mean(&s.mu, grad, hp.rho)?;
        let theta = s.theta.zip_with(&mu, |th, m| th - hp.eta * m)?;
        Ok(Update {
            mu: Some(mu),
            ..Update::theta(theta)
        })
    })
}

/// `θ ← θ − η (g + ξ)` with `ξ ~ N(0, ε I)`.
pub fn sgld_step<T: Real>(
    state: &mut OptimizerState<T>,
    grad: &Vector<T>,
    hp: &HyperParams<T>,
) -> Result<StepReport<T>> {
    transact(state, grad, |s, stream| {
        let xi = isotropic_noise(stream, s.dim(), hp.epsilon_noise)?;
        let drive = grad.zip_with(&xi, |g, x| g + x)?;
        let theta = s.theta.zip_with(&drive, |th, d| th - hp.eta * d)?;
        Ok(Update {
            noise_draw: xi,
            ..Update::theta(theta)
        })
    })
}

/// Momentum buffer as in [`momentum_step`], then `θ ← θ − η (μ + ξ)` with `ξ ~ N(0, ε I)`.
pub fn sghmc_step<T: Real>(
    state: &mut OptimizerState<T>,
    grad: &Vector<T>,
    hp: &HyperParams<T>,
) -> Result<StepReport<T>> {
    transact(state, grad, |s, stream| {
        let mu = running_mean(&s.mu, grad, hp.rho)?;
        let xi = isotropic_noise(stream, s.dim(), hp.epsilon_noise)?;
        let drive = mu.zip_with(&xi, |m, x| m + x)?;
        let theta = s.theta.zip_with(&drive, |th, d| th - hp.eta * d)?;
        Ok(Update {
            mu: Some(mu),
            noise_draw: xi,
            ..Update::theta(theta)
        })
    })
}

fn accumulate<T: Real>(
    mu_prev: &Vector<T>,
    cov_prev: &Vector<T>,
    grad: &Vector<T>,
    rho: T,
) -> Result<(Vector<T>, Vector<T>)> {
    mu_prev.check_dim(grad)?;
    let mu = running_mean(mu_prev, grad, rho)?;
    let one = T::one();
    let cov = Vector::new(
        (0..grad.dim())
            .map(|i| rho * cov_prev[i] + (one - rho) * (grad[i] - mu[i]) * (grad[i] - mu_prev[i]))
            .collect(),
    )?;
    Ok((mu, cov))
}

/// ASGLD moment update.
///
/// `μ_t = ρ μ_{t−1} + (1−ρ) g` is formed first, then
/// `C_t = ρ C_{t−1} + (1−ρ)(g − μ_t) ⊙ (g − μ_{t−1})` using both means. The raw
/// `C_t` (entries may be negative) is stored in `state.cov`; `theta` and `t`
/// are not touched.
pub fn asgld_accumulate<T: Real>(
    state: &mut OptimizerState<T>,
    grad: &Vector<T>,
    hp: &HyperParams<T>,
) -> Result<(Vector<T>, Vector<T>)> {
    let (mu, cov) = accumulate(&state.mu, &state.cov, grad, hp.rho)?;
    state.mu = mu.clone();
    state.cov = cov.clone();
    Ok((mu, cov))
}

/// Adaptively preconditioned SGLD.
///
/// After [`asgld_accumulate`], draws `ξ ~ N(μ_t, max(C_t, 0))` per coordinate
/// and applies `θ ← θ − η (g + ψ ξ)`. With `zero_mean_noise` set the draw is
/// centred on zero instead.
pub fn asgld_step<T: Real>(
    state: &mut OptimizerState<T>,
    grad: &Vector<T>,
    hp: &HyperParams<T>,
) -> Result<StepReport<T>> {
    transact(state, grad, |s, stream| {
        let (mu, cov) = accumulate(&s.mu, &s.cov, grad, hp.rho)?;
        let variance = cov.map(|c| c.max(T::zero()))?;
        let mean = if hp.zero_mean_noise {
            Vector::zeros(s.dim())
        } else {
            mu.clone()
        };
        let xi = stream.sample(&mean, &variance)?;
        let drive = grad.zip_with(&xi, |g, x| g + hp.psi * x)?;
        let theta = s.theta.zip_with(&drive, |th, d| th - hp.eta * d)?;
        Ok(Update {
            mu: Some(mu),
            cov: Some(cov),
            noise_draw: xi,
            ..Update::theta(theta)
        })
    })
}

/// RMSProp-preconditioned SGLD.
///
/// `v ← β₂ v + (1−β₂) g²`, `P = 1 / (√v + stab)`,
/// `θ ← θ − η (P ⊙ g + √P ⊙ ζ)` with `ζ ~ N(0, ε I)`. The reported noise is
/// the preconditioned draw `√P ⊙ ζ`.
pub fn psgld_step<T: Real>(
    state: &mut OptimizerState<T>,
    grad: &Vector<T>,
    hp: &HyperParams<T>,
) -> Result<StepReport<T>> {
    transact(state, grad, |s, stream| {
        let one = T::one();
        let v = s
            .second_moment
            .zip_with(grad, |v, g| hp.beta2 * v + (one - hp.beta2) * g * g)?;
        let precond = v.map(|v| one / (v.sqrt() + hp.stab))?;
        let zeta = isotropic_noise(stream, s.dim(), hp.epsilon_noise)?;
        let noise = precond.zip_with(&zeta, |p, z| p.sqrt() * z)?;
        let d = s.dim();
        let theta = Vector::new(
            (0..d)
                .map(|i| s.theta[i] - hp.eta * (precond[i] * grad[i] + noise[i]))
                .collect(),
        )?;
        Ok(Update {
            second_moment: Some(v),
            noise_draw: noise,
            ..Update::theta(theta)
        })
    })
}

/// `v ← v + g²`, `θ ← θ − η g / (√v + stab)`.
pub fn adagrad_step<T: Real>(
    state: &mut OptimizerState<T>,
    grad: &Vector<T>,
    hp: &HyperParams<T>,
) -> Result<StepReport<T>> {
    transact(state, grad, |s, _| {
        let v = s.second_moment.zip_with(grad, |v, g| v + g * g)?;
        let theta = Vector::new(
            (0..s.dim())
                .map(|i| s.theta[i] - hp.eta * grad[i] / (v[i].sqrt() + hp.stab))
                .collect(),
        )?;
        Ok(Update {
            second_moment: Some(v),
            ..Update::theta(theta)
        })
    })
}

/// Adam with bias correction on both moments.
pub fn adam_step<T: Real>(
    state: &mut OptimizerState<T>,
    grad: &Vector<T>,
    hp: &HyperParams<T>,
) -> Result<StepReport<T>> {
    transact(state, grad, |s, _| {
        let one = T::one();
        let m = running_mean(&s.mu, grad, hp.beta1)?;
        let v = s
            .second_moment
            .zip_with(grad, |v, g| hp.beta2 * v + (one - hp.beta2) * g * g)?;
        let step = (s.t + 1) as i32;
        let bc1 = one - hp.beta1.powi(step);
        let bc2 = one - hp.beta2.powi(step);
        let theta = Vector::new(
            (0..s.dim())
                .map(|i| {
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    s.theta[i] - hp.eta * m_hat / (v_hat.sqrt() + hp.stab)
                })
                .collect(),
        )?;
        Ok(Update {
            mu: Some(m),
            second_moment: Some(v),
            ..Update::theta(theta)
        })
    })
}

/// AMSGrad: Adam moments without bias correction, denominator taken from the
/// elementwise running maximum of `v`.
pub fn amsgrad_step<T: Real>(
    state: &mut OptimizerState<T>,
    grad: &Vector<T>,
    hp: &HyperParams<T>,
) -> Result<StepReport<T>> {
    transact(state, grad, |s, _| {
        let one = T::one();
        let m = running_mean(&s.mu, grad, hp.beta1)?;
        let v = s
            .second_moment
            .zip_with(grad, |v, g| hp.beta2 * v + (one - hp.beta2) * g * g)?;
        let vmax = s.max_second_moment.zip_with(&v, |a, b| a.max(b))?;
        let theta = Vector::new(
            (0..s.dim())
                .map(|i| s.theta[i] - hp.eta * m[i] / (vmax[i].sqrt() + hp.stab))
                .collect(),
        )?;
        Ok(Update {
            mu: Some(m),
            second_moment: Some(v),
            max_second_moment: Some(vmax),
            ..Update::theta(theta)
        })
    })
}
