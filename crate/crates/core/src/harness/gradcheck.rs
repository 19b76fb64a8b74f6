use crate::error::Result;
use crate::problems::{gradient_check, ScaledGradient};

use super::config::ProblemConfig;

/// Largest acceptable relative error between analytic and central-difference gradients.
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;
pub const GRADCHECK_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckReport {
    pub points: usize,
    pub max_rel_error: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADCHECK_TOLERANCE
    }
}

/// Cross-checks a configured problem's gradient at `points` seeded points.
/// `corrupt` scales the first gradient coordinate by 1.01 first.
pub fn gradcheck(problem: &ProblemConfig, points: usize, seed: u64, corrupt: bool) -> Result<GradcheckReport> {
    let built = problem.build(seed)?;
    let max_rel_error = if corrupt {
        gradient_check(&ScaledGradient::new(built, 0, 1.01), points, seed, GRADCHECK_STEP)?
    } else {
        gradient_check(&built, points, seed, GRADCHECK_STEP)?
    };
    Ok(GradcheckReport { points, max_rel_error })
}
