use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Constant,
    /// Divide by `decay_factor` once past `decay_at_fraction` of the budget.
    StepDecay,
    /// `base / epoch`.
    InverseTime,
}

impl ScheduleKind {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Constant => "constant",
            ScheduleKind::StepDecay => "step_decay",
            ScheduleKind::InverseTime => "inverse_time",
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(ScheduleKind::Constant),
            "step_decay" => Ok(ScheduleKind::StepDecay),
            "inverse_time" => Ok(ScheduleKind::InverseTime),
            other => Err(Error::Config(format!("unknown schedule kind `{other}`"))),
        }
    }
}

/// Step size as a function of the (1-based) epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub base_eta: f64,
    pub decay_factor: f64,
    pub decay_at_fraction: f64,
}

impl Schedule {
    pub fn constant(base_eta: f64) -> Self {
        Self {
            kind: ScheduleKind::Constant,
            base_eta,
            decay_factor: 10.0,
            decay_at_fraction: 0.75,
        }
    }

    /// ×1/10 after 75% of the budget: epoch 150 of 200 is the last at `base_eta`.
    pub fn step_decay(base_eta: f64) -> Self {
        Self {
            kind: ScheduleKind::StepDecay,
            ..Self::constant(base_eta)
        }
    }

    pub fn inverse_time(base_eta: f64) -> Self {
        Self {
            kind: ScheduleKind::InverseTime,
            ..Self::constant(base_eta)
        }
    }

    pub fn with_base(self, base_eta: f64) -> Self {
        Self { base_eta, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_eta > 0.0 && self.base_eta.is_finite()) {
            return Err(Error::Config(format!("base step size must be > 0, got {}", self.base_eta)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor.is_finite()) {
            return Err(Error::Config(format!("decay factor must be > 0, got {}", self.decay_factor)));
        }
        if !(self.decay_at_fraction > 0.0 && self.decay_at_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "decay point must lie in (0, 1], got {}",
                self.decay_at_fraction
            )));
        }
        Ok(())
    }
}

/// Step size in effect during `epoch` (1-based) of a `total_epochs` budget.
pub fn schedule_eta(schedule: &Schedule, epoch: usize, total_epochs: usize) -> f64 {
    match schedule.kind {
        ScheduleKind::Constant => schedule.base_eta,
        ScheduleKind::StepDecay => {
            if epoch as f64 > schedule.decay_at_fraction * total_epochs as f64 {
                schedule.base_eta / schedule.decay_factor
            } else {
                schedule.base_eta
            }
        }
        ScheduleKind::InverseTime => schedule.base_eta / epoch.max(1) as f64,
    }
}
