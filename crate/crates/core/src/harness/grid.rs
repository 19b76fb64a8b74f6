//! Logarithmic step-size grid with boundary extension.
//!
//! All initial points are evaluated; while the best point sits at either end
//! of the grid a new point is added one ratio step beyond it, up to
//! `max_extensions` times.

use rayon::prelude::*;

use crate::error::{Error, Result};

use super::config::ExperimentConfig;
use super::record::RunRecord;
use super::runner::run_experiment;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub center: f64,
    pub points: usize,
    pub ratio: f64,
    pub max_extensions: usize,
}

impl GridSpec {
    /// Five points a decade apart, up to four extensions.
    pub fn around(center: f64) -> Self {
        Self {
            center,
            points: 5,
            ratio: 10.0,
            max_extensions: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.center > 0.0 && self.center.is_finite()) {
            return Err(Error::Config(format!("grid center must be > 0, got {}", self.center)));
        }
        if self.points == 0 {
            return Err(Error::Config("grid needs at least one point".into()));
        }
        if !(self.ratio > 1.0 && self.ratio.is_finite()) {
            return Err(Error::Config(format!("grid ratio must be > 1, got {}", self.ratio)));
        }
        Ok(())
    }

    /// Exponents `k` of the initial points `center · ratio^k`, centred on 0.
    fn initial_exponents(&self) -> Vec<f64> {
        let mid = (self.points as f64 - 1.0) / 2.0;
        (0..self.points).map(|i| i as f64 - mid).collect()
    }

    fn eta(&self, exponent: f64) -> f64 {
        self.center * self.ratio.powf(exponent)
    }

    /// Initial grid values in increasing order.
    pub fn values(&self) -> Vec<f64> {
        self.initial_exponents().into_iter().map(|k| self.eta(k)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    HigherIsBetter,
    LowerIsBetter,
}

#[derive(Debug, Clone)]
pub struct GridPoint<R> {
    pub eta: f64,
    /// `None` when the run diverged or produced no usable metric.
    pub score: Option<f64>,
    pub result: R,
}

#[derive(Debug, Clone)]
pub struct GridOutcome<R> {
    pub best_eta: f64,
    pub best_score: f64,
    /// Every evaluated point, sorted by step size.
    pub points: Vec<GridPoint<R>>,
    pub extensions: usize,
    /// The best point is still on the boundary after the extension budget ran out.
    pub boundary_capped: bool,
}

impl<R> GridOutcome<R> {
    pub fn runs(&self) -> usize {
        self.points.len()
    }
}

/// Index of the best score. Ties prefer interior points so a plateau that
/// reaches the edge does not trigger extension.
fn best_index(scores: &[Option<f64>], direction: Direction) -> Option<usize> {
    let better = |a: f64, b: f64| match direction {
        Direction::HigherIsBetter => a > b,
        Direction::LowerIsBetter => a < b,
    };
    let best = scores
        .iter()
        .filter_map(|&s| s)
        .fold(None, |acc: Option<f64>, s| match acc {
            Some(b) if !better(s, b) => Some(b),
            _ => Some(s),
        })?;
    let tied: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] == Some(best)).collect();
    let last = scores.len() - 1;
    let interior: Vec<usize> = tied.iter().copied().filter(|&i| i != 0 && i != last).collect();
    Some(if interior.is_empty() { tied[0] } else { interior[interior.len() / 2] })
}

/// Grid search over any scoring function of the step size.
pub fn search<R, F>(grid: &GridSpec, direction: Direction, evaluate: F) -> Result<GridOutcome<R>>
where
    R: Send,
    F: Fn(f64) -> Result<(Option<f64>, R)> + Sync,
{
    grid.validate()?;
    let run = |k: f64| -> Result<(f64, GridPoint<R>)> {
        let eta = grid.eta(k);
        let (score, result) = evaluate(eta)?;
        let score = score.filter(|s| s.is_finite());
        Ok((k, GridPoint { eta, score, result }))
    };
    let mut evaluated: Vec<(f64, GridPoint<R>)> = grid
        .initial_exponents()
        .into_par_iter()
        .map(run)
        .collect::<Result<_>>()?;

    let mut extensions = 0;
    loop {
        let scores: Vec<Option<f64>> = evaluated.iter().map(|(_, p)| p.score).collect();
        let Some(best) = best_index(&scores, direction) else {
            return Err(Error::AllDiverged {
                points: evaluated.iter().map(|(_, p)| p.eta).collect(),
            });
        };
        let at_low = best == 0;
        let at_high = best == evaluated.len() - 1;
        if !(at_low || at_high) || extensions == grid.max_extensions {
            let boundary_capped = at_low || at_high;
            let best_eta = evaluated[best].1.eta;
            let best_score = evaluated[best].1.score.expect("best has a score");
            return Ok(GridOutcome {
                best_eta,
                best_score,
                points: evaluated.into_iter().map(|(_, p)| p).collect(),
                extensions,
                boundary_capped,
            });
        }
        extensions += 1;
        if at_low {
            let k = evaluated[0].0 - 1.0;
            evaluated.insert(0, run(k)?);
        } else {
            let k = evaluated[evaluated.len() - 1].0 + 1.0;
            evaluated.push(run(k)?);
        }
    }
}

/// Which number from a finished run the grid optimises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMetric {
    /// Last-epoch test accuracy, higher is better.
    FinalTestAccuracy,
    /// Last-epoch exact / full-training loss, lower is better.
    FinalFullEval,
}

impl GridMetric {
    /// Test accuracy for dataset problems, full evaluation for landscapes.
    pub fn default_for(cfg: &ExperimentConfig) -> Self {
        if cfg.problem.spec.is_dataset() {
            GridMetric::FinalTestAccuracy
        } else {
            GridMetric::FinalFullEval
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            GridMetric::FinalTestAccuracy => Direction::HigherIsBetter,
            GridMetric::FinalFullEval => Direction::LowerIsBetter,
        }
    }

    pub fn score(self, record: &RunRecord) -> Option<f64> {
        if record.diverged() {
            return None;
        }
        let last = record.last()?;
        let v = match self {
            GridMetric::FinalTestAccuracy => last.test_acc,
            GridMetric::FinalFullEval => last.train_loss,
        };
        v.is_finite().then_some(v)
    }
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best_eta: f64,
    pub best_score: f64,
    /// `(eta, record)` for every run, sorted by step size.
    pub records: Vec<(f64, RunRecord)>,
    pub extensions: usize,
    /// Set when the optimum is still on the grid boundary after all extensions.
    pub boundary_warning: bool,
}

/// Tunes the base step size of `template`. Runs are not persisted.
pub fn grid_search(template: &ExperimentConfig, grid: &GridSpec, metric: GridMetric) -> Result<GridResult> {
    let outcome = search(grid, metric.direction(), |eta| {
        let mut cfg = template.with_eta(eta);
        cfg.output = None;
        let record = run_experiment(&cfg)?;
        Ok((metric.score(&record), record))
    })?;
    Ok(GridResult {
        best_eta: outcome.best_eta,
        best_score: outcome.best_score,
        extensions: outcome.extensions,
        boundary_warning: outcome.boundary_capped,
        records: outcome.points.into_iter().map(|p| (p.eta, p.result)).collect(),
    })
}

/// `template` with its base step size replaced by the grid winner.
pub fn tune(template: &ExperimentConfig, grid: &GridSpec, metric: GridMetric) -> Result<(ExperimentConfig, GridResult)> {
    let result = grid_search(template, grid, metric)?;
    Ok((template.with_eta(result.best_eta), result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Peaked score in log-space with its maximum at `opt`.
    fn peaked(opt: f64) -> impl Fn(f64) -> Result<(Option<f64>, ())> + Sync {
        move |eta: f64| Ok((Some(-(eta.ln() - opt.ln()).powi(2)), ()))
    }

    #[test]
    fn grid_values_are_log_spaced() {
        let g = GridSpec::around(0.01);
        let v = g.values();
        assert_eq!(v.len(), 5);
        for (a, b) in v.iter().zip([1e-4, 1e-3, 1e-2, 1e-1, 1.0]) {
            assert!((a / b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn interior_optimum_no_extension() {
        let out = search(&GridSpec::around(0.01), Direction::HigherIsBetter, peaked(0.02)).unwrap();
        assert_eq!(out.runs(), 5);
        assert_eq!(out.extensions, 0);
        assert!((out.best_eta - 0.01).abs() < 1e-15);
        assert!(!out.boundary_capped);
    }

    #[test]
    fn extends_downward_to_reach_optimum() {
        // optimum at 3e-7: initial grid bottoms at 1e-4, needs 1e-5, 1e-6, 1e-7, 1e-8
        let out = search(&GridSpec::around(0.01), Direction::HigherIsBetter, peaked(3e-7)).unwrap();
        assert_eq!(out.extensions, 4);
        assert_eq!(out.runs(), 9);
        assert!((out.best_eta / 1e-7 - 1.0).abs() < 1e-9);
        assert!(!out.boundary_capped);
    }

    #[test]
    fn extends_upward() {
        let out = search(&GridSpec::around(0.01), Direction::LowerIsBetter, |eta: f64| {
            Ok((Some((eta.log10() - 1.2).abs()), ()))
        })
        .unwrap();
        // 1 is on the edge, then 10 is on the edge, 100 confirms 10
        assert_eq!(out.extensions, 2);
        assert!((out.best_eta / 10.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn capped_extension_flags_boundary() {
        let grid = GridSpec {
            max_extensions: 0,
            ..GridSpec::around(0.01)
        };
        let out = search(&grid, Direction::HigherIsBetter, peaked(1e-9)).unwrap();
        assert_eq!(out.runs(), 5);
        assert!((out.best_eta / 1e-4 - 1.0).abs() < 1e-12);
        assert!(out.boundary_capped);
    }

    #[test]
    fn all_diverged_lists_points() {
        let err = search(&GridSpec::around(0.01), Direction::HigherIsBetter, |_| Ok((None, ()))).unwrap_err();
        match err {
            Error::AllDiverged { points } => assert_eq!(points.len(), 5),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn diverged_points_never_win() {
        let out = search(&GridSpec::around(1.0), Direction::LowerIsBetter, |eta: f64| {
            Ok((if eta > 1.0 { None } else { Some(eta) }, ()))
        })
        .unwrap();
        // monotone toward small eta: extends down four times
        assert!((out.best_eta / 1e-6 - 1.0).abs() < 1e-9);
        assert!(out.boundary_capped);
    }

    #[test]
    fn plateau_touching_edge_stays_interior() {
        let out = search(&GridSpec::around(1.0), Direction::HigherIsBetter, |eta: f64| {
            Ok((Some(if eta <= 1.0 { 1.0 } else { 0.5 }), ()))
        })
        .unwrap();
        assert_eq!(out.extensions, 0);
    }

    proptest! {
        #[test]
        fn lands_within_one_ratio_step_of_reachable_optimum(log_opt in -9.0f64..3.0, center_exp in -3i32..0) {
            let grid = GridSpec::around(10f64.powi(center_exp));
            let opt = 10f64.powf(log_opt);
            let out = search(&grid, Direction::HigherIsBetter, peaked(opt)).unwrap();
            let reach_low = grid.center * grid.ratio.powf(-2.0 - grid.max_extensions as f64);
            let reach_high = grid.center * grid.ratio.powf(2.0 + grid.max_extensions as f64);
            if opt >= reach_low && opt <= reach_high {
                prop_assert!((out.best_eta.log10() - opt.log10()).abs() <= 1.0 + 1e-9);
            }
        }
    }
}
