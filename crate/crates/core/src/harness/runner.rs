use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::optim::OptimizerState;
use crate::problems::{accuracy, partition_loss, sample_batch, Batch, Partition, Problem};

use super::config::ExperimentConfig;
use super::record::{EpochRow, RunRecord};
use super::schedule::schedule_eta;

/// Independent sub-seeds for the streams a run owns.
#[derive(Debug, Clone, Copy)]
pub(crate) enum SeedRole {
    Init = 1,
    OptimizerNoise = 2,
    Batches = 3,
    GradientNoise = 4,
}

/// SplitMix64 finaliser over `seed ⊕ role`.
pub(crate) fn derive_seed(seed: u64, role: SeedRole) -> u64 {
    let mut z = seed ^ (role as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs one experiment end to end and persists its record when
/// `cfg.output` is set.
///
/// Divergence (a non-finite gradient, parameter or loss) is not an error: the
/// record keeps the completed epochs and names the failing one.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let record = execute(cfg)?;
    if let Some(path) = &cfg.output {
        record.write_csv(path)?;
    }
    Ok(record)
}

fn execute(cfg: &ExperimentConfig) -> Result<RunRecord> {
    if cfg.epochs == 0 {
        return Err(Error::EmptySchedule);
    }
    cfg.schedule.validate()?;
    let problem = cfg.problem.build(derive_seed(cfg.seed, SeedRole::GradientNoise))?;
    let problem = problem.as_ref();
    let train_rows = problem.dataset().map(|d| d.partition(Partition::Train).to_vec());
    if let Some(rows) = &train_rows {
        if cfg.batch_size > rows.len() {
            return Err(Error::Config(format!(
                "batch size {} exceeds the {} training rows",
                cfg.batch_size,
                rows.len()
            )));
        }
    }
    let steps_per_epoch = match &train_rows {
        Some(rows) => rows.len().div_ceil(cfg.batch_size),
        None => cfg.problem.steps_per_epoch,
    };

    let theta0 = cfg
        .problem
        .initial_point(problem, derive_seed(cfg.seed, SeedRole::Init))?;
    let mut state = OptimizerState::new(theta0, derive_seed(cfg.seed, SeedRole::OptimizerNoise));
    let mut batch_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SeedRole::Batches));
    let started = Instant::now();
    let mut record = RunRecord::default();
    let mut ticket = 0u64;

    for epoch in 1..=cfg.epochs {
        let eta = schedule_eta(&cfg.schedule, epoch, cfg.epochs);
        let hp = cfg.hp.with_eta(eta)?;
        let mut diverged = false;
        for _ in 0..steps_per_epoch {
            let batch = match &train_rows {
                Some(rows) => sample_batch(&mut batch_rng, rows, cfg.batch_size),
                None => Batch::Ticket(ticket),
            };
            ticket += 1;
            let stepped = problem
                .grad(state.theta(), &batch)
                .and_then(|g| cfg.method.step(&mut state, &g, &hp));
            match stepped {
                Ok(_) => {}
                Err(Error::NonFinite { .. }) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        let row = if diverged {
            None
        } else {
            evaluate(problem, &state, epoch, eta)?
        };
        match row {
            Some(mut row) => {
                if cfg.wall_clock {
                    row.wall_secs = started.elapsed().as_secs_f64();
                }
                record.rows.push(row);
            }
            None => {
                record.diverged_at = Some(epoch);
                break;
            }
        }
    }
    Ok(record)
}

/// Epoch metrics, or `None` if the loss is no longer finite.
fn evaluate(
    problem: &dyn Problem<f64>,
    state: &OptimizerState<f64>,
    epoch: usize,
    eta: f64,
) -> Result<Option<EpochRow>> {
    let theta = state.theta();
    let train_loss = match problem.full_eval(theta) {
        Ok(l) if l.is_finite() => l,
        Ok(_) | Err(Error::NonFinite { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let (train_acc, test_loss, test_acc) = if problem.dataset().is_some() {
        let test = |f: &dyn Fn() -> Result<f64>| match f() {
            Err(Error::EmptyPartition) => Ok(f64::NAN),
            other => other,
        };
        (
            accuracy(problem, theta, Partition::Train)?,
            test(&|| partition_loss(problem, theta, Partition::Test))?,
            test(&|| accuracy(problem, theta, Partition::Test))?,
        )
    } else {
        // landscapes: the exact loss doubles as the held-out loss
        (f64::NAN, train_loss, f64::NAN)
    };
    Ok(Some(EpochRow {
        epoch,
        eta,
        train_loss,
        train_acc,
        test_loss,
        test_acc,
        wall_secs: 0.0,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{ProblemConfig, ProblemSpec};
    use crate::harness::schedule::Schedule;
    use crate::optim::{HyperParams, Method};

    fn quad_cfg(method: Method, eta: f64) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(
            method,
            HyperParams::builder(eta).build().unwrap(),
            ProblemConfig {
                init: Some(vec![1.0; 10]),
                ..ProblemConfig::landscape(ProblemSpec::Quadratic { dim: 10, condition: 10.0 })
            },
            Schedule::constant(eta),
        );
        cfg.epochs = 100;
        cfg
    }

    #[test]
    fn zero_epochs_rejected() {
        let mut cfg = quad_cfg(Method::Sgd, 0.05);
        cfg.epochs = 0;
        let err = run_experiment(&cfg).unwrap_err();
        assert!(matches!(err, Error::EmptySchedule));
        assert!(err.to_string().contains("empty schedule"));
    }

    #[test]
    fn sgd_converges_on_quadratic() {
        let rec = run_experiment(&quad_cfg(Method::Sgd, 0.05)).unwrap();
        assert_eq!(rec.rows.len(), 100);
        assert!(rec.rows.iter().enumerate().all(|(i, r)| r.epoch == i + 1));
        assert!(rec.last().unwrap().train_loss < 1e-6);
    }

    #[test]
    fn divergence_is_recorded_not_raised() {
        let rec = run_experiment(&quad_cfg(Method::Sgd, 5.0)).unwrap();
        let at = rec.diverged_at.expect("diverges");
        assert_eq!(rec.rows.len(), at - 1);
        assert!(rec.to_csv().ends_with(&format!("diverged,{at}\n")));
    }

    #[test]
    fn identical_configs_identical_records() {
        let mut cfg = quad_cfg(Method::Asgld, 0.05);
        cfg.problem.grad_noise = 0.1;
        let a = run_experiment(&cfg).unwrap().to_csv();
        let b = run_experiment(&cfg).unwrap().to_csv();
        assert_eq!(a, b);
        let c = run_experiment(&cfg.with_seed(1)).unwrap().to_csv();
        assert_ne!(a, c);
    }

    #[test]
    fn batch_size_bounded_by_training_rows() {
        let mut cfg = quad_cfg(Method::Sgd, 0.1);
        cfg.problem = ProblemConfig {
            spec: ProblemSpec::TwoMoons {
                n: 20,
                noise_sd: 0.1,
                model: crate::harness::config::ModelSpec::Logistic { l2: 0.0 },
            },
            ..ProblemConfig::landscape(ProblemSpec::Saddle)
        };
        cfg.batch_size = 17;
        assert!(run_experiment(&cfg).is_err());
        cfg.batch_size = 16;
        cfg.epochs = 3;
        let rec = run_experiment(&cfg).unwrap();
        assert_eq!(rec.rows.len(), 3);
        assert!(rec.rows[0].test_acc >= 0.0);
    }

    #[test]
    fn persists_when_output_set() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = quad_cfg(Method::Momentum, 0.05);
        cfg.epochs = 5;
        cfg.output = Some(dir.path().join("nested/run.csv"));
        let rec = run_experiment(&cfg).unwrap();
        let text = std::fs::read_to_string(dir.path().join("nested/run.csv")).unwrap();
        assert_eq!(text, rec.to_csv());
    }

    #[test]
    fn derived_seeds_differ_by_role() {
        let roles = [SeedRole::Init, SeedRole::OptimizerNoise, SeedRole::Batches, SeedRole::GradientNoise];
        let seeds: Vec<u64> = roles.iter().map(|&r| derive_seed(42, r)).collect();
        for i in 0..seeds.len() {
            for j in i + 1..seeds.len() {
                assert_ne!(seeds[i], seeds[j]);
            }
        }
    }
}
