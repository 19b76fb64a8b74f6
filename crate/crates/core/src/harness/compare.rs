use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};

use super::config::ExperimentConfig;
use super::record::{format_sig, EpochRow, RunRecord};
use super::runner::run_experiment;

pub const COMPARISON_HEADER: &str = "optimizer,seed,epoch,eta,train_loss,train_acc,test_loss,test_acc,wall_secs";

/// Final-epoch metrics. Diverged runs contribute NaN.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FinalMetrics {
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
}

impl FinalMetrics {
    fn of(record: &RunRecord) -> Self {
        match (record.diverged(), record.last()) {
            (false, Some(r)) => Self {
                train_loss: r.train_loss,
                train_acc: r.train_acc,
                test_loss: r.test_loss,
                test_acc: r.test_acc,
            },
            _ => Self {
                train_loss: f64::NAN,
                train_acc: f64::NAN,
                test_loss: f64::NAN,
                test_acc: f64::NAN,
            },
        }
    }

    fn fields(&self) -> [f64; 4] {
        [self.train_loss, self.train_acc, self.test_loss, self.test_acc]
    }

    fn from_fields(f: [f64; 4]) -> Self {
        Self {
            train_loss: f[0],
            train_acc: f[1],
            test_loss: f[2],
            test_acc: f[3],
        }
    }
}

/// Mean and sample standard deviation (0 for a single value).
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone)]
pub struct ComparisonEntry {
    pub label: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub records: Vec<RunRecord>,
    pub mean: FinalMetrics,
    pub std: FinalMetrics,
    /// Per-epoch average over the seeds still running at that epoch.
    pub mean_curve: Vec<EpochRow>,
}

impl ComparisonEntry {
    pub fn finals(&self) -> Vec<FinalMetrics> {
        self.records.iter().map(FinalMetrics::of).collect()
    }

    pub fn diverged_runs(&self) -> usize {
        self.records.iter().filter(|r| r.diverged()).count()
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonTable {
    pub entries: Vec<ComparisonEntry>,
}

impl ComparisonTable {
    pub fn entry(&self, label: &str) -> Option<&ComparisonEntry> {
        self.entries.iter().find(|e| e.label == label)
    }

    /// Long format: one line per (optimizer, seed, epoch).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(COMPARISON_HEADER);
        out.push('\n');
        for e in &self.entries {
            for (seed, rec) in e.seeds.iter().zip(&e.records) {
                for row in &rec.rows {
                    let _ = write!(out, "{},{seed},", e.label);
                    row.write_fields(&mut out);
                    out.push('\n');
                }
            }
        }
        out
    }

    /// Per-optimizer mean and standard deviation of the final metrics.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "optimizer,runs,diverged,train_loss_mean,train_loss_std,train_acc_mean,train_acc_std,\
             test_loss_mean,test_loss_std,test_acc_mean,test_acc_std\n",
        );
        for e in &self.entries {
            let _ = write!(out, "{},{},{}", e.label, e.records.len(), e.diverged_runs());
            for (m, s) in e.mean.fields().iter().zip(e.std.fields()) {
                let _ = write!(out, ",{},{}", format_sig(*m), format_sig(s));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<16} {:>5} {:>22} {:>22} {:>22}",
            "optimizer", "runs", "train_loss", "test_loss", "test_acc"
        )?;
        for e in &self.entries {
            let cell = |m: f64, s: f64| format!("{} ± {}", format_sig_short(m), format_sig_short(s));
            writeln!(
                f,
                "{:<16} {:>5} {:>22} {:>22} {:>22}",
                e.label,
                e.records.len(),
                cell(e.mean.train_loss, e.std.train_loss),
                cell(e.mean.test_loss, e.std.test_loss),
                cell(e.mean.test_acc, e.std.test_acc),
            )?;
        }
        Ok(())
    }
}

fn format_sig_short(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:.4e}")
    }
}

/// Runs every config over seeds `seed, seed+1, …, seed+R−1` and summarises.
///
/// All configs must share the problem, epoch budget and base seed. Labels
/// come from `run.name` (or the optimizer name); duplicates get a `#n` suffix.
pub fn compare(cfgs: &[ExperimentConfig], seeds: usize) -> Result<ComparisonTable> {
    if cfgs.len() < 2 {
        return Err(Error::InvalidArgument("compare needs at least two configs".into()));
    }
    if seeds == 0 {
        return Err(Error::InvalidArgument("compare needs at least one seed".into()));
    }
    let first = &cfgs[0];
    for c in &cfgs[1..] {
        if c.problem != first.problem {
            return Err(Error::InvalidArgument(format!(
                "mismatched problems: `{}` and `{}`",
                first.label(),
                c.label()
            )));
        }
        if c.epochs != first.epochs {
            return Err(Error::InvalidArgument(format!(
                "mismatched epoch budgets: {} and {}",
                first.epochs, c.epochs
            )));
        }
        if c.seed != first.seed {
            return Err(Error::InvalidArgument(format!(
                "mismatched base seeds: {} and {}",
                first.seed, c.seed
            )));
        }
    }

    let mut labels: Vec<String> = Vec::with_capacity(cfgs.len());
    for c in cfgs {
        let base = c.label();
        let dupes = labels.iter().filter(|l| **l == base || l.starts_with(&format!("{base}#"))).count();
        labels.push(if dupes == 0 { base } else { format!("{base}#{}", dupes + 1) });
    }

    let seed_list: Vec<u64> = (0..seeds as u64).map(|i| first.seed.wrapping_add(i)).collect();
    let jobs: Vec<(usize, u64)> = (0..cfgs.len())
        .flat_map(|i| seed_list.iter().map(move |&s| (i, s)))
        .collect();
    let records: Vec<RunRecord> = jobs
        .par_iter()
        .map(|&(i, s)| {
            let mut cfg = cfgs[i].with_seed(s);
            cfg.output = None;
            run_experiment(&cfg)
        })
        .collect::<Result<_>>()?;

    let mut records = records.into_iter();
    let entries = cfgs
        .iter()
        .zip(labels)
        .map(|(cfg, label)| {
            let recs: Vec<RunRecord> = records.by_ref().take(seeds).collect();
            let finals: Vec<[f64; 4]> = recs.iter().map(|r| FinalMetrics::of(r).fields()).collect();
            let mut mean = [0.0; 4];
            let mut std = [0.0; 4];
            for k in 0..4 {
                let col: Vec<f64> = finals.iter().map(|f| f[k]).collect();
                (mean[k], std[k]) = mean_std(&col);
            }
            ComparisonEntry {
                label,
                config: cfg.clone(),
                seeds: seed_list.clone(),
                mean_curve: mean_curve(&recs),
                records: recs,
                mean: FinalMetrics::from_fields(mean),
                std: FinalMetrics::from_fields(std),
            }
        })
        .collect();
    Ok(ComparisonTable { entries })
}

fn mean_curve(records: &[RunRecord]) -> Vec<EpochRow> {
    let longest = records.iter().map(|r| r.rows.len()).max().unwrap_or(0);
    (0..longest)
        .map(|i| {
            let rows: Vec<&EpochRow> = records.iter().filter_map(|r| r.rows.get(i)).collect();
            let avg = |f: fn(&EpochRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / rows.len() as f64;
            EpochRow {
                epoch: rows[0].epoch,
                eta: avg(|r| r.eta),
                train_loss: avg(|r| r.train_loss),
                train_acc: avg(|r| r.train_acc),
                test_loss: avg(|r| r.test_loss),
                test_acc: avg(|r| r.test_acc),
                wall_secs: avg(|r| r.wall_secs),
            }
        })
        .collect()
}

/// Writes each record of a comparison as its own RunRecord CSV, named
/// `<label>_seed<seed>.csv`.
pub fn write_records(table: &ComparisonTable, dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    let mut written = Vec::new();
    for e in &table.entries {
        for (seed, rec) in e.seeds.iter().zip(&e.records) {
            let path = dir.join(format!("{}_seed{seed}.csv", sanitize_label(&e.label)));
            rec.write_csv(&path)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Label reduced to a filename-safe stem.
pub fn sanitize_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{ProblemConfig, ProblemSpec};
    use crate::harness::schedule::Schedule;
    use crate::optim::{HyperParams, Method};

    fn cfg(method: Method, hp: HyperParams<f64>) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(
            method,
            hp,
            ProblemConfig {
                grad_noise: 0.05,
                init: Some(vec![1.0; 4]),
                ..ProblemConfig::landscape(ProblemSpec::Quadratic { dim: 4, condition: 4.0 })
            },
            Schedule::constant(0.05),
        );
        c.epochs = 20;
        c
    }

    #[test]
    fn sgd_and_asgld_psi_zero_identical() {
        let sgd = cfg(Method::Sgd, HyperParams::builder(0.05).build().unwrap());
        let asgld = cfg(Method::Asgld, HyperParams::builder(0.05).psi(0.0).build().unwrap());
        let t = compare(&[sgd, asgld], 3).unwrap();
        let (a, b) = (&t.entries[0], &t.entries[1]);
        // NaN accuracy columns defeat PartialEq; compare the persisted form
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.to_csv(), rb.to_csv());
        }
        assert_eq!(a.mean.train_loss, b.mean.train_loss);
        assert_eq!(a.std.train_loss, b.std.train_loss);
        assert_eq!(a.seeds, vec![0, 1, 2]);
    }

    #[test]
    fn single_seed_std_is_zero() {
        let t = compare(
            &[
                cfg(Method::Sgd, HyperParams::builder(0.05).build().unwrap()),
                cfg(Method::Adam, HyperParams::builder(0.05).build().unwrap()),
            ],
            1,
        )
        .unwrap();
        for e in &t.entries {
            assert_eq!(e.std.train_loss, 0.0);
            assert_eq!(e.std.test_loss, 0.0);
        }
    }

    #[test]
    fn mismatched_problems_rejected() {
        let a = cfg(Method::Sgd, HyperParams::builder(0.05).build().unwrap());
        let mut b = a.clone();
        b.problem.spec = ProblemSpec::Saddle;
        assert!(compare(&[a.clone(), b], 1).is_err());
        assert!(compare(&[a.clone()], 1).is_err());
        let mut c = a.clone();
        c.epochs = 3;
        assert!(compare(&[a, c], 1).is_err());
    }

    #[test]
    fn duplicate_labels_disambiguated_and_csv_long_format() {
        let a = cfg(Method::Sgd, HyperParams::builder(0.05).build().unwrap());
        let t = compare(&[a.clone(), a], 2).unwrap();
        assert_eq!(t.entries[0].label, "sgd");
        assert_eq!(t.entries[1].label, "sgd#2");
        let csv = t.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(COMPARISON_HEADER));
        assert_eq!(csv.lines().count(), 1 + 2 * 2 * 20);
        assert!(csv.lines().nth(1).unwrap().starts_with("sgd,0,1,"));
        assert!(t.summary_csv().lines().count() == 3);
    }

    #[test]
    fn mean_std_basics() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }
}
