//! Command-line front end. `parse_args` turns argv into a [`CliCommand`];
//! `execute` runs it against the library. Exit codes: 0 success, 1 runtime or
//! validation failure, 2 usage error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use asgld::harness::{
    compare, format_sig, gradcheck, grid_search, load_config, parse_config, run_experiment, sanitize_label, tune,
    write_records, ExperimentSetup, GridMetric, Override, GRADCHECK_TOLERANCE,
};
use clap::{Args, Parser, Subcommand};

pub const OUT_DIR_ENV: &str = "ASGLD_OUT_DIR";
pub const DEFAULT_SEEDS: usize = 5;
pub const GRADCHECK_POINTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    Run,
    Sweep,
    Compare,
    Plot,
    Gradcheck,
}

/// A validated command. Overrides already include `--seed` (as `run.seed`).
#[derive(Debug, Clone, PartialEq)]
pub struct CliCommand {
    pub verb: Verb,
    pub configs: Vec<PathBuf>,
    pub overrides: Vec<Override>,
    /// `--out`, else `$ASGLD_OUT_DIR`. A directory, except for `plot` where it is the SVG path.
    pub out: Option<PathBuf>,
    /// Record files for `plot`.
    pub inputs: Vec<PathBuf>,
    pub metric: String,
    pub seeds: usize,
    pub tune: bool,
    pub corrupt_grad: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<asgld::Error> for CliError {
    fn from(e: asgld::Error) -> Self {
        CliError::runtime(format!("error: {e}"))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::runtime(format!("error: {e}"))
    }
}

#[derive(Parser, Debug)]
#[command(name = "asgld", version, about = "Run, tune, compare and plot optimizer experiments")]
struct Cli {
    #[command(subcommand)]
    verb: VerbArgs,
}

#[derive(Args, Debug)]
struct Common {
    /// Override a config key, e.g. `--set optimizer.psi=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_override)]
    set: Vec<Override>,
    /// Base seed; replaces run.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: $ASGLD_OUT_DIR, else the current directory]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum VerbArgs {
    /// Run one experiment and write its record.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Grid-search the base step size.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run several configs over the same seeds and summarise.
    Compare {
        /// One per optimizer; give at least two.
        #[arg(long = "config", required = true, num_args = 1..)]
        configs: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SEEDS)]
        seeds: usize,
        /// Tune each config's step size with its grid first.
        #[arg(long)]
        tune: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Render record CSVs as an SVG of training curves.
    Plot {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, default_value = "test_acc")]
        metric: String,
        /// SVG path [default: $ASGLD_OUT_DIR/plot.svg, else ./plot.svg]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients of a problem.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, hide = true)]
        corrupt_grad: bool,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_override(s: &str) -> Result<Override, String> {
    s.parse::<Override>().map_err(|e| e.to_string())
}

fn env_out() -> Option<PathBuf> {
    std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn require_files(paths: &[PathBuf], what: &str) -> Result<(), CliError> {
    match paths.iter().find(|p| !p.is_file()) {
        Some(p) => Err(CliError::runtime(format!("error: {what} not found: {}", p.display()))),
        None => Ok(()),
    }
}

/// Parses arguments (without the program name).
pub fn parse_args<I, S>(argv: I) -> Result<CliCommand, CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let full = std::iter::once(OsString::from("asgld")).chain(argv.into_iter().map(Into::into));
    let cli = Cli::try_parse_from(full).map_err(|e| CliError {
        code: e.exit_code(),
        message: e.render().to_string(),
    })?;

    let mut cmd = CliCommand {
        verb: Verb::Run,
        configs: Vec::new(),
        overrides: Vec::new(),
        out: None,
        inputs: Vec::new(),
        metric: String::new(),
        seeds: DEFAULT_SEEDS,
        tune: false,
        corrupt_grad: false,
    };
    let apply_common = |cmd: &mut CliCommand, c: Common| {
        cmd.overrides = c.set;
        if let Some(seed) = c.seed {
            cmd.overrides
                .push(format!("run.seed={seed}").parse().expect("run.seed is a known key"));
        }
        cmd.out = c.out.or_else(env_out);
    };
    match cli.verb {
        VerbArgs::Run { config, common } => {
            cmd.verb = Verb::Run;
            cmd.configs = vec![config];
            apply_common(&mut cmd, common);
        }
        VerbArgs::Sweep { config, common } => {
            cmd.verb = Verb::Sweep;
            cmd.configs = vec![config];
            apply_common(&mut cmd, common);
        }
        VerbArgs::Compare {
            configs,
            seeds,
            tune,
            common,
        } => {
            if configs.len() < 2 {
                return Err(CliError {
                    code: 2,
                    message: "error: compare needs at least two --config files".into(),
                });
            }
            if seeds == 0 {
                return Err(CliError {
                    code: 2,
                    message: "error: --seeds must be positive".into(),
                });
            }
            cmd.verb = Verb::Compare;
            cmd.configs = configs;
            cmd.seeds = seeds;
            cmd.tune = tune;
            apply_common(&mut cmd, common);
        }
        VerbArgs::Plot { files, metric, out } => {
            cmd.verb = Verb::Plot;
            cmd.inputs = files;
            cmd.metric = metric;
            cmd.out = out.or_else(|| env_out().map(|d| d.join("plot.svg")));
        }
        VerbArgs::Gradcheck {
            config,
            corrupt_grad,
            common,
        } => {
            cmd.verb = Verb::Gradcheck;
            cmd.configs = config.into_iter().collect();
            cmd.corrupt_grad = corrupt_grad;
            apply_common(&mut cmd, common);
        }
    }
    require_files(&cmd.configs, "config file")?;
    require_files(&cmd.inputs, "record file")?;
    Ok(cmd)
}

fn out_dir(cmd: &CliCommand) -> PathBuf {
    cmd.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn load(cmd: &CliCommand, path: &Path) -> Result<ExperimentSetup, CliError> {
    Ok(load_config(path, &cmd.overrides)?)
}

/// Runs a parsed command, writing progress to `stdout`.
pub fn execute(cmd: &CliCommand, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cmd.verb {
        Verb::Run => run_cmd(cmd, stdout),
        Verb::Sweep => sweep_cmd(cmd, stdout),
        Verb::Compare => compare_cmd(cmd, stdout),
        Verb::Plot => plot_cmd(cmd, stdout),
        Verb::Gradcheck => gradcheck_cmd(cmd, stdout),
    }
}

/// Where `run` writes its record: `--out`/env directory first, then `run.output`.
pub fn run_output_path(cmd: &CliCommand, setup: &ExperimentSetup) -> PathBuf {
    let cfg = &setup.experiment;
    let stem = format!("{}.csv", sanitize_label(&cfg.label()));
    match (&cmd.out, &cfg.output) {
        (Some(dir), _) => dir.join(stem),
        (None, Some(path)) => path.clone(),
        (None, None) => PathBuf::from(stem),
    }
}

fn run_cmd(cmd: &CliCommand, stdout: &mut dyn Write) -> Result<(), CliError> {
    let setup = load(cmd, &cmd.configs[0])?;
    let csv = run_output_path(cmd, &setup);
    let mut cfg = setup.experiment.clone();
    cfg.output = Some(csv.clone());
    let record = run_experiment(&cfg)?;
    let replay = csv.with_extension("toml");
    fs::write(&replay, cfg.to_config_text(Some(&setup.grid)))?;

    let mut msg = format!("{}: {} epochs", cfg.label(), record.rows.len());
    if let Some(last) = record.last() {
        let _ = write!(
            msg,
            ", final train_loss {} test_loss {} test_acc {}",
            format_sig(last.train_loss),
            format_sig(last.test_loss),
            format_sig(last.test_acc)
        );
    }
    if let Some(at) = record.diverged_at {
        let _ = write!(msg, ", diverged at epoch {at}");
    }
    writeln!(stdout, "{msg}")?;
    writeln!(stdout, "wrote {} and {}", csv.display(), replay.display())?;
    Ok(())
}

/// Filename for one grid point of a sweep.
pub fn sweep_record_name(label: &str, eta: f64) -> String {
    format!("{}_eta{}.csv", sanitize_label(label), format_sig(eta))
}

fn sweep_cmd(cmd: &CliCommand, stdout: &mut dyn Write) -> Result<(), CliError> {
    let setup = load(cmd, &cmd.configs[0])?;
    let cfg = &setup.experiment;
    let metric = GridMetric::default_for(cfg);
    let result = grid_search(cfg, &setup.grid, metric)?;
    let dir = out_dir(cmd);
    fs::create_dir_all(&dir)?;
    let label = cfg.label();
    let mut summary = String::from("eta,score,diverged\n");
    for (eta, rec) in &result.records {
        rec.write_csv(dir.join(sweep_record_name(&label, *eta)))?;
        let score = metric.score(rec).unwrap_or(f64::NAN);
        let _ = writeln!(summary, "{},{},{}", format_sig(*eta), format_sig(score), rec.diverged());
    }
    let summary_path = dir.join(format!("{}_sweep.csv", sanitize_label(&label)));
    fs::write(&summary_path, summary)?;
    writeln!(
        stdout,
        "{label}: best eta {} (score {}) after {} runs, {} extensions",
        format_sig(result.best_eta),
        format_sig(result.best_score),
        result.records.len(),
        result.extensions
    )?;
    if result.boundary_warning {
        writeln!(stdout, "warning: best step size is on the grid boundary after all extensions")?;
    }
    writeln!(stdout, "wrote {}", summary_path.display())?;
    Ok(())
}

fn compare_cmd(cmd: &CliCommand, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut cfgs = Vec::with_capacity(cmd.configs.len());
    for path in &cmd.configs {
        let setup = load(cmd, path)?;
        let cfg = if cmd.tune {
            let (tuned, result) = tune(&setup.experiment, &setup.grid, GridMetric::default_for(&setup.experiment))?;
            writeln!(stdout, "{}: tuned eta {}", tuned.label(), format_sig(result.best_eta))?;
            if result.boundary_warning {
                writeln!(stdout, "warning: {} step size is on the grid boundary", tuned.label())?;
            }
            tuned
        } else {
            setup.experiment
        };
        cfgs.push(cfg);
    }
    let table = compare(&cfgs, cmd.seeds)?;
    let dir = out_dir(cmd);
    table.write_csv(dir.join("comparison.csv"))?;
    fs::write(dir.join("summary.csv"), table.summary_csv())?;
    write_records(&table, &dir)?;
    write!(stdout, "{table}")?;
    writeln!(stdout, "wrote {}", dir.join("comparison.csv").display())?;
    Ok(())
}

fn plot_cmd(cmd: &CliCommand, stdout: &mut dyn Write) -> Result<(), CliError> {
    let out = cmd.out.clone().unwrap_or_else(|| PathBuf::from("plot.svg"));
    asgld::plot::emit_plot(&cmd.inputs, &cmd.metric, &out)?;
    writeln!(stdout, "wrote {}", out.display())?;
    Ok(())
}

fn gradcheck_cmd(cmd: &CliCommand, stdout: &mut dyn Write) -> Result<(), CliError> {
    let setup = match cmd.configs.first() {
        Some(path) => load(cmd, path)?,
        None => parse_config("", &cmd.overrides)?,
    };
    let cfg = &setup.experiment;
    let report = gradcheck(&cfg.problem, GRADCHECK_POINTS, cfg.seed, cmd.corrupt_grad)?;
    writeln!(
        stdout,
        "max relative error {:e} over {} points (tolerance {:e})",
        report.max_rel_error, report.points, GRADCHECK_TOLERANCE
    )?;
    if report.passed() {
        writeln!(stdout, "gradient check passed")?;
        Ok(())
    } else {
        Err(CliError::runtime("gradient check failed"))
    }
}

/// Full entry point: parse, execute, report. Returns the process exit code.
pub fn main_with<I, S>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let result = parse_args(argv).and_then(|cmd| execute(&cmd, stdout));
    match result {
        Ok(()) => 0,
        Err(e) if e.code == 0 => {
            let _ = write!(stdout, "{}", e.message);
            0
        }
        Err(e) => {
            let _ = writeln!(stderr, "{}", e.message.trim_end());
            e.code
        }
    }
}
