//! Experiment description and its flat key-value file form.
//!
//! A config file is TOML restricted to scalar and array values under four
//! sections; every key is addressed by its dotted path (`optimizer.psi`).
//! Precedence is overrides > file > built-in defaults. Unknown keys are
//! rejected.
//!
//! | key | type | default |
//! |-----|------|---------|
//! | `optimizer.name` | sgd, momentum, sgld, sghmc, psgld, adagrad, adam, amsgrad, asgld | sgd |
//! | `optimizer.eta` | float > 0 (base step size) | 0.01 |
//! | `optimizer.rho` `psi` `epsilon_noise` `beta1` `beta2` `stab` | float | 0.9, 1, 0, 0.9, 0.999, 1e-8 |
//! | `optimizer.zero_mean_noise` | bool | false |
//! | `problem.kind` | quadratic, rosenbrock, saddle, two_moons, csv | quadratic |
//! | `problem.dim` `condition` | int, float (quadratic) | 10, 10 |
//! | `problem.grad_noise` | float ≥ 0 (landscapes) | 0 |
//! | `problem.init` | float array (landscapes) | problem default |
//! | `problem.steps_per_epoch` | int (landscapes) | 10 |
//! | `problem.n` `noise_sd` | int, float (two_moons) | 1000, 0.2 |
//! | `problem.path` `label_column` `test_fraction` | csv source | –, label, 0.2 |
//! | `problem.data_seed` | int (dataset generation and split) | 0 |
//! | `problem.model` | mlp, logistic | mlp |
//! | `problem.hidden` | int array | [16] |
//! | `problem.l2` | float ≥ 0 (logistic) | 0 |
//! | `schedule.kind` | constant, step_decay, inverse_time | constant |
//! | `schedule.decay_factor` `decay_at_fraction` | float | 10, 0.75 |
//! | `run.epochs` `batch_size` `seed` | int | 200, 32, 0 |
//! | `run.name` | string | optimizer name |
//! | `run.output` | path | none |
//! | `run.wall_clock` | bool | false (wall_secs column written as 0) |
//! | `grid.center` `points` `ratio` `max_extensions` | float, int, float, int | optimizer.eta, 5, 10, 4 |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use toml::Value;

use crate::error::{Error, Result};
use crate::math::{GaussianStream, Vector};
use crate::optim::{HyperParams, Method};
use crate::problems::{
    load_csv_dataset, logistic_problem, mlp_problem, quadratic_problem, rosenbrock_problem,
    saddle_problem, stochastic_wrapper, two_moons, Dataset, Problem,
};

use super::grid::GridSpec;
use super::schedule::{Schedule, ScheduleKind};

pub const KNOWN_KEYS: &[&str] = &[
    "optimizer.name",
    "optimizer.eta",
    "optimizer.rho",
    "optimizer.psi",
    "optimizer.epsilon_noise",
    "optimizer.beta1",
    "optimizer.beta2",
    "optimizer.stab",
    "optimizer.zero_mean_noise",
    "problem.kind",
    "problem.dim",
    "problem.condition",
    "problem.grad_noise",
    "problem.init",
    "problem.steps_per_epoch",
    "problem.n",
    "problem.noise_sd",
    "problem.path",
    "problem.label_column",
    "problem.test_fraction",
    "problem.data_seed",
    "problem.model",
    "problem.hidden",
    "problem.l2",
    "schedule.kind",
    "schedule.decay_factor",
    "schedule.decay_at_fraction",
    "run.epochs",
    "run.batch_size",
    "run.seed",
    "run.name",
    "run.output",
    "run.wall_clock",
    "grid.center",
    "grid.points",
    "grid.ratio",
    "grid.max_extensions",
];

pub fn is_known_key(key: &str) -> bool {
    KNOWN_KEYS.contains(&key)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Logistic { l2: f64 },
    Mlp { hidden: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Quadratic { dim: usize, condition: f64 },
    Rosenbrock,
    Saddle,
    TwoMoons { n: usize, noise_sd: f64, model: ModelSpec },
    Csv { path: PathBuf, label_column: String, test_fraction: f64, model: ModelSpec },
}

impl ProblemSpec {
    pub fn is_dataset(&self) -> bool {
        matches!(self, ProblemSpec::TwoMoons { .. } | ProblemSpec::Csv { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub spec: ProblemSpec,
    /// Standard deviation of additive gradient noise (landscapes only).
    pub grad_noise: f64,
    pub init: Option<Vec<f64>>,
    /// Steps that make up one epoch on a landscape.
    pub steps_per_epoch: usize,
    pub data_seed: u64,
}

impl ProblemConfig {
    pub fn landscape(spec: ProblemSpec) -> Self {
        Self {
            spec,
            grad_noise: 0.0,
            init: None,
            steps_per_epoch: 10,
            data_seed: 0,
        }
    }

    /// Builds the oracle. `noise_seed` keys the gradient-noise wrapper.
    pub fn build(&self, noise_seed: u64) -> Result<Box<dyn Problem<f64>>> {
        let landscape: Box<dyn Problem<f64>> = match &self.spec {
            ProblemSpec::Quadratic { dim, condition } => Box::new(quadratic_problem(*dim, *condition)?),
            ProblemSpec::Rosenbrock => Box::new(rosenbrock_problem()),
            ProblemSpec::Saddle => Box::new(saddle_problem()),
            ProblemSpec::TwoMoons { n, noise_sd, model } => {
                let data = two_moons(*n, *noise_sd, self.data_seed)?;
                return self.reject_noise().and_then(|_| build_model(data, model));
            }
            ProblemSpec::Csv { path, label_column, test_fraction, model } => {
                let data = load_csv_dataset(path, label_column)?.split(1.0 - test_fraction, self.data_seed)?;
                return self.reject_noise().and_then(|_| build_model(data, model));
            }
        };
        if self.grad_noise > 0.0 {
            Ok(Box::new(stochastic_wrapper(landscape, self.grad_noise, GaussianStream::new(noise_seed))?))
        } else {
            Ok(landscape)
        }
    }

    fn reject_noise(&self) -> Result<()> {
        if self.grad_noise > 0.0 {
            return Err(Error::Config(
                "problem.grad_noise applies to analytic landscapes; dataset problems sample minibatches".into(),
            ));
        }
        Ok(())
    }

    pub fn initial_point(&self, problem: &dyn Problem<f64>, seed: u64) -> Result<Vector<f64>> {
        match &self.init {
            Some(init) => {
                let v = Vector::from_f64(init)?;
                if v.dim() != problem.dim() {
                    return Err(Error::Config(format!(
                        "problem.init has {} entries, problem dimension is {}",
                        v.dim(),
                        problem.dim()
                    )));
                }
                Ok(v)
            }
            None => Ok(problem.initial_point(seed)),
        }
    }
}

fn build_model(data: Dataset<f64>, model: &ModelSpec) -> Result<Box<dyn Problem<f64>>> {
    let data = Arc::new(data);
    Ok(match model {
        ModelSpec::Logistic { l2 } => Box::new(logistic_problem(data, *l2)?),
        ModelSpec::Mlp { hidden } => Box::new(mlp_problem(data, hidden)?),
    })
}

/// Everything needed to replay one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: Option<String>,
    pub method: Method,
    /// Step size inside is ignored; the schedule supplies it every epoch.
    pub hp: HyperParams<f64>,
    pub problem: ProblemConfig,
    pub schedule: Schedule,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub wall_clock: bool,
}

impl ExperimentConfig {
    pub fn new(method: Method, hp: HyperParams<f64>, problem: ProblemConfig, schedule: Schedule) -> Self {
        Self {
            name: None,
            method,
            hp,
            problem,
            schedule,
            epochs: 200,
            batch_size: 32,
            seed: 0,
            output: None,
            wall_clock: false,
        }
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.method.name().to_string())
    }

    pub fn with_eta(&self, eta: f64) -> Self {
        Self {
            schedule: self.schedule.with_base(eta),
            ..self.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// Dotted-key text that parses back to this config.
    pub fn to_config_text(&self, grid: Option<&GridSpec>) -> String {
        let mut s = String::new();
        let hp = &self.hp;
        let f = |x: f64| Value::Float(x).to_string();
        let _ = writeln!(s, "optimizer.name = \"{}\"", self.method);
        let _ = writeln!(s, "optimizer.eta = {}", f(self.schedule.base_eta));
        let _ = writeln!(s, "optimizer.rho = {}", f(hp.rho()));
        let _ = writeln!(s, "optimizer.psi = {}", f(hp.psi()));
        let _ = writeln!(s, "optimizer.epsilon_noise = {}", f(hp.epsilon_noise()));
        let _ = writeln!(s, "optimizer.beta1 = {}", f(hp.beta1()));
        let _ = writeln!(s, "optimizer.beta2 = {}", f(hp.beta2()));
        let _ = writeln!(s, "optimizer.stab = {}", f(hp.stab()));
        let _ = writeln!(s, "optimizer.zero_mean_noise = {}", hp.zero_mean_noise());
        let p = &self.problem;
        let write_model = |s: &mut String, model: &ModelSpec| match model {
            ModelSpec::Logistic { l2 } => {
                let _ = writeln!(s, "problem.model = \"logistic\"\nproblem.l2 = {}", f(*l2));
            }
            ModelSpec::Mlp { hidden } => {
                let h: Vec<String> = hidden.iter().map(|w| w.to_string()).collect();
                let _ = writeln!(s, "problem.model = \"mlp\"\nproblem.hidden = [{}]", h.join(", "));
            }
        };
        match &p.spec {
            ProblemSpec::Quadratic { dim, condition } => {
                let _ = writeln!(s, "problem.kind = \"quadratic\"\nproblem.dim = {dim}\nproblem.condition = {}", f(*condition));
            }
            ProblemSpec::Rosenbrock => s.push_str("problem.kind = \"rosenbrock\"\n"),
            ProblemSpec::Saddle => s.push_str("problem.kind = \"saddle\"\n"),
            ProblemSpec::TwoMoons { n, noise_sd, model } => {
                let _ = writeln!(s, "problem.kind = \"two_moons\"\nproblem.n = {n}\nproblem.noise_sd = {}", f(*noise_sd));
                write_model(&mut s, model);
            }
            ProblemSpec::Csv { path, label_column, test_fraction, model } => {
                let _ = writeln!(
                    s,
                    "problem.kind = \"csv\"\nproblem.path = {}\nproblem.label_column = {}\nproblem.test_fraction = {}",
                    Value::String(path.display().to_string()),
                    Value::String(label_column.clone()),
                    f(*test_fraction)
                );
                write_model(&mut s, model);
            }
        }
        let _ = writeln!(s, "problem.grad_noise = {}", f(p.grad_noise));
        if let Some(init) = &p.init {
            let vals: Vec<String> = init.iter().map(|&x| f(x)).collect();
            let _ = writeln!(s, "problem.init = [{}]", vals.join(", "));
        }
        let _ = writeln!(s, "problem.steps_per_epoch = {}", p.steps_per_epoch);
        let _ = writeln!(s, "problem.data_seed = {}", p.data_seed);
        let _ = writeln!(s, "schedule.kind = \"{}\"", self.schedule.kind);
        let _ = writeln!(s, "schedule.decay_factor = {}", f(self.schedule.decay_factor));
        let _ = writeln!(s, "schedule.decay_at_fraction = {}", f(self.schedule.decay_at_fraction));
        let _ = writeln!(s, "run.epochs = {}", self.epochs);
        let _ = writeln!(s, "run.batch_size = {}", self.batch_size);
        let _ = writeln!(s, "run.seed = {}", self.seed);
        if let Some(name) = &self.name {
            let _ = writeln!(s, "run.name = {}", Value::String(name.clone()));
        }
        if let Some(out) = &self.output {
            let _ = writeln!(s, "run.output = {}", Value::String(out.display().to_string()));
        }
        let _ = writeln!(s, "run.wall_clock = {}", self.wall_clock);
        if let Some(g) = grid {
            let _ = writeln!(s, "grid.center = {}", f(g.center));
            let _ = writeln!(s, "grid.points = {}", g.points);
            let _ = writeln!(s, "grid.ratio = {}", f(g.ratio));
            let _ = writeln!(s, "grid.max_extensions = {}", g.max_extensions);
        }
        s
    }
}

/// A parsed config file: the experiment plus its grid settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSetup {
    pub experiment: ExperimentConfig,
    pub grid: GridSpec,
}

/// One `key=value` override. The value is read as a TOML literal and falls
/// back to a bare string (`optimizer.name=adam`).
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub key: String,
    pub value: Value,
}

impl FromStr for Override {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (key, raw) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("malformed override `{s}`: expected key=value")))?;
        let key = key.trim();
        let raw = raw.trim();
        if key.is_empty() || raw.is_empty() {
            return Err(Error::Config(format!("malformed override `{s}`: expected key=value")));
        }
        if !is_known_key(key) {
            return Err(Error::UnknownKey(key.to_string()));
        }
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        Ok(Override {
            key: key.to_string(),
            value,
        })
    }
}

fn flatten(prefix: &str, table: toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            v => {
                out.insert(key, v);
            }
        }
    }
}

/// Reads a config file and applies overrides.
pub fn load_config(path: impl AsRef<Path>, overrides: &[Override]) -> Result<ExperimentSetup> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    parse_config(&std::fs::read_to_string(path)?, overrides)
}

pub fn parse_config(text: &str, overrides: &[Override]) -> Result<ExperimentSetup> {
    let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let mut map = BTreeMap::new();
    flatten("", table, &mut map);
    for o in overrides {
        if !is_known_key(&o.key) {
            return Err(Error::UnknownKey(o.key.clone()));
        }
        map.insert(o.key.clone(), o.value.clone());
    }
    if let Some(k) = map.keys().find(|k| !is_known_key(k)) {
        return Err(Error::UnknownKey(k.clone()));
    }
    Keys(map).build()
}

struct Keys(BTreeMap<String, Value>);

impl Keys {
    fn get(&self, key: &str) -> Option<&Value> {
        self.0.get(key)
    }

    fn type_err(key: &str, want: &str, got: &Value) -> Error {
        Error::Config(format!("`{key}` must be {want}, got `{got}`"))
    }

    fn float(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Float(x)) => Ok(*x),
            Some(Value::Integer(i)) => Ok(*i as f64),
            Some(v) => Err(Self::type_err(key, "a number", v)),
        }
    }

    fn uint(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Integer(i)) if *i >= 0 => Ok(*i as u64),
            Some(v) => Err(Self::type_err(key, "a non-negative integer", v)),
        }
    }

    fn usize(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.uint(key, default as u64)? as usize)
    }

    fn boolean(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(v) => Err(Self::type_err(key, "true or false", v)),
        }
    }

    fn string(&self, key: &str) -> Result<Option<String>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(Self::type_err(key, "a string", v)),
        }
    }

    fn floats(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::Float(x) => Ok(*x),
                    Value::Integer(i) => Ok(*i as f64),
                    v => Err(Self::type_err(key, "an array of numbers", v)),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(v) => Err(Self::type_err(key, "an array of numbers", v)),
        }
    }

    fn uints(&self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::Integer(i) if *i >= 0 => Ok(*i as usize),
                    v => Err(Self::type_err(key, "an array of non-negative integers", v)),
                })
                .collect(),
            Some(Value::Integer(i)) if *i >= 0 => Ok(vec![*i as usize]),
            Some(v) => Err(Self::type_err(key, "an array of non-negative integers", v)),
        }
    }

    fn model(&self) -> Result<ModelSpec> {
        match self.string("problem.model")?.as_deref().unwrap_or("mlp") {
            "mlp" => Ok(ModelSpec::Mlp {
                hidden: self.uints("problem.hidden", &[16])?,
            }),
            "logistic" => Ok(ModelSpec::Logistic {
                l2: self.float("problem.l2", 0.0)?,
            }),
            other => Err(Error::Config(format!("unknown model `{other}`"))),
        }
    }

    fn build(self) -> Result<ExperimentSetup> {
        let method: Method = self
            .string("optimizer.name")?
            .as_deref()
            .unwrap_or("sgd")
            .parse()
            .map_err(|e: Error| Error::Config(e.to_string()))?;
        let eta = self.float("optimizer.eta", 0.01)?;
        let d = HyperParams::<f64>::builder(1.0).build().expect("default hyperparameters are valid");
        let hp = HyperParams::builder(eta)
            .rho(self.float("optimizer.rho", d.rho())?)
            .psi(self.float("optimizer.psi", d.psi())?)
            .epsilon_noise(self.float("optimizer.epsilon_noise", d.epsilon_noise())?)
            .beta1(self.float("optimizer.beta1", d.beta1())?)
            .beta2(self.float("optimizer.beta2", d.beta2())?)
            .stab(self.float("optimizer.stab", d.stab())?)
            .zero_mean_noise(self.boolean("optimizer.zero_mean_noise", false)?)
            .build()?;

        let spec = match self.string("problem.kind")?.as_deref().unwrap_or("quadratic") {
            "quadratic" => ProblemSpec::Quadratic {
                dim: self.usize("problem.dim", 10)?,
                condition: self.float("problem.condition", 10.0)?,
            },
            "rosenbrock" => ProblemSpec::Rosenbrock,
            "saddle" => ProblemSpec::Saddle,
            "two_moons" => ProblemSpec::TwoMoons {
                n: self.usize("problem.n", 1000)?,
                noise_sd: self.float("problem.noise_sd", 0.2)?,
                model: self.model()?,
            },
            "csv" => ProblemSpec::Csv {
                path: self
                    .string("problem.path")?
                    .map(PathBuf::from)
                    .ok_or_else(|| Error::Config("problem.kind = \"csv\" needs problem.path".into()))?,
                label_column: self.string("problem.label_column")?.unwrap_or_else(|| "label".into()),
                test_fraction: self.float("problem.test_fraction", 0.2)?,
                model: self.model()?,
            },
            other => return Err(Error::Config(format!("unknown problem kind `{other}`"))),
        };
        if let ProblemSpec::Csv { test_fraction, .. } = &spec {
            if !(0.0..1.0).contains(test_fraction) {
                return Err(Error::Config(format!("problem.test_fraction must lie in [0, 1), got {test_fraction}")));
            }
        }
        let grad_noise = self.float("problem.grad_noise", 0.0)?;
        if !(grad_noise >= 0.0 && grad_noise.is_finite()) {
            return Err(Error::Config(format!("problem.grad_noise must be >= 0, got {grad_noise}")));
        }
        let problem = ProblemConfig {
            spec,
            grad_noise,
            init: self.floats("problem.init")?,
            steps_per_epoch: self.usize("problem.steps_per_epoch", 10)?,
            data_seed: self.uint("problem.data_seed", 0)?,
        };
        if problem.steps_per_epoch == 0 {
            return Err(Error::Config("problem.steps_per_epoch must be >= 1".into()));
        }

        let schedule = Schedule {
            kind: self
                .string("schedule.kind")?
                .as_deref()
                .unwrap_or("constant")
                .parse::<ScheduleKind>()?,
            base_eta: eta,
            decay_factor: self.float("schedule.decay_factor", 10.0)?,
            decay_at_fraction: self.float("schedule.decay_at_fraction", 0.75)?,
        };
        schedule.validate()?;

        let batch_size = self.usize("run.batch_size", 32)?;
        if batch_size == 0 {
            return Err(Error::Config("run.batch_size must be >= 1".into()));
        }
        let experiment = ExperimentConfig {
            name: self.string("run.name")?,
            method,
            hp,
            problem,
            schedule,
            epochs: self.usize("run.epochs", 200)?,
            batch_size,
            seed: self.uint("run.seed", 0)?,
            output: self.string("run.output")?.map(PathBuf::from),
            wall_clock: self.boolean("run.wall_clock", false)?,
        };
        let grid = GridSpec {
            center: self.float("grid.center", eta)?,
            points: self.usize("grid.points", 5)?,
            ratio: self.float("grid.ratio", 10.0)?,
            max_extensions: self.usize("grid.max_extensions", 4)?,
        };
        grid.validate()?;
        Ok(ExperimentSetup { experiment, grid })
    }
}
