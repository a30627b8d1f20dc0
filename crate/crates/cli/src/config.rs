//! JSON run configuration.

use std::fmt;
use std::path::PathBuf;

use reggraph::bilevel::{PenaltyH2, Search};
use reggraph::inverse::ForwardSpec;
use reggraph::{GraphSpec, RegGraph, SolverConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::graph_io::{build_explicit, ExplicitGraph};

#[derive(Debug)]
pub struct ConfigError {
    /// Dotted key path, empty for syntax errors.
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "{}", self.message)
        } else {
            write!(f, "at `{}`: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
        ConfigError {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Eval,
    Solve,
    VanishingNoise,
    Bilevel,
    Verify,
    GraphInfo,
}

/// Deterministic test signals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Synthetic {
    /// `low` before index `at` (default `n / 2`), `high` from there on.
    Step {
        n: usize,
        #[serde(default)]
        at: Option<usize>,
        #[serde(default)]
        low: f64,
        #[serde(default = "one")]
        high: f64,
    },
    /// `values[j]` on the `j`-th segment cut at `breaks`.
    PiecewiseConstant {
        n: usize,
        breaks: Vec<usize>,
        values: Vec<f64>,
    },
    /// Segment `j` runs linearly from `segments[j][0]` to `segments[j][1]`.
    PiecewiseAffine {
        n: usize,
        breaks: Vec<usize>,
        segments: Vec<[f64; 2]>,
    },
    /// Centered square of value `high` covering half of each axis.
    Square {
        shape: [usize; 2],
        #[serde(default)]
        low: f64,
        #[serde(default = "one")]
        high: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub sigma: f64,
    /// Defaults to the run seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    #[serde(default = "identity_forward")]
    pub forward: ForwardSpec,
    #[serde(default)]
    pub noise: Option<NoiseSection>,
    #[serde(default)]
    pub beta: Option<f64>,
    /// Measured data file; replaces the synthetic measurement.
    #[serde(default)]
    pub data: Option<PathBuf>,
}

fn identity_forward() -> ForwardSpec {
    ForwardSpec::Identity {}
}

impl Default for ProblemSection {
    fn default() -> Self {
        ProblemSection {
            forward: identity_forward(),
            noise: None,
            beta: None,
            data: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub max_iters: usize,
    pub gap_tol: f64,
    pub residual_tol: f64,
    pub check_every: usize,
    pub seed: Option<u64>,
    pub log_stride: usize,
    pub norm_iters: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        SolverSection {
            max_iters: d.max_iters,
            gap_tol: d.gap_tol,
            residual_tol: d.residual_tol,
            check_every: d.check_every,
            seed: d.seed,
            log_stride: d.log_stride,
            norm_iters: d.norm_iters,
        }
    }
}

impl SolverSection {
    pub fn to_config(&self) -> SolverConfig {
        SolverConfig {
            max_iters: self.max_iters,
            gap_tol: self.gap_tol,
            residual_tol: self.residual_tol,
            check_every: self.check_every,
            seed: self.seed,
            log_stride: self.log_stride,
            norm_iters: self.norm_iters,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub sigmas: Vec<f64>,
    #[serde(default)]
    pub betas: Option<Vec<f64>>,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default)]
    pub alphas: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_c() -> f64 {
    1.0
}

fn default_r() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BilevelSection {
    pub search: Search,
    pub beta_range: [f64; 2],
    /// Box bound on the learnable weights.
    pub c: f64,
    pub l1: f64,
    pub h2: PenaltyH2,
    pub parallel: bool,
    pub cache: bool,
}

impl Default for BilevelSection {
    fn default() -> Self {
        BilevelSection {
            search: Search::Grid {
                alpha_points: 5,
                beta_points: 5,
            },
            beta_range: [0.01, 1.0],
            c: 1.0,
            l1: 0.0,
            h2: PenaltyH2::None,
            parallel: true,
            cache: true,
        }
    }
}

pub const SUITES: [&str; 5] = ["linalg", "functionals", "graph", "solver", "oracle"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub suites: Vec<String>,
    pub seed: u64,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            suites: SUITES.iter().map(|s| s.to_string()).collect(),
            seed: 1,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    command: Command,
    #[serde(default)]
    graph: Option<Value>,
    #[serde(default)]
    input: Option<PathBuf>,
    #[serde(default)]
    synthetic: Option<Synthetic>,
    #[serde(default)]
    problem: ProblemSection,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default)]
    schedule: Option<ScheduleSection>,
    #[serde(default)]
    bilevel: Option<BilevelSection>,
    #[serde(default)]
    verify: VerifySection,
    #[serde(default = "default_output")]
    output: PathBuf,
    #[serde(default)]
    seed: u64,
}

fn default_output() -> PathBuf {
    PathBuf::from(".")
}

/// Where the signal (or ground truth) comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    File(PathBuf),
    Synthetic(Synthetic),
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub command: Command,
    pub graph: Option<RegGraph>,
    pub source: Option<Source>,
    pub problem: ProblemSection,
    pub solver: SolverSection,
    pub schedule: Option<ScheduleSection>,
    pub bilevel: BilevelSection,
    pub verify: VerifySection,
    pub output: PathBuf,
    pub seed: u64,
}

/// Deserializes `value`, reporting the failing key under `prefix`.
pub fn from_value<T: DeserializeOwned>(value: &Value, prefix: &str) -> Result<T, ConfigError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = match (prefix.is_empty(), inner.as_str()) {
            (true, _) => inner,
            (false, ".") => prefix.to_string(),
            (false, p) => format!("{prefix}.{p}"),
        };
        ConfigError::new(path, e.into_inner().to_string())
    })
}

/// Library spec (`{"name": ...}`) or explicit listing (`{"nodes": ...}`).
pub fn parse_graph(value: &Value, prefix: &str) -> Result<RegGraph, ConfigError> {
    if value.get("nodes").is_some() {
        let listing: ExplicitGraph = from_value(value, prefix)?;
        build_explicit(&listing, prefix)
    } else {
        let spec: GraphSpec = from_value(value, prefix)?;
        reggraph::make_graph(&spec)
            .map(|(g, _)| g)
            .map_err(|e| ConfigError::new(prefix, e.to_string()))
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = Value::deserialize(&mut de).map_err(|e| ConfigError::new("", format!("invalid JSON: {e}")))?;
    de.end().map_err(|e| ConfigError::new("", format!("invalid JSON: {e}")))?;
    let raw: RawConfig = from_value(&value, "")?;
    let graph = match &raw.graph {
        Some(v) => Some(parse_graph(v, "graph")?),
        None => None,
    };
    let source = match (raw.input, raw.synthetic) {
        (Some(_), Some(_)) => {
            return Err(ConfigError::new("input", "give either `input` or `synthetic`, not both"));
        }
        (Some(p), None) => Some(Source::File(p)),
        (None, Some(s)) => Some(Source::Synthetic(s)),
        (None, None) => None,
    };
    let cfg = RunConfig {
        command: raw.command,
        graph,
        source,
        problem: raw.problem,
        solver: raw.solver,
        schedule: raw.schedule,
        bilevel: raw.bilevel.unwrap_or_default(),
        verify: raw.verify,
        output: raw.output,
        seed: raw.seed,
    };
    check_semantics(&cfg)?;
    Ok(cfg)
}

fn check_semantics(cfg: &RunConfig) -> Result<(), ConfigError> {
    let needs_graph = !matches!(cfg.command, Command::Verify);
    if needs_graph && cfg.graph.is_none() {
        return Err(ConfigError::new("graph", "this command needs a graph"));
    }
    let needs_source = match cfg.command {
        Command::Eval | Command::VanishingNoise | Command::Bilevel => true,
        Command::Solve => cfg.problem.data.is_none(),
        Command::Verify | Command::GraphInfo => false,
    };
    if needs_source && cfg.source.is_none() {
        return Err(ConfigError::new("input", "this command needs `input` or `synthetic`"));
    }
    if cfg.command == Command::Solve {
        match cfg.problem.beta {
            Some(b) if b.is_finite() && b > 0.0 => {}
            Some(b) => return Err(ConfigError::new("problem.beta", format!("must be positive, got {b}"))),
            None => return Err(ConfigError::new("problem.beta", "solve needs a regularization parameter")),
        }
    }
    if cfg.command == Command::VanishingNoise && cfg.schedule.is_none() {
        return Err(ConfigError::new("schedule", "vanishing-noise needs a schedule"));
    }
    if let Some(n) = &cfg.problem.noise {
        if !(n.sigma.is_finite() && n.sigma >= 0.0) {
            return Err(ConfigError::new("problem.noise.sigma", format!("must be >= 0, got {}", n.sigma)));
        }
    }
    cfg.solver
        .to_config()
        .validate()
        .map_err(|e| ConfigError::new("solver", e.to_string()))?;
    for (i, s) in cfg.verify.suites.iter().enumerate() {
        if !SUITES.contains(&s.as_str()) {
            return Err(ConfigError::new(
                format!("verify.suites[{i}]"),
                format!("unknown suite `{s}`, expected one of {}", SUITES.join(", ")),
            ));
        }
    }
    Ok(())
}
