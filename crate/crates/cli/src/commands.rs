//! Command execution and output files.

use std::fmt;
use std::fs;
use std::path::Path;

use reggraph::bilevel::{learn, BilevelConfig, PenaltyH1, TrainingPair};
use reggraph::inverse::{corrupt, make_forward, run_vanishing_noise, NoiseModel, Schedule};
use reggraph::linalg::vec_ops::{norm, sub};
use reggraph::{evaluate_r, solve_tikhonov, Error, LinOp, RegGraph};

use crate::config::{Command, RunConfig, Source, Synthetic};
use crate::graph_io::to_explicit;
use crate::io::{read_signal, write_signal, write_text, Signal};
use crate::verify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug)]
pub enum RunError {
    /// Bad configuration, input or problem setup.
    Config(String),
    /// The search found no admissible candidate.
    Infeasible(String),
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Infeasible(_) => EXIT_NOT_CONVERGED,
            RunError::Io(_) => EXIT_FAILURE,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "configuration error: {m}"),
            RunError::Infeasible(m) => write!(f, "no result: {m}"),
            RunError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::NoFeasibleCandidate => RunError::Infeasible(e.to_string()),
            Error::Io(io) => RunError::Io(io.to_string()),
            other => RunError::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

/// What a finished command reports: exit status and a short summary.
#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub message: String,
}

impl Outcome {
    fn ok(message: String) -> Outcome {
        Outcome { code: EXIT_OK, message }
    }

    fn flagged(ok: bool, message: String) -> Outcome {
        Outcome {
            code: if ok { EXIT_OK } else { EXIT_NOT_CONVERGED },
            message,
        }
    }
}

pub fn synthesize(s: &Synthetic) -> Result<Signal, RunError> {
    let bad = |m: String| RunError::Config(format!("synthetic: {m}"));
    let check_breaks = |n: usize, breaks: &[usize], pieces: usize| -> Result<Vec<usize>, RunError> {
        if pieces != breaks.len() + 1 {
            return Err(bad(format!("{} breaks need {} pieces, got {pieces}", breaks.len(), breaks.len() + 1)));
        }
        let mut cuts = vec![0];
        cuts.extend_from_slice(breaks);
        cuts.push(n);
        if cuts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(bad(format!("breaks {breaks:?} must increase strictly inside (0, {n})")));
        }
        Ok(cuts)
    };
    match s {
        Synthetic::Step { n, at, low, high } => {
            let at = at.unwrap_or(n / 2);
            if *n < 2 || at > *n {
                return Err(bad(format!("step at {at} with n = {n}")));
            }
            Ok(Signal::one_d((0..*n).map(|i| if i < at { *low } else { *high }).collect()))
        }
        Synthetic::PiecewiseConstant { n, breaks, values } => {
            let cuts = check_breaks(*n, breaks, values.len())?;
            let mut out = Vec::with_capacity(*n);
            for (j, w) in cuts.windows(2).enumerate() {
                out.extend(std::iter::repeat(values[j]).take(w[1] - w[0]));
            }
            Ok(Signal::one_d(out))
        }
        Synthetic::PiecewiseAffine { n, breaks, segments } => {
            let cuts = check_breaks(*n, breaks, segments.len())?;
            let mut out = Vec::with_capacity(*n);
            for (j, w) in cuts.windows(2).enumerate() {
                let [a, b] = segments[j];
                let len = w[1] - w[0];
                let span = (len.max(2) - 1) as f64;
                out.extend((0..len).map(|i| a + (b - a) * i as f64 / span));
            }
            Ok(Signal::one_d(out))
        }
        Synthetic::Square { shape, low, high } => {
            let [h, w] = *shape;
            if h < 2 || w < 2 {
                return Err(bad(format!("square needs at least 2x2 pixels, got {h}x{w}")));
            }
            let inside = |i: usize, m: usize| i >= m / 4 && i < m / 4 + m / 2;
            let values = (0..h * w)
                .map(|p| if inside(p / w, h) && inside(p % w, w) { *high } else { *low })
                .collect();
            Ok(Signal {
                shape: vec![h, w],
                values,
            })
        }
    }
}

fn load_source(cfg: &RunConfig) -> Result<Signal, RunError> {
    match &cfg.source {
        Some(Source::File(p)) => read_signal(p).map_err(RunError::Config),
        Some(Source::Synthetic(s)) => synthesize(s),
        None => Err(RunError::Config("no input signal".into())),
    }
}

fn graph(cfg: &RunConfig) -> Result<&RegGraph, RunError> {
    cfg.graph
        .as_ref()
        .ok_or_else(|| RunError::Config("no graph".into()))
}

/// Checks that the signal lives on the root space of `g`.
fn check_shape(g: &RegGraph, sig: &Signal) -> Result<(), RunError> {
    let root = g.root_space();
    let fits = match root.shape() {
        Some(shape) => shape == sig.shape.as_slice(),
        None => root.dim() == sig.values.len(),
    };
    if !fits {
        return Err(RunError::Config(format!(
            "signal of shape {:?} does not match the graph root space {}",
            sig.shape, root
        )));
    }
    Ok(())
}

fn forward(cfg: &RunConfig, shape: &[usize]) -> Result<LinOp, RunError> {
    make_forward(&cfg.problem.forward, shape).map_err(|e| RunError::Config(format!("problem.forward: {e}")))
}

fn noise(cfg: &RunConfig) -> NoiseModel {
    match &cfg.problem.noise {
        Some(n) => NoiseModel {
            sigma: n.sigma,
            seed: n.seed.unwrap_or(cfg.seed),
        },
        None => NoiseModel {
            sigma: 0.0,
            seed: cfg.seed,
        },
    }
}

/// Writes `data = K u` as an image when it still has the image layout.
fn write_data(dir: &Path, shape: &[usize], k: &LinOp, data: &[f64]) -> std::io::Result<String> {
    if shape.len() == 2 && k.codomain().dim() == shape.iter().product::<usize>() {
        write_signal(dir, "data", shape, data)
    } else {
        write_signal(dir, "data", &[data.len()], data)
    }
}

fn csv_line(fields: &[String]) -> String {
    fields.join(",")
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, RunError> {
    fs::create_dir_all(&cfg.output).map_err(|e| RunError::Io(format!("{}: {e}", cfg.output.display())))?;
    match cfg.command {
        Command::Eval => eval(cfg),
        Command::Solve => solve(cfg),
        Command::VanishingNoise => vanishing_noise(cfg),
        Command::Bilevel => bilevel(cfg),
        Command::Verify => run_verify(cfg),
        Command::GraphInfo => graph_info(cfg),
    }
}

fn eval(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let g = graph(cfg)?;
    let u = load_source(cfg)?;
    check_shape(g, &u)?;
    let r = evaluate_r(g, &g.weights(), &u.values, &cfg.solver.to_config())?;
    let dir = &cfg.output;
    let header = "value,gap,gap_reliable,iterations,converged";
    let row = csv_line(&[
        r.value.to_string(),
        r.gap.to_string(),
        r.gap_reliable.to_string(),
        r.iterations.to_string(),
        r.converged.to_string(),
    ]);
    write_text(&dir.join("eval.csv"), &format!("{header}\n{row}"))?;
    write_text(&dir.join("trace.csv"), &r.trace_csv())?;
    let mut msg = format!("R(u) = {:.10} (gap {:.3e}, {} iterations)", r.value, r.gap, r.iterations);
    if !r.converged {
        msg.push_str("; not converged");
    }
    Ok(Outcome::flagged(r.converged, msg))
}

fn solve(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let g = graph(cfg)?;
    let shape = match g.root_space().shape() {
        Some(s) => s.to_vec(),
        None => vec![g.root_space().dim()],
    };
    let k = forward(cfg, &shape)?;
    let truth = match &cfg.source {
        Some(_) => {
            let t = load_source(cfg)?;
            check_shape(g, &t)?;
            Some(t.values)
        }
        None => None,
    };
    let data = match (&cfg.problem.data, &truth) {
        (Some(p), _) => read_signal(p).map_err(RunError::Config)?.values,
        (None, Some(t)) => corrupt(&k, t, &noise(cfg))?,
        (None, None) => return Err(RunError::Config("no data and no ground truth".into())),
    };
    if data.len() != k.codomain().dim() {
        return Err(RunError::Config(format!(
            "data has {} values, the forward operator produces {}",
            data.len(),
            k.codomain().dim()
        )));
    }
    let beta = cfg.problem.beta.ok_or_else(|| RunError::Config("problem.beta is required".into()))?;
    let sol = solve_tikhonov(&k, &data, beta, g, &g.weights(), &cfg.solver.to_config())?;
    let dir = &cfg.output;
    let file = write_signal(dir, "solution", &shape, &sol.u)?;
    write_data(dir, &shape, &k, &data)?;
    write_text(&dir.join("trace.csv"), &sol.trace_csv())?;
    let err = truth.as_ref().map(|t| norm(&sub(&sol.u, t)));
    let header = "beta,value,gap,gap_reliable,iterations,converged,err_l2";
    let row = csv_line(&[
        beta.to_string(),
        sol.value.to_string(),
        sol.gap.to_string(),
        sol.gap_reliable.to_string(),
        sol.iterations.to_string(),
        sol.converged.to_string(),
        err.map_or(String::new(), |e| e.to_string()),
    ]);
    write_text(&dir.join("summary.csv"), &format!("{header}\n{row}"))?;
    let mut msg = format!("solution written to {file} (gap {:.3e}, {} iterations)", sol.gap, sol.iterations);
    if let Some(e) = err {
        msg.push_str(&format!(", |u - truth| = {e:.6}"));
    }
    if !sol.converged {
        msg.push_str("; not converged");
    }
    Ok(Outcome::flagged(sol.converged, msg))
}

fn vanishing_noise(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let g = graph(cfg)?;
    let truth = load_source(cfg)?;
    check_shape(g, &truth)?;
    let k = forward(cfg, &truth.shape)?;
    let s = cfg
        .schedule
        .as_ref()
        .ok_or_else(|| RunError::Config("schedule is required".into()))?;
    let schedule = Schedule {
        sigmas: s.sigmas.clone(),
        betas: s.betas.clone(),
        c: s.c,
        r: s.r,
        alphas: s.alphas.clone(),
        seed: s.seed.unwrap_or(cfg.seed),
    };
    let run = run_vanishing_noise(g, &g.weights(), &k, &truth.values, &schedule, &cfg.solver.to_config())?;
    let dir = &cfg.output;
    write_text(&dir.join("vanishing_noise.csv"), &run.to_csv())?;
    let header = "levels,r_hat_truth,shift_dim,partial";
    let row = csv_line(&[
        run.levels.len().to_string(),
        run.r_hat_truth.to_string(),
        run.shift_dim.to_string(),
        run.partial.to_string(),
    ]);
    write_text(&dir.join("summary.csv"), &format!("{header}\n{row}"))?;
    let last = run.levels.last().map_or(f64::NAN, |l| l.err_l2);
    let mut msg = format!("{} levels, final error {last:.6}", run.levels.len());
    if run.partial {
        msg.push_str("; some levels did not converge");
    }
    Ok(Outcome::flagged(!run.partial, msg))
}

fn bilevel(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let g = graph(cfg)?;
    let truth = load_source(cfg)?;
    check_shape(g, &truth)?;
    let k = forward(cfg, &truth.shape)?;
    let data = corrupt(&k, &truth.values, &noise(cfg))?;
    let b = &cfg.bilevel;
    let mut h1 = PenaltyH1::boxed(g, b.c)?;
    h1.l1 = b.l1;
    let bcfg = BilevelConfig {
        search: b.search.clone(),
        beta_range: (b.beta_range[0], b.beta_range[1]),
        solver: cfg.solver.to_config(),
        parallel: b.parallel,
        cache: b.cache,
    };
    let pairs = [TrainingPair {
        truth: truth.values.clone(),
        data,
    }];
    let res = learn(&pairs, &k, g, &h1, &b.h2, &bcfg)?;
    let dir = &cfg.output;
    write_text(&dir.join("bilevel_trace.csv"), &res.trace_csv())?;
    let alpha: Vec<String> = res.alpha.iter().map(|a| format!("{a:.6}")).collect();
    let mut report = format!(
        "{}\nalpha: [{}]\nbeta: {:.6}\nloss: {:.6}\ncandidates: {}",
        res.report,
        alpha.join(", "),
        res.beta,
        res.loss,
        res.trace.len()
    );
    if res.beta_at_boundary {
        report.push_str("\nwarning: beta lies on the boundary of the search range");
    }
    write_text(&dir.join("report.txt"), &report)?;
    if let Some(u) = res.u.first() {
        write_signal(dir, "reconstruction", &truth.shape, u)?;
    }
    Ok(Outcome::ok(report))
}

fn run_verify(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let checks = verify::run(&cfg.verify.suites, cfg.verify.seed);
    let mut w = csv::Writer::from_path(cfg.output.join("verify.csv")).map_err(|e| RunError::Io(e.to_string()))?;
    let io = |e: csv::Error| RunError::Io(e.to_string());
    w.write_record(["suite", "check", "status", "detail"]).map_err(io)?;
    for c in &checks {
        let status = if c.passed { "pass" } else { "fail" };
        w.write_record([c.suite, c.check.as_str(), status, c.detail.as_str()]).map_err(io)?;
    }
    w.flush()?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    let mut msg = format!("{} checks, {failed} failed", checks.len());
    for c in checks.iter().filter(|c| !c.passed) {
        msg.push_str(&format!("\n  {}/{}: {}", c.suite, c.check, c.detail));
    }
    Ok(Outcome {
        code: if failed == 0 { EXIT_OK } else { EXIT_FAILURE },
        message: msg,
    })
}

fn graph_info(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let g = graph(cfg)?;
    let listing = to_explicit(g);
    let text = serde_json::to_string_pretty(&listing).map_err(|e| RunError::Io(e.to_string()))?;
    write_text(&cfg.output.join("graph.json"), &text)?;
    Ok(Outcome::ok(text))
}
