//! Primal-dual hybrid gradient solver for flattened saddle problems with
//! duality-gap certificates.

mod certificate;

use std::fmt::Write as _;

use crate::assembly::{assemble, assemble_predual, flatten_saddle, DataFit, SaddleSpec};
use crate::error::{check_len, Error, Result};
use crate::graph::RegGraph;
use crate::linalg::vec_ops::norm;
use crate::linalg::{power_iteration, LinOp};
use crate::rng::SplitMix64;

use certificate::Certificate;

/// Primal-dual step sizes satisfying `tau * sigma * L^2 <= 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSizes {
    pub tau: f64,
    pub sigma: f64,
    pub lipschitz: f64,
}

impl StepSizes {
    /// `tau = sigma = 0.99 / L`.
    pub fn from_norm(lipschitz: f64) -> StepSizes {
        let l = if lipschitz > 0.0 { lipschitz } else { 1.0 };
        StepSizes {
            tau: 0.99 / l,
            sigma: 0.99 / l,
            lipschitz: l,
        }
    }

    pub fn new(tau: f64, sigma: f64, lipschitz: f64) -> Result<StepSizes> {
        if !(tau > 0.0 && sigma > 0.0) || tau * sigma * lipschitz * lipschitz > 1.0 {
            return Err(Error::InvalidParameter(format!(
                "step sizes tau={tau}, sigma={sigma} violate tau*sigma*L^2 <= 1 for L={lipschitz}"
            )));
        }
        Ok(StepSizes { tau, sigma, lipschitz })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Relative duality-gap threshold `gap <= gap_tol (1 + |value|)`.
    pub gap_tol: f64,
    pub residual_tol: f64,
    /// Iterations between certificate evaluations.
    pub check_every: usize,
    /// Gaussian initialization seed; `None` starts from zero.
    pub seed: Option<u64>,
    /// Keep every `log_stride`-th certificate row in the trace.
    pub log_stride: usize,
    /// Power iterations for the operator norm.
    pub norm_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 50_000,
            gap_tol: 1e-6,
            residual_tol: 1e-6,
            check_every: 50,
            seed: None,
            log_stride: 1,
            norm_iters: 500,
        }
    }
}

impl SolverConfig {
    pub fn with_max_iters(mut self, n: usize) -> Self {
        self.max_iters = n;
        self
    }

    pub fn with_gap_tol(mut self, tol: f64) -> Self {
        self.gap_tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.check_every == 0 || self.log_stride == 0 {
            return Err(Error::InvalidParameter("check_every and log_stride must be positive".into()));
        }
        if !(self.gap_tol > 0.0 && self.residual_tol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// One row of the residual trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut s = String::from("iteration,primal_residual,dual_residual,gap\n");
    for r in trace {
        let _ = writeln!(
            s,
            "{},{:e},{:e},{:e}",
            r.iteration, r.primal_residual, r.dual_residual, r.gap
        );
    }
    s
}

/// Raw output of [`run_saddle`].
#[derive(Clone, Debug)]
pub struct SaddleResult {
    /// Best certified primal objective.
    pub value: f64,
    pub dual_value: f64,
    /// Primal point achieving `value` (feasibility-restored).
    pub x: Vec<f64>,
    /// Dual point achieving `dual_value`.
    pub y: Vec<f64>,
    pub gap: f64,
    /// Both certificate halves finite and the dual projection converged.
    pub gap_reliable: bool,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
    pub steps: StepSizes,
}

/// Precomputed layout of a saddle specification.
pub(crate) struct Layout<'a> {
    pub spec: &'a SaddleSpec,
    pub seg_off: Vec<usize>,
    pub blk_off: Vec<usize>,
}

impl<'a> Layout<'a> {
    pub fn new(spec: &'a SaddleSpec) -> Result<Layout<'a>> {
        let mut seg_off = vec![0];
        for s in &spec.segments {
            seg_off.push(seg_off.last().unwrap() + s);
        }
        let mut blk_off = vec![0];
        for (j, b) in spec.blocks.iter().enumerate() {
            let d = b.functional.domain().dim();
            check_len(&format!("offset of block {}", b.label), d, b.offset.len())?;
            for t in &b.terms {
                if t.segment >= spec.segments.len() {
                    return Err(Error::InvalidParameter(format!("block {j} references missing segment")));
                }
                check_len(&format!("term domain in block {}", b.label), spec.segments[t.segment], t.op.domain().dim())?;
                check_len(&format!("term codomain in block {}", b.label), d, t.op.codomain().dim())?;
            }
            blk_off.push(blk_off.last().unwrap() + d);
        }
        Ok(Layout { spec, seg_off, blk_off })
    }

    pub fn nx(&self) -> usize {
        *self.seg_off.last().unwrap()
    }

    pub fn ny(&self) -> usize {
        *self.blk_off.last().unwrap()
    }

    pub fn block<'b>(&self, j: usize, y: &'b [f64]) -> &'b [f64] {
        &y[self.blk_off[j]..self.blk_off[j + 1]]
    }

    /// `out = A x` (without offsets), optionally restricted to `blocks`.
    pub fn apply(&self, x: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) {
        out.fill(0.0);
        for (j, b) in self.spec.blocks.iter().enumerate() {
            let yj = &mut out[self.blk_off[j]..self.blk_off[j + 1]];
            for t in &b.terms {
                let xs = &x[self.seg_off[t.segment]..self.seg_off[t.segment + 1]];
                t.op.apply_add(xs, t.coeff, yj, scratch);
            }
        }
    }

    /// `out = A^T y`.
    pub fn adjoint(&self, y: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) {
        out.fill(0.0);
        for (j, b) in self.spec.blocks.iter().enumerate() {
            let yj = &y[self.blk_off[j]..self.blk_off[j + 1]];
            for t in &b.terms {
                let xs = &mut out[self.seg_off[t.segment]..self.seg_off[t.segment + 1]];
                t.op.adjoint_add(yj, t.coeff, xs, scratch);
            }
        }
    }

    pub fn operator_norm(&self, iters: usize) -> f64 {
        let mut ax = vec![0.0; self.ny()];
        let mut scratch = Vec::new();
        let est = power_iteration(self.nx(), iters, 0x5eed, |x, z| {
            self.apply(x, &mut ax, &mut scratch);
            self.adjoint(&ax, z, &mut scratch);
        });
        est.value
    }

    /// `sum_j F_j(A_j x + c_j)`.
    pub fn primal_value(&self, x: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.ny()];
        let mut scratch = Vec::new();
        self.apply(x, &mut ax, &mut scratch);
        self.spec
            .blocks
            .iter()
            .enumerate()
            .map(|(j, b)| {
                let v: Vec<f64> = self.block(j, &ax).iter().zip(&b.offset).map(|(a, c)| a + c).collect();
                b.functional.eval_unchecked(&v)
            })
            .sum()
    }
}

/// Runs PDHG from the configured initialization until the relative gap (or,
/// without a finite certificate, the residual) falls below tolerance.
pub fn run_saddle(spec: &SaddleSpec, cfg: &SolverConfig) -> Result<SaddleResult> {
    cfg.validate()?;
    let lay = Layout::new(spec)?;
    let (nx, ny) = (lay.nx(), lay.ny());
    if nx == 0 {
        return Ok(trivial_result(&lay));
    }
    let l = lay.operator_norm(cfg.norm_iters) * 1.01;
    let steps = StepSizes::from_norm(l);
    let (tau, sigma) = (steps.tau, steps.sigma);

    let (mut x, mut y) = match cfg.seed {
        None => (vec![0.0; nx], vec![0.0; ny]),
        Some(s) => {
            let mut rng = SplitMix64::new(s);
            (rng.normal_vec(nx), rng.normal_vec(ny))
        }
    };
    let offsets: Vec<f64> = spec.blocks.iter().flat_map(|b| b.offset.iter().copied()).collect();
    let mut xbar = x.clone();
    let mut ax = vec![0.0; ny];
    let mut aty = vec![0.0; nx];
    let mut x_prev = vec![0.0; nx];
    let mut y_prev = vec![0.0; ny];
    let mut dx_a = vec![0.0; ny];
    let mut dy_at = vec![0.0; nx];
    let mut scratch = Vec::new();

    let mut cert = Certificate::new(&lay, l);
    let mut trace = Vec::new();
    let mut n_checks = 0usize;
    let mut converged = false;
    let mut it = 0;
    while it < cfg.max_iters {
        it += 1;
        x_prev.copy_from_slice(&x);
        y_prev.copy_from_slice(&y);
        lay.apply(&xbar, &mut ax, &mut scratch);
        for i in 0..ny {
            y[i] += sigma * (ax[i] + offsets[i]);
        }
        for (j, b) in spec.blocks.iter().enumerate() {
            b.functional
                .prox_conjugate_in_place(&mut y[lay.blk_off[j]..lay.blk_off[j + 1]], sigma);
        }
        lay.adjoint(&y, &mut aty, &mut scratch);
        for i in 0..nx {
            x[i] -= tau * aty[i];
            xbar[i] = 2.0 * x[i] - x_prev[i];
        }
        if it % cfg.check_every != 0 && it != cfg.max_iters {
            continue;
        }
        // residuals of the optimality system
        let dx: Vec<f64> = x_prev.iter().zip(&x).map(|(a, b)| a - b).collect();
        let dy: Vec<f64> = y_prev.iter().zip(&y).map(|(a, b)| a - b).collect();
        lay.apply(&dx, &mut dx_a, &mut scratch);
        lay.adjoint(&dy, &mut dy_at, &mut scratch);
        let p_res: Vec<f64> = dx.iter().zip(&dy_at).map(|(a, b)| a / tau - b).collect();
        let d_res: Vec<f64> = dy.iter().zip(&dx_a).map(|(a, b)| a / sigma - b).collect();
        let scale = 1.0 + norm(&x) + norm(&y);
        let pr = norm(&p_res) / scale;
        let dr = norm(&d_res) / scale;

        cert.update(&lay, &x, &y);
        let gap = cert.gap();
        if n_checks % cfg.log_stride == 0 {
            trace.push(TraceRow {
                iteration: it,
                primal_residual: pr,
                dual_residual: dr,
                gap,
            });
        }
        n_checks += 1;
        if gap.is_finite() {
            if gap <= cfg.gap_tol * (1.0 + cert.primal.abs()) {
                converged = true;
                break;
            }
        } else if pr <= cfg.residual_tol && dr <= cfg.residual_tol {
            converged = true;
            break;
        }
    }
    if cert.best_x.is_empty() {
        cert.update(&lay, &x, &y);
    }
    let gap = cert.gap();
    let value = if cert.primal.is_finite() {
        cert.primal
    } else {
        lay.primal_value(&x)
    };
    Ok(SaddleResult {
        value,
        dual_value: cert.dual,
        x: if cert.best_x.is_empty() { x } else { cert.best_x.clone() },
        y: if cert.best_y.is_empty() { y } else { cert.best_y.clone() },
        gap,
        gap_reliable: gap.is_finite() && cert.reliable,
        iterations: it,
        converged,
        trace,
        steps,
    })
}

/// No primal variables: the objective is the constant `sum F_j(c_j)` and the
/// dual is maximized by any `y_j` in the subdifferential.
fn trivial_result(lay: &Layout<'_>) -> SaddleResult {
    let spec = lay.spec;
    let value: f64 = spec.blocks.iter().map(|b| b.functional.eval_unchecked(&b.offset)).sum();
    let mut y = Vec::with_capacity(lay.ny());
    for b in &spec.blocks {
        // y = c - prox_F(c) lies in the conjugate domain; exact for quadratics
        let mut p = b.offset.clone();
        b.functional.prox_in_place(&mut p, 1.0);
        y.extend(b.offset.iter().zip(&p).map(|(c, q)| c - q));
    }
    SaddleResult {
        value,
        dual_value: value,
        x: Vec::new(),
        y,
        gap: 0.0,
        gap_reliable: true,
        iterations: 0,
        converged: true,
        trace: vec![TraceRow {
            iteration: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            gap: 0.0,
        }],
        steps: StepSizes::from_norm(1.0),
    }
}

/// Output of evaluation and Tikhonov solves.
#[derive(Clone, Debug)]
pub struct SolveResult {
    pub value: f64,
    /// Minimizer for Tikhonov solves; the input for evaluations.
    pub u: Vec<f64>,
    /// Attaining edge variables, one vector per edge.
    pub edge_vars: Vec<Vec<f64>>,
    /// Dual variables, one vector per node (Tikhonov: plus the data block last).
    pub dual_vars: Vec<Vec<f64>>,
    pub gap: f64,
    pub gap_reliable: bool,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

impl SolveResult {
    pub fn trace_csv(&self) -> String {
        trace_csv(&self.trace)
    }

    /// Node duals concatenated in node order.
    pub fn dual_flat(&self, n_nodes: usize) -> Vec<f64> {
        self.dual_vars.iter().take(n_nodes).flatten().copied().collect()
    }
}

fn split_result(spec: &SaddleSpec, raw: &SaddleResult, u: Vec<f64>) -> SolveResult {
    let mut edge_vars = Vec::with_capacity(spec.n_edges);
    let mut off = 0;
    for (s, &len) in spec.segments.iter().enumerate() {
        if s < spec.n_edges {
            edge_vars.push(if raw.x.is_empty() {
                vec![0.0; len]
            } else {
                raw.x[off..off + len].to_vec()
            });
        }
        off += len;
    }
    let mut dual_vars = Vec::with_capacity(spec.blocks.len());
    let mut off = 0;
    for b in &spec.blocks {
        let d = b.functional.domain().dim();
        dual_vars.push(raw.y[off..off + d].to_vec());
        off += d;
    }
    SolveResult {
        value: raw.value,
        u,
        edge_vars,
        dual_vars,
        gap: raw.gap,
        gap_reliable: raw.gap_reliable,
        iterations: raw.iterations,
        converged: raw.converged,
        trace: raw.trace.clone(),
    }
}

/// `R_alpha(u)` with certified duality gap.
pub fn evaluate_r(g: &RegGraph, alpha: &[f64], u: &[f64], cfg: &SolverConfig) -> Result<SolveResult> {
    check_len("root input", g.root_space().dim(), u.len())?;
    let ap = assemble(g, alpha)?;
    let spec = flatten_saddle(&ap, Some(u), None)?;
    let raw = run_saddle(&spec, cfg)?;
    Ok(split_result(&spec, &raw, u.to_vec()))
}

/// `min_u 1/2 |K u - f|^2 + beta R_alpha(u)` jointly over `u` and the edge variables.
pub fn solve_tikhonov(
    k: &LinOp,
    f: &[f64],
    beta: f64,
    g: &RegGraph,
    alpha: &[f64],
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    let ap = assemble(g, alpha)?;
    let fit = DataFit {
        k: k.clone(),
        f: f.to_vec(),
        beta,
    };
    let spec = flatten_saddle(&ap, None, Some(&fit))?;
    let raw = run_saddle(&spec, cfg)?;
    let s = spec.u_segment.expect("Tikhonov problems carry u");
    let start: usize = spec.segments[..s].iter().sum();
    let u = raw.x[start..start + spec.segments[s]].to_vec();
    Ok(split_result(&spec, &raw, u))
}

/// Gap recomputed from the node duals of an evaluation result after
/// projection onto the predual constraint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CertifiedGap {
    pub gap: f64,
    pub dual_value: f64,
    pub reliable: bool,
}

pub fn certified_gap(g: &RegGraph, alpha: &[f64], u: &[f64], result: &SolveResult) -> Result<CertifiedGap> {
    let pd = assemble_predual(g, alpha, u)?;
    let v = result.dual_flat(g.n_nodes());
    let proj = pd.project(&v)?;
    let gap = result.value - proj.value;
    Ok(CertifiedGap {
        gap,
        dual_value: proj.value,
        reliable: proj.projection_converged && gap.is_finite(),
    })
}
