//! Derivative-free learning of edge weights and the regularization
//! parameter, with edge pruning and classification of the learned model.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::functionals::FunctionalKind;
use crate::graph::{invariant_subspace, RegGraph};
use crate::library::{make_graph, FrameKind, GraphSpec};
use crate::linalg::vec_ops::norm;
use crate::linalg::LinOp;
use crate::solver::{solve_tikhonov, SolverConfig};

/// Box constraint `alpha_e in [0, c]` on the learnable edges plus an optional
/// `l1` term; non-learnable edges are pinned to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct PenaltyH1 {
    pub learnable: Vec<usize>,
    pub c: f64,
    pub l1: f64,
}

impl PenaltyH1 {
    pub fn boxed(g: &RegGraph, c: f64) -> Result<PenaltyH1> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidParameter(format!("box bound c must be positive, got {c}")));
        }
        Ok(PenaltyH1 {
            learnable: g.learnable_edges(),
            c,
            l1: 0.0,
        })
    }

    pub fn eval(&self, alpha: &[f64]) -> f64 {
        let mut total = 0.0;
        for (e, &a) in alpha.iter().enumerate() {
            if self.learnable.contains(&e) {
                if !(0.0..=self.c).contains(&a) {
                    return f64::INFINITY;
                }
                total += self.l1 * a;
            } else if a != 1.0 {
                return f64::INFINITY;
            }
        }
        total
    }

    /// Full weight vector from the learnable components.
    pub fn expand(&self, n_edges: usize, learn: &[f64]) -> Vec<f64> {
        let mut a = vec![1.0; n_edges];
        for (i, &e) in self.learnable.iter().enumerate() {
            a[e] = learn[i];
        }
        a
    }
}

/// Penalty on `sum_e |P^e w_e|`, the edge-variable components in the
/// finite-dimensional spaces `M^e`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PenaltyH2 {
    None,
    /// Indicator of `[0, d]`.
    Indicator { d: f64 },
    Linear { coef: f64 },
}

impl PenaltyH2 {
    pub fn eval(&self, g: &RegGraph, alpha: &[f64], w: &[Vec<f64>]) -> Result<f64> {
        if let PenaltyH2::None = self {
            return Ok(0.0);
        }
        check_len("edge variables", g.n_edges(), w.len())?;
        let inv = invariant_subspace(g, alpha)?;
        let s: f64 = (0..g.n_edges()).map(|e| norm(&inv.project_edge(e, &w[e]))).sum();
        Ok(match self {
            PenaltyH2::None => 0.0,
            PenaltyH2::Indicator { d } => {
                if s <= *d {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            PenaltyH2::Linear { coef } => coef * s,
        })
    }
}

/// `|u - u_hat| + H1(alpha) + H2(w)` with the Euclidean norm.
pub fn upper_loss(
    u: &[f64],
    u_hat: &[f64],
    g: &RegGraph,
    alpha: &[f64],
    w: &[Vec<f64>],
    h1: &PenaltyH1,
    h2: &PenaltyH2,
) -> Result<f64> {
    check_len("reconstruction", u_hat.len(), u.len())?;
    let d: Vec<f64> = u.iter().zip(u_hat).map(|(a, b)| a - b).collect();
    let p1 = h1.eval(alpha);
    if !p1.is_finite() {
        return Ok(f64::INFINITY);
    }
    Ok(norm(&d) + p1 + h2.eval(g, alpha, w)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Search {
    /// Uniform grid on `[0, c]` per learnable weight times log-spaced betas.
    Grid { alpha_points: usize, beta_points: usize },
    /// Coordinate descent started from the best point of a grid.
    CoordinateDescent {
        alpha_points: usize,
        beta_points: usize,
        passes: usize,
        shrink: f64,
    },
    NelderMead { budget: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BilevelConfig {
    pub search: Search,
    pub beta_range: (f64, f64),
    pub solver: SolverConfig,
    pub parallel: bool,
    pub cache: bool,
}

impl BilevelConfig {
    pub fn grid(alpha_points: usize, beta_points: usize, beta_range: (f64, f64)) -> BilevelConfig {
        BilevelConfig {
            search: Search::Grid {
                alpha_points,
                beta_points,
            },
            beta_range,
            solver: SolverConfig::default(),
            parallel: true,
            cache: true,
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.beta_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi >= lo) {
            return Err(Error::InvalidParameter(format!(
                "beta range must satisfy 0 < lo <= hi, got ({lo}, {hi})"
            )));
        }
        match &self.search {
            Search::Grid {
                alpha_points,
                beta_points,
            }
            | Search::CoordinateDescent {
                alpha_points,
                beta_points,
                ..
            } => {
                if *alpha_points == 0 || *beta_points == 0 {
                    return Err(Error::InvalidParameter("grid resolutions must be positive".into()));
                }
            }
            Search::NelderMead { budget } => {
                if *budget == 0 {
                    return Err(Error::InvalidParameter("Nelder-Mead budget must be positive".into()));
                }
            }
        }
        if let Search::CoordinateDescent { shrink, .. } = &self.search {
            if !(*shrink > 0.0 && *shrink < 1.0) {
                return Err(Error::InvalidParameter("shrink factor must lie in (0, 1)".into()));
            }
        }
        self.solver.validate()
    }
}

/// One training example: ground truth and measured data.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub truth: Vec<f64>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateRecord {
    pub id: usize,
    /// Learnable weights only.
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub loss: f64,
    pub gap: f64,
    pub iters: usize,
}

#[derive(Clone, Debug)]
pub struct BilevelResult {
    /// Full weight vector.
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub loss: f64,
    /// Lower-level reconstructions at the optimum, one per training pair.
    pub u: Vec<Vec<f64>>,
    pub edge_vars: Vec<Vec<Vec<f64>>>,
    pub trace: Vec<CandidateRecord>,
    pub pruned: Vec<usize>,
    /// `beta` at an end of the search range.
    pub beta_at_boundary: bool,
    pub report: LimitReport,
}

impl BilevelResult {
    pub fn trace_csv(&self) -> String {
        trace_csv(&self.trace)
    }
}

pub fn trace_csv(trace: &[CandidateRecord]) -> String {
    let m = trace.first().map_or(0, |r| r.alpha.len());
    let mut s = String::from("candidate_id");
    for i in 0..m {
        let _ = write!(s, ",alpha_{i}");
    }
    s.push_str(",beta,loss,gap,iters\n");
    for r in trace {
        let _ = write!(s, "{}", r.id);
        for a in &r.alpha {
            let _ = write!(s, ",{a:e}");
        }
        let _ = writeln!(s, ",{:e},{:e},{:e},{}", r.beta, r.loss, r.gap, r.iters);
    }
    s
}

#[derive(Clone, Debug)]
struct Evaluation {
    loss: f64,
    gap: f64,
    iters: usize,
    u: Vec<Vec<f64>>,
    w: Vec<Vec<Vec<f64>>>,
}

type CacheKey = (Vec<i64>, u64);

struct Problem<'a> {
    pairs: &'a [TrainingPair],
    k: &'a LinOp,
    g: &'a RegGraph,
    h1: &'a PenaltyH1,
    h2: &'a PenaltyH2,
    cfg: &'a BilevelConfig,
    cache: Mutex<HashMap<CacheKey, Evaluation>>,
    trace: Vec<CandidateRecord>,
}

impl<'a> Problem<'a> {
    fn key(learn: &[f64], beta: f64) -> CacheKey {
        (learn.iter().map(|a| (a * 1e12).round() as i64).collect(), beta.to_bits())
    }

    fn evaluate_one(&self, learn: &[f64], beta: f64) -> Result<Evaluation> {
        let key = Self::key(learn, beta);
        if self.cfg.cache {
            if let Some(e) = self.cache.lock().expect("cache lock").get(&key) {
                return Ok(e.clone());
            }
        }
        let alpha = self.h1.expand(self.g.n_edges(), learn);
        let mut ev = Evaluation {
            loss: 0.0,
            gap: 0.0,
            iters: 0,
            u: Vec::new(),
            w: Vec::new(),
        };
        if !self.h1.eval(&alpha).is_finite() {
            ev.loss = f64::INFINITY;
            ev.gap = f64::NAN;
        } else {
            for p in self.pairs {
                let sol = solve_tikhonov(self.k, &p.data, beta, self.g, &alpha, &self.cfg.solver)?;
                ev.loss += upper_loss(&sol.u, &p.truth, self.g, &alpha, &sol.edge_vars, &PenaltyH1 { l1: 0.0, ..self.h1.clone() }, self.h2)?;
                ev.gap = ev.gap.max(sol.gap);
                ev.iters += sol.iterations;
                ev.u.push(sol.u);
                ev.w.push(sol.edge_vars);
            }
            ev.loss += self.h1.eval(&alpha);
        }
        if self.cfg.cache {
            self.cache.lock().expect("cache lock").insert(key, ev.clone());
        }
        Ok(ev)
    }

    /// Evaluates a batch and appends it to the trace in batch order.
    fn evaluate(&mut self, batch: &[(Vec<f64>, f64)]) -> Result<Vec<Evaluation>> {
        let results: Vec<Result<Evaluation>> = if self.cfg.parallel {
            batch.par_iter().map(|(a, b)| self.evaluate_one(a, *b)).collect()
        } else {
            batch.iter().map(|(a, b)| self.evaluate_one(a, *b)).collect()
        };
        let mut out = Vec::with_capacity(batch.len());
        for ((a, b), r) in batch.iter().zip(results) {
            let ev = r?;
            self.trace.push(CandidateRecord {
                id: self.trace.len(),
                alpha: a.clone(),
                beta: *b,
                loss: ev.loss,
                gap: ev.gap,
                iters: ev.iters,
            });
            out.push(ev);
        }
        Ok(out)
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![if lo == hi { lo } else { 0.5 * (lo + hi) }];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 || lo == hi {
        return vec![(lo * hi).sqrt()];
    }
    linspace(lo.ln(), hi.ln(), n).into_iter().map(f64::exp).collect()
}

fn grid_points(m: usize, c: f64, alpha_points: usize, betas: &[f64]) -> Vec<(Vec<f64>, f64)> {
    let axis = if alpha_points == 1 { vec![c] } else { linspace(0.0, c, alpha_points) };
    let mut combos: Vec<Vec<f64>> = vec![Vec::new()];
    for _ in 0..m {
        combos = combos
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    combos
        .into_iter()
        .flat_map(|a| betas.iter().map(move |&b| (a.clone(), b)))
        .collect()
}

/// Index of the smallest loss; ties go to the earliest candidate.
fn argmin(losses: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &l) in losses.iter().enumerate() {
        if l.is_finite() && best.is_none_or(|b| l < losses[b]) {
            best = Some(i);
        }
    }
    best
}

/// Minimizes the upper loss over `(alpha, beta)` with the configured search.
pub fn learn(
    pairs: &[TrainingPair],
    k: &LinOp,
    g: &RegGraph,
    h1: &PenaltyH1,
    h2: &PenaltyH2,
    cfg: &BilevelConfig,
) -> Result<BilevelResult> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::InvalidParameter("no training pairs".into()));
    }
    for p in pairs {
        check_len("training truth", g.root_space().dim(), p.truth.len())?;
        check_len("training data", k.codomain().dim(), p.data.len())?;
    }
    let m = h1.learnable.len();
    let (blo, bhi) = cfg.beta_range;
    let mut prob = Problem {
        pairs,
        k,
        g,
        h1,
        h2,
        cfg,
        cache: Mutex::new(HashMap::new()),
        trace: Vec::new(),
    };
    let (best_a, best_b) = match &cfg.search {
        Search::Grid {
            alpha_points,
            beta_points,
        } => {
            let pts = grid_points(m, h1.c, *alpha_points, &logspace(blo, bhi, *beta_points));
            let evs = prob.evaluate(&pts)?;
            let losses: Vec<f64> = evs.iter().map(|e| e.loss).collect();
            let i = argmin(&losses).ok_or(Error::NoFeasibleCandidate)?;
            pts[i].clone()
        }
        Search::CoordinateDescent {
            alpha_points,
            beta_points,
            passes,
            shrink,
        } => {
            let pts = grid_points(m, h1.c, *alpha_points, &logspace(blo, bhi, *beta_points));
            let evs = prob.evaluate(&pts)?;
            let losses: Vec<f64> = evs.iter().map(|e| e.loss).collect();
            let i = argmin(&losses).ok_or(Error::NoFeasibleCandidate)?;
            let (mut a, mut b) = pts[i].clone();
            let mut loss = losses[i];
            let mut step_a = h1.c / (*alpha_points).max(2) as f64;
            let mut step_lb = if *beta_points > 1 {
                (bhi / blo).ln() / (*beta_points - 1) as f64
            } else {
                (bhi / blo).ln().max(1.0) / 2.0
            };
            for _ in 0..*passes {
                for coord in 0..=m {
                    let mut trial = Vec::new();
                    for sgn in [1.0, -1.0] {
                        let (mut ta, mut tb) = (a.clone(), b);
                        if coord < m {
                            ta[coord] = (ta[coord] + sgn * step_a).clamp(0.0, h1.c);
                        } else {
                            tb = (tb.ln() + sgn * step_lb).exp().clamp(blo, bhi);
                        }
                        trial.push((ta, tb));
                    }
                    let evs = prob.evaluate(&trial)?;
                    for (t, ev) in trial.into_iter().zip(evs) {
                        if ev.loss < loss {
                            loss = ev.loss;
                            a = t.0;
                            b = t.1;
                        }
                    }
                }
                step_a *= shrink;
                step_lb *= shrink;
            }
            (a, b)
        }
        Search::NelderMead { budget } => nelder_mead(&mut prob, m, *budget)?,
    };
    let final_ev = prob.evaluate_one(&best_a, best_b)?;
    if !final_ev.loss.is_finite() {
        return Err(Error::NoFeasibleCandidate);
    }
    let alpha = h1.expand(g.n_edges(), &best_a);
    let prune_tol = 1e-3 * h1.c;
    let report = limit_regularizer_report(g, &alpha, prune_tol)?;
    Ok(BilevelResult {
        pruned: report.pruned.clone(),
        alpha,
        beta: best_b,
        loss: final_ev.loss,
        u: final_ev.u,
        edge_vars: final_ev.w,
        trace: prob.trace,
        beta_at_boundary: best_b <= blo * (1.0 + 1e-12) || best_b >= bhi * (1.0 - 1e-12),
        report,
    })
}

/// Nelder–Mead on `(alpha in [0, c]^m, log beta in [log lo, log hi])`,
/// clamping trial points into the box.
fn nelder_mead(prob: &mut Problem<'_>, m: usize, budget: usize) -> Result<(Vec<f64>, f64)> {
    let c = prob.h1.c;
    let (blo, bhi) = prob.cfg.beta_range;
    let (llo, lhi) = (blo.ln(), bhi.ln());
    let dim = m + 1;
    let clamp = |x: &[f64]| -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| if i < m { v.clamp(0.0, c) } else { v.clamp(llo, lhi) })
            .collect()
    };
    let to_point = |x: &[f64]| -> (Vec<f64>, f64) { (x[..m].to_vec(), x[m].exp()) };
    let mut used = 0usize;
    let eval = |prob: &mut Problem<'_>, x: &[f64], used: &mut usize| -> Result<f64> {
        *used += 1;
        Ok(prob.evaluate(&[to_point(x)])?[0].loss)
    };
    let center: Vec<f64> = (0..dim).map(|i| if i < m { 0.5 * c } else { 0.5 * (llo + lhi) }).collect();
    let mut simplex = vec![center.clone()];
    for i in 0..dim {
        let mut v = center.clone();
        v[i] += if i < m { 0.25 * c } else { 0.25 * (lhi - llo).max(1.0) };
        simplex.push(clamp(&v));
    }
    let batch: Vec<(Vec<f64>, f64)> = simplex.iter().map(|x| to_point(x)).collect();
    let mut f: Vec<f64> = prob.evaluate(&batch)?.into_iter().map(|e| e.loss).collect();
    used += simplex.len();
    while used < budget {
        let mut idx: Vec<usize> = (0..simplex.len()).collect();
        idx.sort_by(|&a, &b| f[a].total_cmp(&f[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        f = idx.iter().map(|&i| f[i]).collect();
        let worst = dim;
        let centroid: Vec<f64> = (0..dim)
            .map(|j| simplex[..dim].iter().map(|x| x[j]).sum::<f64>() / dim as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            clamp(
                &centroid
                    .iter()
                    .zip(&simplex[worst])
                    .map(|(c0, w)| c0 + t * (c0 - w))
                    .collect::<Vec<_>>(),
            )
        };
        let xr = along(1.0);
        let fr = eval(prob, &xr, &mut used)?;
        if fr < f[0] {
            let xe = along(2.0);
            let fe = eval(prob, &xe, &mut used)?;
            if fe < fr {
                simplex[worst] = xe;
                f[worst] = fe;
            } else {
                simplex[worst] = xr;
                f[worst] = fr;
            }
        } else if fr < f[dim - 1] {
            simplex[worst] = xr;
            f[worst] = fr;
        } else {
            let xc = along(if fr < f[worst] { 0.5 } else { -0.5 });
            let fc = eval(prob, &xc, &mut used)?;
            if fc < f[worst].min(fr) {
                simplex[worst] = xc;
                f[worst] = fc;
            } else {
                for i in 1..=dim {
                    simplex[i] = clamp(
                        &simplex[0]
                            .iter()
                            .zip(&simplex[i])
                            .map(|(b, x)| b + 0.5 * (x - b))
                            .collect::<Vec<_>>(),
                    );
                    if used < budget {
                        f[i] = eval(prob, &simplex[i].clone(), &mut used)?;
                    } else {
                        f[i] = f64::INFINITY;
                    }
                }
            }
        }
    }
    let i = argmin(&f).ok_or(Error::NoFeasibleCandidate)?;
    Ok(to_point(&simplex[i]))
}

/// Effective regularizer after pruning the edges with `alpha_e <= prune_tol`.
#[derive(Clone, Debug, PartialEq)]
pub struct LimitReport {
    /// `TV`, `TGV²`, `TV △ frame-l1`, `TGV² △ frame-l1` or `custom`.
    pub name: String,
    pub pruned: Vec<usize>,
    pub alpha: Vec<f64>,
}

impl fmt::Display for LimitReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "effective regularizer: {}", self.name)?;
        let w: Vec<String> = self.alpha.iter().map(|a| format!("{a:.6}")).collect();
        writeln!(f, "weights: [{}]", w.join(", "))?;
        let p: Vec<String> = self.pruned.iter().map(|e| e.to_string()).collect();
        write!(f, "pruned edges: [{}]", p.join(", "))
    }
}

/// Structural signature ignoring weights and sizes; pass-through splitting
/// nodes (one identity child) are collapsed.
fn signature(g: &RegGraph, node: usize, dropped: &[bool]) -> String {
    let kids: Vec<usize> = g.child_edges(node).iter().copied().filter(|&e| !dropped[e]).collect();
    let kind = g.node(node).functional.kind();
    if kids.is_empty() {
        return kind_signature(kind);
    }
    if matches!(kind, FunctionalKind::IndicatorZero) && kids.len() == 1 {
        let e = g.edge(kids[0]);
        if e.theta.spec().name() == "identity" && e.phi.spec().name() == "identity" {
            return signature(g, e.head, dropped);
        }
    }
    let mut parts: Vec<String> = kids
        .iter()
        .map(|&e| {
            let edge = g.edge(e);
            format!(
                "{}/{}:{}",
                edge.theta.spec().name(),
                edge.phi.spec().name(),
                signature(g, edge.head, dropped)
            )
        })
        .collect();
    parts.sort();
    format!("{}[{}]", kind_signature(kind), parts.join(","))
}

fn kind_signature(kind: &FunctionalKind) -> String {
    match kind {
        FunctionalKind::CompositeFg { f, g } => format!("fg({},{})", kind_signature(f), kind_signature(g)),
        other => other.name().to_string(),
    }
}

fn graph_signature(g: &RegGraph, alpha: &[f64], tol: f64) -> String {
    let dropped: Vec<bool> = (0..g.n_edges()).map(|e| g.edge(e).learnable && alpha[e] <= tol).collect();
    signature(g, g.root(), &dropped)
}

fn reference_signatures() -> Result<Vec<(String, &'static str)>> {
    let shape = vec![8];
    let mut refs = Vec::new();
    let (tv, a) = make_graph(&GraphSpec::Tv { shape: shape.clone() })?;
    refs.push((graph_signature(&tv, &a, 0.0), "TV"));
    let (tgv, a) = make_graph(&GraphSpec::Tgv {
        shape: shape.clone(),
        k: 2,
        weights: vec![1.0],
    })?;
    refs.push((graph_signature(&tgv, &a, 0.0), "TGV²"));
    for frame in [FrameKind::Haar, FrameKind::Dct, FrameKind::Identity] {
        let (g, _) = make_graph(&GraphSpec::TgvFrameInfconv {
            shape: shape.clone(),
            alpha0: 1.0,
            alpha1: 1.0,
            frame,
        })?;
        // edge order: gradient, frame, identity, symmetrized gradient
        refs.push((graph_signature(&g, &[1.0, 1.0, 1.0, 0.0], 0.0), "TV △ frame-l1"));
        refs.push((graph_signature(&g, &[1.0, 1.0, 1.0, 1.0], 0.0), "TGV² △ frame-l1"));
    }
    Ok(refs)
}

/// Names the regularizer obtained after pruning small learnable weights.
pub fn limit_regularizer_report(g: &RegGraph, alpha: &[f64], prune_tol: f64) -> Result<LimitReport> {
    check_len("edge weights", g.n_edges(), alpha.len())?;
    let sig = graph_signature(g, alpha, prune_tol);
    let name = reference_signatures()?
        .into_iter()
        .find(|(s, _)| *s == sig)
        .map_or("custom", |(_, n)| n)
        .to_string();
    let pruned = (0..g.n_edges())
        .filter(|&e| g.edge(e).learnable && alpha[e] <= prune_tol)
        .collect();
    Ok(LimitReport {
        name,
        pruned,
        alpha: alpha.to_vec(),
    })
}
