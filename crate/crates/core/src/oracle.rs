//! Slow, duality-free reference computations.
//!
//! `brute_eval` minimizes the primal objective over the edge variables
//! directly: the `I_{0}` rows are eliminated through a null-space basis and
//! the remaining nonsmooth terms are smoothed and driven to zero smoothing by
//! continuation with damped Newton steps.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::functionals::FunctionalKind;
use crate::graph::RegGraph;
use crate::linalg::{full_svd, Space};
use crate::rng::SplitMix64;

/// Largest total edge dimension accepted by [`brute_eval`].
pub const ORACLE_MAX_DIM: usize = 512;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleConfig {
    /// Newton steps per continuation stage.
    pub newton_iters: usize,
    pub mu_start: f64,
    pub mu_end: f64,
    /// Stage tolerance on the Newton decrement.
    pub tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            newton_iters: 200,
            mu_start: 1e-1,
            mu_end: 1e-9,
            tol: 1e-16,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BruteEval {
    pub value: f64,
    /// Bound on the smoothing bias plus the change over the last stage.
    pub uncertainty: f64,
    pub converged: bool,
    /// Minimizing edge variables, concatenated in edge order.
    pub w: Vec<f64>,
}

#[derive(Clone, Debug)]
enum Piece {
    Norm { weight: f64, idx: Vec<usize> },
    Lq { q: f64, weight: f64, i: usize },
    Quad { weight: f64, i: usize },
    Ball { radius: f64, idx: Vec<usize> },
}

fn pieces(kind: &FunctionalKind, space: &Space, base: usize, out: &mut Vec<Piece>) {
    use FunctionalKind::*;
    match kind {
        IndicatorZero | Zero => {}
        GroupL1 { weight } => {
            for g in space.groups() {
                out.push(Piece::Norm {
                    weight: *weight,
                    idx: g.iter().map(|i| base + i).collect(),
                });
            }
        }
        GroupL1Aniso { weights } => {
            for i in 0..space.dim() {
                out.push(Piece::Norm {
                    weight: weights[space.channel_of(i)],
                    idx: vec![base + i],
                });
            }
        }
        LqNorm { q, weight } => {
            for i in 0..space.dim() {
                out.push(Piece::Lq {
                    q: *q,
                    weight: *weight,
                    i: base + i,
                });
            }
        }
        HalfSquaredL2 { weight } => {
            for i in 0..space.dim() {
                out.push(Piece::Quad { weight: *weight, i: base + i });
            }
        }
        IndicatorBall { radius } => {
            for (gi, g) in space.groups().enumerate() {
                out.push(Piece::Ball {
                    radius: if radius.len() == 1 { radius[0] } else { radius[gi] },
                    idx: g.iter().map(|i| base + i).collect(),
                });
            }
        }
        CompositeFg { f, g } => {
            let parts = space.parts();
            pieces(f, &parts[0].1, base + parts[0].0, out);
            pieces(g, &parts[1].1, base + parts[1].0, out);
        }
    }
}

/// Smoothed objective `sum_p phi_p(B t + b)`.
struct Smooth {
    b_mat: DMatrix<f64>,
    b_vec: DVector<f64>,
    pieces: Vec<Piece>,
}

impl Smooth {
    fn residual(&self, t: &DVector<f64>) -> DVector<f64> {
        &self.b_mat * t + &self.b_vec
    }

    fn value(&self, t: &DVector<f64>, mu: f64, rho: f64) -> f64 {
        let v = self.residual(t);
        self.pieces
            .iter()
            .map(|p| match p {
                Piece::Norm { weight, idx } => {
                    let s: f64 = idx.iter().map(|&i| v[i] * v[i]).sum();
                    weight * ((s + mu * mu).sqrt() - mu)
                }
                Piece::Lq { q, weight, i } => weight / q * ((v[*i] * v[*i] + mu * mu).powf(q / 2.0) - mu.powf(*q)),
                Piece::Quad { weight, i } => 0.5 * weight * v[*i] * v[*i],
                Piece::Ball { radius, idx } => {
                    let n = idx.iter().map(|&i| v[i] * v[i]).sum::<f64>().sqrt();
                    0.5 * rho * (n - radius).max(0.0).powi(2)
                }
            })
            .sum()
    }

    fn exact(&self, t: &DVector<f64>) -> f64 {
        let v = self.residual(t);
        let mut total = 0.0;
        for p in &self.pieces {
            total += match p {
                Piece::Norm { weight, idx } => weight * idx.iter().map(|&i| v[i] * v[i]).sum::<f64>().sqrt(),
                Piece::Lq { q, weight, i } => weight / q * v[*i].abs().powf(*q),
                Piece::Quad { weight, i } => 0.5 * weight * v[*i] * v[*i],
                Piece::Ball { radius, idx } => {
                    let n = idx.iter().map(|&i| v[i] * v[i]).sum::<f64>().sqrt();
                    if n > radius + 1e-6 * (1.0 + radius) {
                        f64::INFINITY
                    } else {
                        0.0
                    }
                }
            };
        }
        total
    }

    fn grad_hess(&self, t: &DVector<f64>, mu: f64, rho: f64) -> (DVector<f64>, DMatrix<f64>) {
        let v = self.residual(t);
        let n = t.len();
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        let rows = |idx: &[usize]| -> DMatrix<f64> {
            DMatrix::from_fn(idx.len(), n, |r, c| self.b_mat[(idx[r], c)])
        };
        for p in &self.pieces {
            match p {
                Piece::Norm { weight, idx } => {
                    let bp = rows(idx);
                    let vp = DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]));
                    let phi = (vp.norm_squared() + mu * mu).sqrt();
                    let btv = bp.transpose() * &vp;
                    g += &btv * (weight / phi);
                    h += (bp.transpose() * &bp) * (weight / phi);
                    h -= (&btv * btv.transpose()) * (weight / phi.powi(3));
                }
                Piece::Lq { q, weight, i } => {
                    let x = v[*i];
                    let s = x * x + mu * mu;
                    let d1 = weight * x * s.powf(q / 2.0 - 1.0);
                    let d2 = weight * (s.powf(q / 2.0 - 1.0) + (q - 2.0) * x * x * s.powf(q / 2.0 - 2.0));
                    let row = self.b_mat.row(*i).transpose();
                    g += &row * d1;
                    h += (&row * row.transpose()) * d2.max(0.0);
                }
                Piece::Quad { weight, i } => {
                    let row = self.b_mat.row(*i).transpose();
                    g += &row * (weight * v[*i]);
                    h += (&row * row.transpose()) * *weight;
                }
                Piece::Ball { radius, idx } => {
                    let vp = DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]));
                    let nv = vp.norm();
                    if nv > *radius {
                        let bp = rows(idx);
                        let btv = bp.transpose() * &vp;
                        g += &btv * (rho * (1.0 - radius / nv));
                        h += (bp.transpose() * &bp) * (rho * (1.0 - radius / nv));
                        h += (&btv * btv.transpose()) * (rho * radius / nv.powi(3));
                    }
                }
            }
        }
        (g, h)
    }
}

fn solve_damped(h: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let scale = (0..h.nrows()).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut lam = 1e-13 * scale;
    loop {
        let mut m = h.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += lam;
        }
        if let Some(ch) = m.cholesky() {
            return -ch.solve(g);
        }
        lam *= 10.0;
    }
}

/// Dense node rows of `Lambda_alpha` acting on the stacked edge variables.
fn dense_rows(g: &RegGraph, alpha: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    let mut offs = vec![0];
    for e in g.edges() {
        offs.push(offs.last().unwrap() + e.theta.domain().dim());
    }
    let n = *offs.last().unwrap();
    let mut blocks = Vec::with_capacity(g.n_nodes());
    for node in 0..g.n_nodes() {
        let d = g.node(node).space.dim();
        let mut m = DMatrix::zeros(d, n);
        for (e, edge) in g.edges().iter().enumerate() {
            if edge.head == node {
                let t = edge.theta.to_dense()?;
                m.view_mut((0, offs[e]), (d, t.ncols())).copy_from(&t);
            }
            if edge.tail == node {
                let p = edge.phi.to_dense()?;
                let mut v = m.view_mut((0, offs[e]), (d, p.ncols()));
                v -= p * alpha[e];
            }
        }
        blocks.push(m);
    }
    Ok(blocks)
}

/// Direct minimization of the primal objective over all edge variables.
pub fn brute_eval(g: &RegGraph, alpha: &[f64], u: &[f64], cfg: &OracleConfig) -> Result<BruteEval> {
    check_len("edge weights", g.n_edges(), alpha.len())?;
    check_len("root input", g.root_space().dim(), u.len())?;
    let n: usize = g.edges().iter().map(|e| e.theta.domain().dim()).sum();
    if n > ORACLE_MAX_DIM {
        return Err(Error::TooLarge { rows: n, cols: n });
    }
    let blocks = dense_rows(g, alpha)?;
    let shift = |node: usize| -> DVector<f64> {
        if node == g.root() {
            DVector::from_column_slice(u)
        } else {
            DVector::zeros(g.node(node).space.dim())
        }
    };
    // split rows into equality constraints and smooth rows
    let (mut c_rows, mut r_rows) = (Vec::new(), Vec::new());
    for node in 0..g.n_nodes() {
        if matches!(g.node(node).functional.kind(), FunctionalKind::IndicatorZero) {
            c_rows.push(node);
        } else {
            r_rows.push(node);
        }
    }
    let stack = |nodes: &[usize]| -> (DMatrix<f64>, DVector<f64>) {
        let m: usize = nodes.iter().map(|&k| blocks[k].nrows()).sum();
        let mut a = DMatrix::zeros(m, n);
        let mut s = DVector::zeros(m);
        let mut r = 0;
        for &k in nodes {
            let d = blocks[k].nrows();
            a.view_mut((r, 0), (d, n)).copy_from(&blocks[k]);
            s.rows_mut(r, d).copy_from(&shift(k));
            r += d;
        }
        (a, s)
    };
    let (c, cs) = stack(&c_rows);
    let (r, rs) = stack(&r_rows);

    // w = w0 + Z t with C w0 = -cs and columns of Z spanning ker C
    let (w0, z) = if c.nrows() == 0 {
        (DVector::zeros(n), DMatrix::identity(n, n))
    } else {
        let svd = full_svd(&c);
        let smax = svd.s.iter().copied().fold(0.0, f64::max);
        let tol = 1e-10 * smax.max(1.0);
        let rank = svd.s.iter().filter(|&&s| s > tol).count();
        let mut w0 = DVector::zeros(n);
        let rhs = -&cs;
        for k in 0..rank {
            let coef = svd.u.column(k).dot(&rhs) / svd.s[k];
            w0 += svd.v.column(k) * coef;
        }
        let resid = (&c * &w0 + &cs).norm();
        if resid > 1e-8 * (1.0 + cs.norm()) {
            return Ok(BruteEval {
                value: f64::INFINITY,
                uncertainty: 0.0,
                converged: true,
                w: w0.as_slice().to_vec(),
            });
        }
        (w0, svd.v.columns(rank, n - rank).into_owned())
    };

    let mut ps = Vec::new();
    let mut base = 0;
    for &k in &r_rows {
        let node = g.node(k);
        pieces(node.functional.kind(), &node.space, base, &mut ps);
        base += node.space.dim();
    }
    let smooth = Smooth {
        b_mat: &r * &z,
        b_vec: &r * &w0 + &rs,
        pieces: ps,
    };
    let dim = z.ncols();
    let mut t = DVector::zeros(dim);
    let mut mu = cfg.mu_start;
    let mut prev = f64::INFINITY;
    let mut last = f64::INFINITY;
    let mut converged = true;
    if dim > 0 {
        loop {
            let rho = 10.0 / mu;
            let mut stage_ok = false;
            for _ in 0..cfg.newton_iters {
                let (gr, h) = smooth.grad_hess(&t, mu, rho);
                let d = solve_damped(&h, &gr);
                let dec = -gr.dot(&d);
                if dec <= cfg.tol * (1.0 + smooth.value(&t, mu, rho).abs()) {
                    stage_ok = true;
                    break;
                }
                let f0 = smooth.value(&t, mu, rho);
                let mut s = 1.0;
                let mut moved = false;
                for _ in 0..60 {
                    let cand = &t + &d * s;
                    if smooth.value(&cand, mu, rho) <= f0 - 1e-4 * s * dec {
                        t = cand;
                        moved = true;
                        break;
                    }
                    s *= 0.5;
                }
                if !moved {
                    stage_ok = true;
                    break;
                }
            }
            converged &= stage_ok;
            prev = last;
            last = smooth.value(&t, mu, rho);
            if mu <= cfg.mu_end {
                break;
            }
            mu = (mu * 0.1).max(cfg.mu_end);
        }
    }
    let value = smooth.exact(&t);
    let uncertainty = if dim == 0 {
        0.0
    } else {
        let bias = smooth.pieces.len() as f64 * mu;
        if prev.is_finite() {
            (last - prev).abs() + bias
        } else {
            bias
        }
    };
    let w = &w0 + &z * &t;
    Ok(BruteEval {
        value,
        uncertainty,
        converged,
        w: w.as_slice().to_vec(),
    })
}

/// Exact minimizer of `1/2 |u - f|^2 + lambda sum |u_(i+1) - u_i|`.
///
/// Direct taut-string scan tracking the lower and upper tube segments.
pub fn taut_string_tv1d(f: &[f64], lambda: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    if n == 0 {
        return out;
    }
    if lambda <= 0.0 {
        return f.to_vec();
    }
    let (mut k, mut k0, mut kplus, mut kminus) = (0usize, 0usize, 0usize, 0usize);
    let mut umin = lambda;
    let mut umax = -lambda;
    let mut vmin = f[0] - lambda;
    let mut vmax = f[0] + lambda;
    let twolambda = 2.0 * lambda;
    loop {
        while k == n - 1 {
            if umin < 0.0 {
                loop {
                    out[k0] = vmin;
                    k0 += 1;
                    if k0 > kminus {
                        break;
                    }
                }
                k = k0;
                kminus = k0;
                vmin = f[k0];
                umin = lambda;
                umax = vmin + umin - vmax;
            } else if umax > 0.0 {
                loop {
                    out[k0] = vmax;
                    k0 += 1;
                    if k0 > kplus {
                        break;
                    }
                }
                k = k0;
                kplus = k0;
                vmax = f[k0];
                umax = -lambda;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1) as f64;
                while k0 <= k {
                    out[k0] = vmin;
                    k0 += 1;
                }
                return out;
            }
        }
        umin += f[k + 1] - vmin;
        if umin < -lambda {
            loop {
                out[k0] = vmin;
                k0 += 1;
                if k0 > kminus {
                    break;
                }
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmin = f[k0];
            vmax = vmin + twolambda;
            umin = lambda;
            umax = -lambda;
            continue;
        }
        umax += f[k + 1] - vmax;
        if umax > lambda {
            loop {
                out[k0] = vmax;
                k0 += 1;
                if k0 > kplus {
                    break;
                }
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmax = f[k0];
            vmin = vmax - twolambda;
            umin = lambda;
            umax = -lambda;
            continue;
        }
        k += 1;
        if umin >= lambda {
            kminus = k;
            vmin += (umin - lambda) / (kminus - k0 + 1) as f64;
            umin = lambda;
        }
        if umax <= -lambda {
            kplus = k;
            vmax += (umax + lambda) / (kplus - k0 + 1) as f64;
            umax = -lambda;
        }
    }
}

/// Directions `l` along which the functional does not change:
/// `|R(u0 + t l) - R(u0)| <= tol` for `t` in `{+-1, +-10}` at a random `u0`.
pub fn zero_set_probe(
    g: &RegGraph,
    alpha: &[f64],
    candidates: &[Vec<f64>],
    seed: u64,
    tol: f64,
    cfg: &OracleConfig,
) -> Result<Vec<bool>> {
    let dim = g.root_space().dim();
    let mut rng = SplitMix64::new(seed);
    let u0 = rng.normal_vec(dim);
    let base = brute_eval(g, alpha, &u0, cfg)?.value;
    let mut confirmed = Vec::with_capacity(candidates.len());
    for l in candidates {
        check_len("probe direction", dim, l.len())?;
        let mut ok = true;
        for t in [1.0, -1.0, 10.0, -10.0] {
            let u: Vec<f64> = u0.iter().zip(l).map(|(a, b)| a + t * b).collect();
            let v = brute_eval(g, alpha, &u, cfg)?.value;
            if !((v - base).abs() <= tol * (1.0 + base.abs())) {
                ok = false;
                break;
            }
        }
        confirmed.push(ok);
    }
    Ok(confirmed)
}
