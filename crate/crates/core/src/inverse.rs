//! Forward models, Gaussian corruption and vanishing-noise experiments.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::graph::{hat_transform, invariant_subspace, RegGraph};
use crate::library::OperatorSpec;
use crate::library::make_operator;
use crate::linalg::{analyze_matrix, LinOp, Space, KERNEL_TOL};
use crate::linalg::vec_ops::norm;
use crate::rng::SplitMix64;
use crate::solver::{evaluate_r, solve_tikhonov, SolverConfig};

/// Forward operator `K` acting on scalar fields of a given shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ForwardSpec {
    Identity {},
    GaussianBlur {
        sigma: f64,
        #[serde(default)]
        radius: Option<usize>,
    },
    /// Keeps the entries where `pattern` is true.
    Mask { pattern: Vec<bool> },
    /// Row-major `rows x cols` matrix; `cols` must equal the signal size.
    Dense { rows: usize, cols: usize, data: Vec<f64> },
}

pub fn make_forward(spec: &ForwardSpec, shape: &[usize]) -> Result<LinOp> {
    let space = Space::scalar(shape)?;
    match spec {
        ForwardSpec::Identity {} => Ok(LinOp::identity(&space)),
        ForwardSpec::GaussianBlur { sigma, radius } => make_operator(&OperatorSpec::Blur {
            shape: shape.to_vec(),
            sigma: *sigma,
            radius: *radius,
        }),
        ForwardSpec::Mask { pattern } => {
            if pattern.len() != space.dim() {
                return Err(Error::InvalidParameter(format!(
                    "mask pattern has {} entries for a signal of size {}",
                    pattern.len(),
                    space.dim()
                )));
            }
            let keep: Vec<usize> = (0..pattern.len()).filter(|&i| pattern[i]).collect();
            make_operator(&OperatorSpec::Mask {
                shape: shape.to_vec(),
                keep,
            })
        }
        ForwardSpec::Dense { rows, cols, data } => {
            check_len("dense forward columns", space.dim(), *cols)?;
            check_len("dense forward data", rows * cols, data.len())?;
            let m = DMatrix::from_row_slice(*rows, *cols, data);
            LinOp::dense(m, &space, &Space::coeff(*rows)?)
        }
    }
}

/// Additive Gaussian noise of standard deviation `sigma`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub sigma: f64,
    pub seed: u64,
}

/// `f = K u + sigma xi` with `xi` drawn from the seeded generator.
pub fn corrupt(k: &LinOp, u: &[f64], noise: &NoiseModel) -> Result<Vec<f64>> {
    if !(noise.sigma.is_finite() && noise.sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise sigma must be >= 0, got {}", noise.sigma)));
    }
    let mut f = k.apply(u)?;
    let xi = SplitMix64::new(noise.seed).normal_vec(f.len());
    for (fi, x) in f.iter_mut().zip(&xi) {
        *fi += noise.sigma * x;
    }
    Ok(f)
}

/// Noise levels and parameter choice of a vanishing-noise run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub sigmas: Vec<f64>,
    /// Explicit `beta_k`; otherwise `beta_k = c delta_k^r`.
    #[serde(default)]
    pub betas: Option<Vec<f64>>,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_r")]
    pub r: f64,
    /// Per-level edge weights; otherwise the fixed `alpha` of the run.
    #[serde(default)]
    pub alphas: Option<Vec<Vec<f64>>>,
    pub seed: u64,
}

fn default_c() -> f64 {
    1.0
}

fn default_r() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelResult {
    pub k: usize,
    pub sigma: f64,
    pub delta: f64,
    pub beta: f64,
    /// Error to the ground truth, modulo `ker K ∩ L` when that space is nontrivial.
    pub err_l2: f64,
    pub r_value: f64,
    pub gap: f64,
    pub iters: usize,
    pub converged: bool,
    pub u: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VanishingNoiseRun {
    pub levels: Vec<LevelResult>,
    /// Limit functional at the ground truth.
    pub r_hat_truth: f64,
    /// Dimension of the shift space `ker K ∩ L` used for error correction.
    pub shift_dim: usize,
    /// Some level did not converge.
    pub partial: bool,
}

impl VanishingNoiseRun {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,sigma,delta_k,beta_k,err_l2,R_value,gap,iters\n");
        for l in &self.levels {
            let _ = writeln!(
                s,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{}",
                l.k, l.sigma, l.delta, l.beta, l.err_l2, l.r_value, l.gap, l.iters
            );
        }
        s
    }
}

/// Orthonormal basis of `ker K ∩ L` for the invariant subspace `L` of `g`.
fn shift_basis(g: &RegGraph, alpha: &[f64], k: &LinOp) -> Result<DMatrix<f64>> {
    let n = g.root_space().dim();
    let (hat, tilde) = hat_transform(g, alpha)?;
    let inv = invariant_subspace(&hat, &tilde)?;
    let l = &inv.basis_l;
    if l.ncols() == 0 {
        return Ok(DMatrix::zeros(n, 0));
    }
    let kl = k.to_dense()? * l;
    let an = analyze_matrix(&kl, KERNEL_TOL);
    Ok(l * an.kernel_basis)
}

/// Tikhonov solves along a schedule of decreasing noise levels with
/// `delta_k = 1/2 |f_k - K u†|^2`.
pub fn run_vanishing_noise(
    g: &RegGraph,
    alpha: &[f64],
    k: &LinOp,
    truth: &[f64],
    schedule: &Schedule,
    cfg: &SolverConfig,
) -> Result<VanishingNoiseRun> {
    check_len("edge weights", g.n_edges(), alpha.len())?;
    check_len("ground truth", g.root_space().dim(), truth.len())?;
    let levels = schedule.sigmas.len();
    if levels == 0 {
        return Err(Error::InvalidParameter("schedule has no levels".into()));
    }
    if let Some(b) = &schedule.betas {
        check_len("schedule betas", levels, b.len())?;
    }
    if let Some(a) = &schedule.alphas {
        check_len("schedule alphas", levels, a.len())?;
    }
    if schedule.sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::InvalidParameter("noise levels must be finite and >= 0".into()));
    }
    let clean = k.apply(truth)?;
    let xi = SplitMix64::new(schedule.seed).normal_vec(clean.len());
    let xi_sq: f64 = xi.iter().map(|x| x * x).sum();
    let deltas: Vec<f64> = schedule.sigmas.iter().map(|s| 0.5 * s * s * xi_sq).collect();
    let betas: Vec<f64> = match &schedule.betas {
        Some(b) => b.clone(),
        None => {
            if deltas.windows(2).any(|w| w[1] >= w[0]) {
                return Err(Error::InvalidParameter(
                    "noise levels must be strictly decreasing when beta follows delta".into(),
                ));
            }
            deltas.iter().map(|d| schedule.c * d.powf(schedule.r)).collect()
        }
    };
    if betas.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
        return Err(Error::InvalidParameter("every beta_k must be positive".into()));
    }

    let (hat, tilde) = hat_transform(g, alpha)?;
    let r_hat_truth = evaluate_r(&hat, &tilde, truth, cfg)?.value;
    let shifts = shift_basis(g, alpha, k)?;

    let mut out = Vec::with_capacity(levels);
    let mut partial = false;
    for lvl in 0..levels {
        let sigma = schedule.sigmas[lvl];
        let f: Vec<f64> = clean.iter().zip(&xi).map(|(c, x)| c + sigma * x).collect();
        let a_k = schedule.alphas.as_ref().map_or(alpha, |a| a[lvl].as_slice());
        let sol = solve_tikhonov(k, &f, betas[lvl], g, a_k, cfg)?;
        let r_eval = evaluate_r(g, a_k, &sol.u, cfg)?;
        let diff = nalgebra::DVector::from_iterator(truth.len(), sol.u.iter().zip(truth).map(|(a, b)| a - b));
        let err = if shifts.ncols() > 0 {
            let proj = &shifts * (shifts.transpose() * &diff);
            (diff - proj).norm()
        } else {
            norm(diff.as_slice())
        };
        partial |= !(sol.converged && r_eval.converged);
        out.push(LevelResult {
            k: lvl + 1,
            sigma,
            delta: deltas[lvl],
            beta: betas[lvl],
            err_l2: err,
            r_value: r_eval.value,
            gap: sol.gap,
            iters: sol.iterations,
            converged: sol.converged,
            u: sol.u,
        });
    }
    Ok(VanishingNoiseRun {
        levels: out,
        r_hat_truth,
        shift_dim: shifts.ncols(),
        partial,
    })
}
