use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::space::Space;
use super::vec_ops::{dot, norm};
use crate::error::{check_len, Error, Result};
use crate::library::OperatorSpec;
use crate::rng::SplitMix64;

/// Largest operator that may be materialized as a dense matrix.
pub const DENSE_LIMIT: usize = 4096;

/// Forward and adjoint application procedures of a matrix-free operator.
///
/// Both methods overwrite their output buffer, whose length is guaranteed by
/// the caller to match the codomain (resp. domain).
pub trait Operator: Send + Sync {
    fn forward(&self, x: &[f64], y: &mut [f64]);
    fn adjoint(&self, y: &[f64], x: &mut [f64]);
}

/// A bounded linear map between two finite-dimensional spaces.
#[derive(Clone)]
pub struct LinOp {
    domain: Space,
    codomain: Space,
    op: Arc<dyn Operator>,
    spec: OperatorSpec,
}

impl fmt::Debug for LinOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LinOp({}: {} -> {})", self.spec.name(), self.domain, self.codomain)
    }
}

/// Power-iteration estimate of the largest singular value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl LinOp {
    pub fn new(domain: Space, codomain: Space, op: Arc<dyn Operator>, spec: OperatorSpec) -> Self {
        Self {
            domain,
            codomain,
            op,
            spec,
        }
    }

    pub fn identity(space: &Space) -> LinOp {
        LinOp::new(
            space.clone(),
            space.clone(),
            Arc::new(IdentityOp),
            OperatorSpec::Identity {
                space: space.spec().clone(),
            },
        )
    }

    pub fn zero(domain: &Space, codomain: &Space) -> LinOp {
        LinOp::new(
            domain.clone(),
            codomain.clone(),
            Arc::new(ZeroOp),
            OperatorSpec::Zero {
                domain: domain.spec().clone(),
                codomain: codomain.spec().clone(),
            },
        )
    }

    pub fn dense(matrix: DMatrix<f64>, domain: &Space, codomain: &Space) -> Result<LinOp> {
        check_len("dense operator columns", domain.dim(), matrix.ncols())?;
        check_len("dense operator rows", codomain.dim(), matrix.nrows())?;
        let data = (0..matrix.nrows())
            .flat_map(|r| (0..matrix.ncols()).map(move |c| (r, c)))
            .map(|(r, c)| matrix[(r, c)])
            .collect();
        let spec = OperatorSpec::Dense {
            rows: matrix.nrows(),
            cols: matrix.ncols(),
            data,
            domain: Some(domain.spec().clone()),
            codomain: Some(codomain.spec().clone()),
        };
        Ok(LinOp::new(
            domain.clone(),
            codomain.clone(),
            Arc::new(DenseOp { matrix }),
            spec,
        ))
    }

    pub fn domain(&self) -> &Space {
        &self.domain
    }

    pub fn codomain(&self) -> &Space {
        &self.codomain
    }

    pub fn spec(&self) -> &OperatorSpec {
        &self.spec
    }

    /// `factor * self`.
    pub fn scaled(&self, factor: f64) -> LinOp {
        LinOp::new(
            self.domain.clone(),
            self.codomain.clone(),
            Arc::new(ScaledOp {
                factor,
                inner: self.clone(),
            }),
            OperatorSpec::Scale {
                factor,
                op: Box::new(self.spec.clone()),
            },
        )
    }

    /// `next ∘ self`: apply `self` first.
    pub fn then(&self, next: &LinOp) -> Result<LinOp> {
        LinOp::chain(&[self.clone(), next.clone()])
    }

    /// Composition applying `ops[0]` first.
    pub fn chain(ops: &[LinOp]) -> Result<LinOp> {
        if ops.is_empty() {
            return Err(Error::InvalidParameter("empty operator chain".into()));
        }
        for w in ops.windows(2) {
            if w[0].codomain != w[1].domain {
                return Err(Error::DimensionMismatch {
                    context: format!("chain {} -> {}", w[0].codomain, w[1].domain),
                    expected: w[1].domain.dim(),
                    got: w[0].codomain.dim(),
                });
            }
        }
        Ok(LinOp::new(
            ops[0].domain.clone(),
            ops[ops.len() - 1].codomain.clone(),
            Arc::new(ChainOp { ops: ops.to_vec() }),
            OperatorSpec::Chain {
                ops: ops.iter().map(|o| o.spec.clone()).collect(),
            },
        ))
    }

    /// `x -> (A_1 x, ..., A_k x)` into the product of the codomains.
    pub fn stack(ops: &[LinOp]) -> Result<LinOp> {
        if ops.is_empty() {
            return Err(Error::InvalidParameter("empty operator stack".into()));
        }
        for o in &ops[1..] {
            if o.domain != ops[0].domain {
                return Err(Error::DimensionMismatch {
                    context: "stacked operators must share a domain".into(),
                    expected: ops[0].domain.dim(),
                    got: o.domain.dim(),
                });
            }
        }
        let codomain = Space::product(&ops.iter().map(|o| o.codomain.clone()).collect::<Vec<_>>())?;
        Ok(LinOp::new(
            ops[0].domain.clone(),
            codomain,
            Arc::new(StackOp { ops: ops.to_vec() }),
            OperatorSpec::Stack {
                ops: ops.iter().map(|o| o.spec.clone()).collect(),
            },
        ))
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("operator input", self.domain.dim(), x.len())?;
        let mut y = vec![0.0; self.codomain.dim()];
        self.op.forward(x, &mut y);
        Ok(y)
    }

    pub fn adjoint_apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len("adjoint input", self.codomain.dim(), y.len())?;
        let mut x = vec![0.0; self.domain.dim()];
        self.op.adjoint(y, &mut x);
        Ok(x)
    }

    /// Unchecked forward application into a preallocated buffer.
    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.domain.dim());
        debug_assert_eq!(y.len(), self.codomain.dim());
        self.op.forward(x, y);
    }

    pub fn adjoint_into(&self, y: &[f64], x: &mut [f64]) {
        debug_assert_eq!(y.len(), self.codomain.dim());
        debug_assert_eq!(x.len(), self.domain.dim());
        self.op.adjoint(y, x);
    }

    /// `y += s * A x`.
    pub fn apply_add(&self, x: &[f64], s: f64, y: &mut [f64], scratch: &mut Vec<f64>) {
        scratch.resize(self.codomain.dim(), 0.0);
        self.op.forward(x, scratch);
        for (yi, si) in y.iter_mut().zip(scratch.iter()) {
            *yi += s * si;
        }
    }

    /// `x += s * A^T y`.
    pub fn adjoint_add(&self, y: &[f64], s: f64, x: &mut [f64], scratch: &mut Vec<f64>) {
        scratch.resize(self.domain.dim(), 0.0);
        self.op.adjoint(y, scratch);
        for (xi, si) in x.iter_mut().zip(scratch.iter()) {
            *xi += s * si;
        }
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let (m, n) = (self.codomain.dim(), self.domain.dim());
        if m > DENSE_LIMIT || n > DENSE_LIMIT {
            return Err(Error::TooLarge { rows: m, cols: n });
        }
        let mut a = DMatrix::zeros(m, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; m];
        for j in 0..n {
            e[j] = 1.0;
            self.op.forward(&e, &mut col);
            for i in 0..m {
                a[(i, j)] = col[i];
            }
            e[j] = 0.0;
        }
        Ok(a)
    }

    /// Largest singular value by power iteration on `A^T A` from a seeded
    /// Gaussian start. Stops when successive estimates agree to `1e-6`.
    pub fn operator_norm(&self, iters: usize, seed: u64) -> NormEstimate {
        if self.codomain.dim() == 0 {
            return NormEstimate {
                value: 0.0,
                converged: true,
                iterations: 0,
            };
        }
        let mut y = vec![0.0; self.codomain.dim()];
        power_iteration(self.domain.dim(), iters, seed, |x, z| {
            self.op.forward(x, &mut y);
            self.op.adjoint(&y, z);
        })
    }

    /// Largest relative violation of `<Ax, y> = <x, A^T y>` over random probes,
    /// normalized by `|x| |y| |A|`.
    pub fn adjoint_mismatch(&self, probes: usize, seed: u64) -> f64 {
        let mut rng = SplitMix64::new(seed);
        let opnorm = self.operator_norm(500, seed ^ 0x5eed).value.max(f64::MIN_POSITIVE);
        let mut worst: f64 = 0.0;
        let mut ax = vec![0.0; self.codomain.dim()];
        let mut aty = vec![0.0; self.domain.dim()];
        for _ in 0..probes {
            let x = rng.normal_vec(self.domain.dim());
            let y = rng.normal_vec(self.codomain.dim());
            self.op.forward(&x, &mut ax);
            self.op.adjoint(&y, &mut aty);
            let lhs = dot(&ax, &y);
            let rhs = dot(&x, &aty);
            let scale = norm(&x) * norm(&y) * opnorm;
            if scale > 0.0 {
                worst = worst.max((lhs - rhs).abs() / scale);
            }
        }
        worst
    }
}

/// Power iteration for `sqrt(lambda_max(M))` given the action of a symmetric
/// positive semi-definite `M = A^T A` on vectors of length `dim`.
pub fn power_iteration<F>(dim: usize, iters: usize, seed: u64, mut apply_ata: F) -> NormEstimate
where
    F: FnMut(&[f64], &mut [f64]),
{
    let mut rng = SplitMix64::new(seed);
    let mut x = rng.normal_vec(dim);
    let nx = norm(&x);
    if nx == 0.0 {
        return NormEstimate {
            value: 0.0,
            converged: true,
            iterations: 0,
        };
    }
    x.iter_mut().for_each(|v| *v /= nx);
    let mut z = vec![0.0; dim];
    let mut est = 0.0;
    for it in 1..=iters.max(1) {
        apply_ata(&x, &mut z);
        let lam = dot(&x, &z).max(0.0).sqrt();
        let nz = norm(&z);
        if nz == 0.0 {
            return NormEstimate {
                value: 0.0,
                converged: true,
                iterations: it,
            };
        }
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi = zi / nz;
        }
        if it > 1 && (lam - est).abs() <= 1e-6 * lam {
            return NormEstimate {
                value: lam,
                converged: true,
                iterations: it,
            };
        }
        est = lam;
    }
    NormEstimate {
        value: est,
        converged: false,
        iterations: iters,
    }
}

struct IdentityOp;

impl Operator for IdentityOp {
    fn forward(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
    fn adjoint(&self, y: &[f64], x: &mut [f64]) {
        x.copy_from_slice(y);
    }
}

struct ZeroOp;

impl Operator for ZeroOp {
    fn forward(&self, _x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
    }
    fn adjoint(&self, _y: &[f64], x: &mut [f64]) {
        x.fill(0.0);
    }
}

struct DenseOp {
    matrix: DMatrix<f64>,
}

impl Operator for DenseOp {
    fn forward(&self, x: &[f64], y: &mut [f64]) {
        let (m, n) = self.matrix.shape();
        for i in 0..m {
            let mut s = 0.0;
            for j in 0..n {
                s += self.matrix[(i, j)] * x[j];
            }
            y[i] = s;
        }
    }
    fn adjoint(&self, y: &[f64], x: &mut [f64]) {
        let (m, n) = self.matrix.shape();
        x.fill(0.0);
        for i in 0..m {
            let yi = y[i];
            for j in 0..n {
                x[j] += self.matrix[(i, j)] * yi;
            }
        }
    }
}

struct ScaledOp {
    factor: f64,
    inner: LinOp,
}

impl Operator for ScaledOp {
    fn forward(&self, x: &[f64], y: &mut [f64]) {
        self.inner.op.forward(x, y);
        y.iter_mut().for_each(|v| *v *= self.factor);
    }
    fn adjoint(&self, y: &[f64], x: &mut [f64]) {
        self.inner.op.adjoint(y, x);
        x.iter_mut().for_each(|v| *v *= self.factor);
    }
}

struct ChainOp {
    ops: Vec<LinOp>,
}

impl Operator for ChainOp {
    fn forward(&self, x: &[f64], y: &mut [f64]) {
        let mut cur = x.to_vec();
        for (k, op) in self.ops.iter().enumerate() {
            if k + 1 == self.ops.len() {
                op.op.forward(&cur, y);
            } else {
                let mut next = vec![0.0; op.codomain.dim()];
                op.op.forward(&cur, &mut next);
                cur = next;
            }
        }
    }
    fn adjoint(&self, y: &[f64], x: &mut [f64]) {
        let mut cur = y.to_vec();
        for (k, op) in self.ops.iter().enumerate().rev() {
            if k == 0 {
                op.op.adjoint(&cur, x);
            } else {
                let mut next = vec![0.0; op.domain.dim()];
                op.op.adjoint(&cur, &mut next);
                cur = next;
            }
        }
    }
}

struct StackOp {
    ops: Vec<LinOp>,
}

impl Operator for StackOp {
    fn forward(&self, x: &[f64], y: &mut [f64]) {
        let mut off = 0;
        for op in &self.ops {
            let m = op.codomain.dim();
            op.op.forward(x, &mut y[off..off + m]);
            off += m;
        }
    }
    fn adjoint(&self, y: &[f64], x: &mut [f64]) {
        x.fill(0.0);
        let mut tmp = vec![0.0; x.len()];
        let mut off = 0;
        for op in &self.ops {
            let m = op.codomain.dim();
            op.op.adjoint(&y[off..off + m], &mut tmp);
            for (xi, ti) in x.iter_mut().zip(&tmp) {
                *xi += ti;
            }
            off += m;
        }
    }
}
