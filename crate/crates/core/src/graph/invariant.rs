use nalgebra::DMatrix;

use super::RegGraph;
use crate::error::{check_len, Result};
use crate::linalg::{analyze_matrix, full_svd, orthonormal_span, pseudo_inverse, KERNEL_TOL};

/// Residual threshold deciding membership of `L^e` vectors in `rg(Theta_e)`.
const RANGE_TOL: f64 = 1e-8;

/// Invariant subspaces of all subgraphs together with the edge preimages
/// `M^e` and projections `P^e`.
#[derive(Clone, Debug)]
pub struct InvariantSubspace {
    /// Orthonormal basis of `L` at the root.
    pub basis_l: DMatrix<f64>,
    /// Orthonormal basis of `L` for the subgraph rooted at each node.
    pub node_l: Vec<DMatrix<f64>>,
    /// Orthonormal basis of `M^e` per edge.
    pub edge_m: Vec<DMatrix<f64>>,
    /// Projection `P^e` onto `M^e` per edge.
    pub projectors: Vec<DMatrix<f64>>,
}

impl InvariantSubspace {
    pub fn dim(&self) -> usize {
        self.basis_l.ncols()
    }

    pub fn project_edge(&self, e: usize, w: &[f64]) -> Vec<f64> {
        let p = &self.projectors[e];
        (0..p.nrows())
            .map(|i| (0..p.ncols()).map(|j| p[(i, j)] * w[j]).sum())
            .collect()
    }
}

/// Bottom-up computation of the invariant subspace for weights `alpha`.
pub fn invariant_subspace(g: &RegGraph, alpha: &[f64]) -> Result<InvariantSubspace> {
    check_len("edge weights", g.n_edges(), alpha.len())?;
    let mut node_l: Vec<DMatrix<f64>> = g.nodes().iter().map(|n| DMatrix::zeros(n.space.dim(), 0)).collect();
    let mut edge_m: Vec<DMatrix<f64>> = vec![DMatrix::zeros(0, 0); g.n_edges()];
    let mut projectors: Vec<DMatrix<f64>> = vec![DMatrix::zeros(0, 0); g.n_edges()];
    for &v in g.order().iter().rev() {
        let mut spans: Vec<DMatrix<f64>> = Vec::new();
        for &e in g.child_edges(v) {
            let edge = g.edge(e);
            let theta = edge.theta.to_dense()?;
            let an = analyze_matrix(&theta, KERNEL_TOL);
            let pinv = pseudo_inverse(&theta, KERNEL_TOL);
            let b = &node_l[edge.head];
            let s = range_intersection(&an.range_basis, b);
            let kernel = &an.kernel_basis;
            let lifts = &pinv * &s;
            let p = &pinv * (&s * s.transpose()) * &theta + kernel * kernel.transpose();
            let mut cols = DMatrix::zeros(theta.ncols(), kernel.ncols() + lifts.ncols());
            cols.columns_mut(0, kernel.ncols()).copy_from(kernel);
            cols.columns_mut(kernel.ncols(), lifts.ncols()).copy_from(&lifts);
            let m = orthonormal_span(&cols, KERNEL_TOL);
            if alpha[e] > 0.0 && m.ncols() > 0 {
                spans.push(edge.phi.to_dense()? * &m);
            }
            edge_m[e] = m;
            projectors[e] = p;
        }
        let dim = g.node(v).space.dim();
        let total: usize = spans.iter().map(|s| s.ncols()).sum();
        let mut all = DMatrix::zeros(dim, total);
        let mut c = 0;
        for s in &spans {
            all.columns_mut(c, s.ncols()).copy_from(s);
            c += s.ncols();
        }
        node_l[v] = orthonormal_span(&all, KERNEL_TOL);
    }
    Ok(InvariantSubspace {
        basis_l: node_l[g.root()].clone(),
        node_l,
        edge_m,
        projectors,
    })
}

/// Orthonormal basis of `rg ∩ span(b)` for orthonormal `rg` and `b`.
fn range_intersection(rg: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let m = b.nrows();
    if b.ncols() == 0 || rg.ncols() == 0 {
        return DMatrix::zeros(m, 0);
    }
    let off = b - rg * (rg.transpose() * b);
    let svd = full_svd(&off);
    let r = b.ncols();
    let mut coeffs = Vec::new();
    for k in 0..r {
        let s = svd.s.get(k).copied().unwrap_or(0.0);
        if s <= RANGE_TOL {
            coeffs.push(svd.v.column(k).into_owned());
        }
    }
    if coeffs.is_empty() {
        return DMatrix::zeros(m, 0);
    }
    let c = DMatrix::from_columns(&coeffs);
    orthonormal_span(&(b * c), KERNEL_TOL)
}
