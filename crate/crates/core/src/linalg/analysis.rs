use nalgebra::{DMatrix, DVector};

use super::op::LinOp;
use crate::error::Result;

/// Default relative threshold below which singular values count as zero.
pub const KERNEL_TOL: f64 = 1e-10;

/// Spectral summary of a dense-realizable operator.
#[derive(Clone, Debug)]
pub struct OperatorAnalysis {
    /// Orthonormal columns spanning the kernel.
    pub kernel_basis: DMatrix<f64>,
    pub rank: usize,
    pub sigma_max: f64,
    /// `None` for the zero operator.
    pub sigma_min_nonzero: Option<f64>,
    pub poincare_c: Option<f64>,
    pub kernel_projector: DMatrix<f64>,
    /// Orthonormal columns spanning the range.
    pub range_basis: DMatrix<f64>,
}

impl OperatorAnalysis {
    pub fn kernel_dim(&self) -> usize {
        self.kernel_basis.ncols()
    }

    pub fn project_kernel(&self, w: &[f64]) -> Vec<f64> {
        let v = &self.kernel_projector * DVector::from_column_slice(w);
        v.iter().copied().collect()
    }
}

/// Full singular value decomposition `A = U diag(s) V^T` with square `U`, `V`.
pub(crate) struct FullSvd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub(crate) fn full_svd(a: &DMatrix<f64>) -> FullSvd {
    let (m, n) = a.shape();
    let p = m.max(n).max(1);
    // pad to a square matrix so that nalgebra returns complete bases
    let mut sq = DMatrix::zeros(p, p);
    sq.view_mut((0, 0), (m, n)).copy_from(a);
    let svd = sq.svd(true, true);
    let u_full = svd.u.expect("requested U");
    let vt_full = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let mut u = DMatrix::zeros(m, m);
    let mut v = DMatrix::zeros(n, n);
    let mut s = Vec::new();
    // U columns: the first m rows of padded U restricted to the row space
    let mut ucols = Vec::new();
    let mut vcols = Vec::new();
    for &k in &order {
        s.push(svd.singular_values[k]);
        ucols.push(u_full.column(k).rows(0, m).into_owned());
        vcols.push(vt_full.row(k).columns(0, n).transpose());
    }
    s.truncate(m.min(n));
    // padded bases carry zero blocks; re-orthonormalize the leading parts
    let uo = orthonormal_columns(&ucols, m);
    let vo = orthonormal_columns(&vcols, n);
    for (j, c) in uo.iter().enumerate().take(m) {
        u.set_column(j, c);
    }
    for (j, c) in vo.iter().enumerate().take(n) {
        v.set_column(j, c);
    }
    FullSvd { u, s, v }
}

/// Gram-Schmidt (twice) over the given columns, skipping dependent ones,
/// until `dim` columns are collected.
fn orthonormal_columns(cols: &[DVector<f64>], dim: usize) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(dim);
    for c in cols {
        if out.len() == dim {
            break;
        }
        let mut v = c.clone();
        for _ in 0..2 {
            for q in &out {
                let d = q.dot(&v);
                v.axpy(-d, q, 1.0);
            }
        }
        let nv = v.norm();
        if nv > 1e-8 {
            out.push(v / nv);
        }
    }
    out
}

/// Kernel, range, rank and Poincaré constant of a dense matrix.
pub fn analyze_matrix(a: &DMatrix<f64>, tol: f64) -> OperatorAnalysis {
    let (m, n) = a.shape();
    let svd = full_svd(a);
    let sigma_max = svd.s.first().copied().unwrap_or(0.0);
    let cut = tol * sigma_max;
    let rank = if sigma_max == 0.0 {
        0
    } else {
        svd.s.iter().filter(|&&s| s > cut).count()
    };
    let kernel_basis = svd.v.columns(rank, n - rank).into_owned();
    let range_basis = svd.u.columns(0, rank).into_owned();
    let kernel_projector = &kernel_basis * kernel_basis.transpose();
    let sigma_min_nonzero = (rank > 0).then(|| svd.s[rank - 1]);
    let _ = m;
    OperatorAnalysis {
        kernel_basis,
        rank,
        sigma_max,
        sigma_min_nonzero,
        poincare_c: sigma_min_nonzero.map(|s| 1.0 / s),
        kernel_projector,
        range_basis,
    }
}

/// SVD-based analysis; refuses operators above the dense limit.
pub fn analyze(op: &LinOp, tol: f64) -> Result<OperatorAnalysis> {
    Ok(analyze_matrix(&op.to_dense()?, tol))
}

/// Orthonormal basis of the span of the given columns (rank tolerance
/// relative to the largest singular value).
pub fn orthonormal_span(cols: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    if cols.ncols() == 0 {
        return DMatrix::zeros(cols.nrows(), 0);
    }
    let an = analyze_matrix(cols, tol);
    an.range_basis
}

/// Moore-Penrose pseudo-inverse with the same rank rule as [`analyze`].
pub fn pseudo_inverse(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let (m, n) = a.shape();
    let svd = full_svd(a);
    let smax = svd.s.first().copied().unwrap_or(0.0);
    let mut pinv = DMatrix::zeros(n, m);
    if smax == 0.0 {
        return pinv;
    }
    for (k, &s) in svd.s.iter().enumerate() {
        if s > tol * smax {
            pinv += svd.v.column(k) * svd.u.column(k).transpose() / s;
        }
    }
    pinv
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_of_difference_row() {
        let a = DMatrix::from_row_slice(1, 2, &[-1.0, 1.0]);
        let an = analyze_matrix(&a, KERNEL_TOL);
        assert_eq!(an.rank, 1);
        assert_eq!(an.kernel_dim(), 1);
        assert!((an.poincare_c.unwrap() - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        let k = an.kernel_basis.column(0);
        assert!((k[0] - k[1]).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_has_no_poincare_constant() {
        let an = analyze_matrix(&DMatrix::zeros(3, 2), KERNEL_TOL);
        assert_eq!(an.rank, 0);
        assert!(an.poincare_c.is_none());
        assert_eq!(an.kernel_dim(), 2);
    }

    #[test]
    fn wide_and_tall_bases_are_complete() {
        let a = DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
        let an = analyze_matrix(&a, KERNEL_TOL);
        assert_eq!(an.kernel_dim(), 2);
        assert!((&a * &an.kernel_basis).norm() < 1e-12);
        let at = a.transpose();
        let an2 = analyze_matrix(&at, KERNEL_TOL);
        assert_eq!(an2.kernel_dim(), 0);
        assert_eq!(an2.range_basis.ncols(), 2);
        let p = pseudo_inverse(&a, KERNEL_TOL);
        assert!((&a * &p * &a - &a).norm() < 1e-12);
    }
}
