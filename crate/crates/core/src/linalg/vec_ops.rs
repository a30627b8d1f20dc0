//! Small dense vector helpers and a matrix-free conjugate gradient.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| s * x).collect()
}

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
}

/// Conjugate gradient for a symmetric positive semi-definite operator.
///
/// Converges when `|b - A x| <= tol * max(|b|, tiny)`. Singular but
/// consistent systems are fine: iterates stay in the Krylov space of `b`.
pub fn conjugate_gradient<F>(apply: F, b: &[f64], x0: Option<&[f64]>, tol: f64, max_iter: usize) -> CgOutcome
where
    F: Fn(&[f64], &mut [f64]),
{
    conjugate_gradient_floor(apply, b, x0, tol, 0.0, max_iter)
}

/// [`conjugate_gradient`] that also stops once `|b - A x| <= floor`.
///
/// On singular systems a tiny right-hand side otherwise drives the
/// iteration into rounding noise along the kernel.
pub fn conjugate_gradient_floor<F>(
    apply: F,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    floor: f64,
    max_iter: usize,
) -> CgOutcome
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let mut ap = vec![0.0; n];
    apply(&x, &mut ap);
    let mut r: Vec<f64> = b.iter().zip(&ap).map(|(bi, ai)| bi - ai).collect();
    let bnorm = norm(b);
    let target = (tol * bnorm.max(1e-300)).max(floor);
    let mut rr = dot(&r, &r);
    if rr.sqrt() <= target || bnorm == 0.0 {
        if bnorm == 0.0 {
            x.fill(0.0);
            rr = 0.0;
        }
        return CgOutcome {
            x,
            converged: true,
            iterations: 0,
            residual: rr.sqrt(),
        };
    }
    let mut p = r.clone();
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return CgOutcome {
                x,
                converged: rr.sqrt() <= target,
                iterations: it,
                residual: rr.sqrt(),
            };
        }
        let a = rr / pap;
        axpy(a, &p, &mut x);
        axpy(-a, &ap, &mut r);
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= target {
            return CgOutcome {
                x,
                converged: true,
                iterations: it,
                residual: rr_new.sqrt(),
            };
        }
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }
    CgOutcome {
        x,
        converged: false,
        iterations: max_iter,
        residual: rr.sqrt(),
    }
}
