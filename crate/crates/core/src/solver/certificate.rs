//! Feasible primal and dual points built from PDHG iterates.
//!
//! Primal: ball constraints on identity terms are enforced by projection, then
//! the `I_{0}` rows are restored by a minimal-norm correction.
//! Dual: least-squares projection onto `ker A^T`, then scaling into the
//! conjugate domains.

use std::cell::RefCell;

use super::Layout;
use crate::functionals::FunctionalKind;
use crate::library::OperatorSpec;
use crate::linalg::vec_ops::{conjugate_gradient_floor, dot, norm};

const CG_TOL: f64 = 1e-12;
const CG_MAX: usize = 2000;
const PROJ_TOL: f64 = 1e-10;
const PROJ_MAX: usize = 500;
/// Accepted `|A^T y| / (|A| |y|)` for a dual point.
const KER_TOL: f64 = 1e-9;
/// Allowed relative violation of restored equality constraints.
const FEAS_TOL: f64 = 1e-9;

pub(crate) struct Certificate {
    /// Best (smallest) primal value so far.
    pub primal: f64,
    /// Best (largest) dual value so far.
    pub dual: f64,
    pub best_x: Vec<f64>,
    pub best_y: Vec<f64>,
    pub reliable: bool,
    /// `(block, segment, coeff)` of single-term identity ball blocks.
    balls: Vec<(usize, usize, f64)>,
    frozen: Vec<bool>,
    constraints: Vec<usize>,
    lipschitz: f64,
}

impl Certificate {
    pub fn new(lay: &Layout<'_>, lipschitz: f64) -> Certificate {
        let spec = lay.spec;
        let mut balls = Vec::new();
        let mut frozen = vec![false; spec.segments.len()];
        let mut constraints = Vec::new();
        for (j, b) in spec.blocks.iter().enumerate() {
            match b.functional.kind() {
                FunctionalKind::IndicatorZero => constraints.push(j),
                FunctionalKind::IndicatorBall { .. } => {
                    if let [t] = b.terms.as_slice() {
                        let ident = matches!(t.op.spec(), OperatorSpec::Identity { .. });
                        let shared = spec
                            .blocks
                            .iter()
                            .enumerate()
                            .any(|(k, o)| k != j && o.terms.iter().any(|s| s.segment == t.segment) && !is_constraint(o));
                        if ident && t.coeff != 0.0 && !shared && !frozen[t.segment] && b.offset.iter().all(|c| *c == 0.0) {
                            frozen[t.segment] = true;
                            balls.push((j, t.segment, t.coeff));
                        }
                    }
                }
                _ => {}
            }
        }
        Certificate {
            primal: f64::INFINITY,
            dual: f64::NEG_INFINITY,
            best_x: Vec::new(),
            best_y: Vec::new(),
            reliable: true,
            balls,
            frozen,
            constraints,
            lipschitz,
        }
    }

    pub fn gap(&self) -> f64 {
        if self.primal.is_finite() && self.dual.is_finite() {
            self.primal - self.dual
        } else {
            f64::INFINITY
        }
    }

    pub fn update(&mut self, lay: &Layout<'_>, x: &[f64], y: &[f64]) {
        let (p, xc) = self.primal_point(lay, x);
        let mut candidates = vec![self.dual_point(lay, y.to_vec())];
        if p.is_finite() && !self.constraints.is_empty() {
            let hinted = self.subgradient_dual(lay, &xc, y);
            candidates.push(self.dual_point(lay, hinted));
        }
        if p < self.primal || self.best_x.is_empty() {
            if p < self.primal {
                self.primal = p;
            }
            self.best_x = xc;
        }
        for (d, yc, ok) in candidates {
            if d > self.dual || self.best_y.is_empty() {
                if d > self.dual {
                    self.dual = d;
                    self.reliable = ok;
                }
                self.best_y = yc;
            }
        }
    }

    /// Dual guess from subgradients at the primal point `xc`, with the `I_{0}`
    /// blocks re-solved to cancel as much of `A^T y` as they can.
    fn subgradient_dual(&self, lay: &Layout<'_>, xc: &[f64], y: &[f64]) -> Vec<f64> {
        let spec = lay.spec;
        let ny = lay.ny();
        let scratch = RefCell::new(Vec::new());
        let mut ax = vec![0.0; ny];
        lay.apply(xc, &mut ax, &mut scratch.borrow_mut());
        let mut hint = y.to_vec();
        for (j, b) in spec.blocks.iter().enumerate() {
            if is_constraint(b) {
                continue;
            }
            let z: Vec<f64> = lay.block(j, &ax).iter().zip(&b.offset).map(|(a, c)| a + c).collect();
            let g = b.functional.subgradient(&z, lay.block(j, y));
            hint[lay.blk_off[j]..lay.blk_off[j + 1]].copy_from_slice(&g);
        }
        let mask = |v: &mut [f64]| {
            for (j, b) in spec.blocks.iter().enumerate() {
                if !is_constraint(b) {
                    v[lay.blk_off[j]..lay.blk_off[j + 1]].fill(0.0);
                }
            }
        };
        let nx = lay.nx();
        let mut rhs = vec![0.0; nx];
        lay.adjoint(&hint, &mut rhs, &mut scratch.borrow_mut());
        let mut b = vec![0.0; ny];
        lay.apply(&rhs, &mut b, &mut scratch.borrow_mut());
        mask(&mut b);
        let tmp = RefCell::new((vec![0.0; ny], vec![0.0; nx]));
        let scale = self.lipschitz * norm(&hint);
        let cg = conjugate_gradient_floor(
            |z, out| {
                let mut s = scratch.borrow_mut();
                let mut t = tmp.borrow_mut();
                let (zm, back) = &mut *t;
                zm.copy_from_slice(z);
                mask(zm);
                lay.adjoint(zm, back, &mut s);
                lay.apply(back, out, &mut s);
                mask(out);
            },
            &b,
            None,
            PROJ_TOL,
            1e-3 * KER_TOL * scale,
            PROJ_MAX,
        );
        for (h, d) in hint.iter_mut().zip(&cg.x) {
            *h -= d;
        }
        hint
    }

    fn primal_point(&mut self, lay: &Layout<'_>, x: &[f64]) -> (f64, Vec<f64>) {
        let spec = lay.spec;
        let mut xc = x.to_vec();
        for &(j, s, coeff) in &self.balls {
            let seg = &mut xc[lay.seg_off[s]..lay.seg_off[s + 1]];
            seg.iter_mut().for_each(|v| *v *= coeff);
            spec.blocks[j].functional.prox_in_place(seg, 1.0);
            seg.iter_mut().for_each(|v| *v /= coeff);
        }
        if !self.constraints.is_empty() && !self.restore_constraints(lay, &mut xc) {
            return (f64::INFINITY, xc);
        }
        let mut ax = vec![0.0; lay.ny()];
        let mut scratch = Vec::new();
        lay.apply(&xc, &mut ax, &mut scratch);
        let mut val = 0.0;
        for (j, b) in spec.blocks.iter().enumerate() {
            if is_constraint(b) {
                continue;
            }
            let v: Vec<f64> = lay.block(j, &ax).iter().zip(&b.offset).map(|(a, c)| a + c).collect();
            val += b.functional.eval_unchecked(&v);
        }
        (val, xc)
    }

    /// Minimal-norm change of the unfrozen segments making every `I_{0}` row
    /// vanish. Returns false if the rows cannot be satisfied.
    fn restore_constraints(&mut self, lay: &Layout<'_>, xc: &mut [f64]) -> bool {
        let spec = lay.spec;
        let rows = &self.constraints;
        let dims: Vec<usize> = rows.iter().map(|&j| lay.blk_off[j + 1] - lay.blk_off[j]).collect();
        let mut roff = vec![0];
        for d in &dims {
            roff.push(roff.last().unwrap() + d);
        }
        let m = *roff.last().unwrap();
        let frozen = &self.frozen;
        let scratch = RefCell::new(Vec::new());
        // C x restricted to constraint rows, and M C^T with frozen segments masked
        let apply_c = |x: &[f64], out: &mut [f64]| {
            let mut s = scratch.borrow_mut();
            out.fill(0.0);
            for (r, &j) in rows.iter().enumerate() {
                let o = &mut out[roff[r]..roff[r + 1]];
                for t in &spec.blocks[j].terms {
                    t.op.apply_add(&x[lay.seg_off[t.segment]..lay.seg_off[t.segment + 1]], t.coeff, o, &mut s);
                }
            }
        };
        let adjoint_c = |z: &[f64], out: &mut [f64]| {
            let mut s = scratch.borrow_mut();
            out.fill(0.0);
            for (r, &j) in rows.iter().enumerate() {
                for t in &spec.blocks[j].terms {
                    if frozen[t.segment] {
                        continue;
                    }
                    let o = &mut out[lay.seg_off[t.segment]..lay.seg_off[t.segment + 1]];
                    t.op.adjoint_add(&z[roff[r]..roff[r + 1]], t.coeff, o, &mut s);
                }
            }
        };
        let nx = lay.nx();
        let mut cx = vec![0.0; m];
        apply_c(xc, &mut cx);
        let offs: Vec<f64> = rows.iter().flat_map(|&j| spec.blocks[j].offset.iter().copied()).collect();
        let rhs: Vec<f64> = cx.iter().zip(&offs).map(|(a, c)| -(a + c)).collect();
        // the normal-equation residual is the remaining constraint violation
        let bound = FEAS_TOL * (1.0 + norm(&offs) + norm(xc));
        if norm(&rhs) <= bound {
            return true;
        }
        let tmp = RefCell::new(vec![0.0; nx]);
        let cg = conjugate_gradient_floor(
            |z, out| {
                let mut t = tmp.borrow_mut();
                adjoint_c(z, &mut t);
                apply_c(&t, out);
            },
            &rhs,
            None,
            CG_TOL,
            1e-3 * bound,
            CG_MAX,
        );
        let mut dx = vec![0.0; nx];
        adjoint_c(&cg.x, &mut dx);
        for (a, b) in xc.iter_mut().zip(&dx) {
            *a += b;
        }
        apply_c(xc, &mut cx);
        let res: Vec<f64> = cx.iter().zip(&offs).map(|(a, c)| a + c).collect();
        norm(&res) <= FEAS_TOL * (1.0 + norm(&offs) + norm(xc))
    }

    fn dual_point(&self, lay: &Layout<'_>, y: Vec<f64>) -> (f64, Vec<f64>, bool) {
        let spec = lay.spec;
        let nx = lay.nx();
        let scratch = RefCell::new(Vec::new());
        let tmp = RefCell::new(vec![0.0; lay.ny()]);
        let mut rhs = vec![0.0; nx];
        lay.adjoint(&y, &mut rhs, &mut scratch.borrow_mut());
        // the normal-equation residual equals A^T of the projected point
        let scale = self.lipschitz * norm(&y);
        let cg = conjugate_gradient_floor(
            |z, out| {
                let mut s = scratch.borrow_mut();
                let mut t = tmp.borrow_mut();
                lay.apply(z, &mut t, &mut s);
                lay.adjoint(&t, out, &mut s);
            },
            &rhs,
            None,
            PROJ_TOL,
            1e-3 * KER_TOL * scale,
            PROJ_MAX,
        );
        let mut az = vec![0.0; lay.ny()];
        lay.apply(&cg.x, &mut az, &mut scratch.borrow_mut());
        let mut yc: Vec<f64> = y.iter().zip(&az).map(|(a, b)| a - b).collect();
        let mut aty = vec![0.0; nx];
        lay.adjoint(&yc, &mut aty, &mut scratch.borrow_mut());
        if norm(&aty) > KER_TOL * scale.max(1e-300) {
            return (f64::NEG_INFINITY, yc, false);
        }
        let mut t: f64 = 1.0;
        for (j, b) in spec.blocks.iter().enumerate() {
            t = t.min(b.functional.conjugate_domain_scale(lay.block(j, &yc)));
        }
        yc.iter_mut().for_each(|v| *v *= t);
        let mut d = 0.0;
        for (j, b) in spec.blocks.iter().enumerate() {
            let yj = lay.block(j, &yc);
            d += dot(&b.offset, yj) - b.functional.conjugate_unchecked(yj);
        }
        (d, yc, true)
    }
}

fn is_constraint(b: &crate::assembly::DualBlock) -> bool {
    matches!(b.functional.kind(), FunctionalKind::IndicatorZero)
}
