//! Convex node functionals: values, proximal maps and conjugates.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::Space;

/// Feasibility slack used when evaluating indicator functions.
pub const INDICATOR_TOL: f64 = 1e-9;

fn one() -> f64 {
    1.0
}

/// Functional kind and parameters, independent of the space it acts on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionalKind {
    IndicatorZero,
    /// `weight * sum_g |v_g|` over pointwise channel groups.
    GroupL1 {
        #[serde(default = "one")]
        weight: f64,
    },
    /// `sum_i beta[c(i)] |v_i|` with one weight per channel.
    GroupL1Aniso { weights: Vec<f64> },
    /// `(weight / q) sum_i |v_i|^q`.
    LqNorm {
        q: f64,
        #[serde(default = "one")]
        weight: f64,
    },
    /// `(weight / 2) |v|^2`.
    HalfSquaredL2 {
        #[serde(default = "one")]
        weight: f64,
    },
    /// Indicator of `{ |v_g| <= radius_g }`; a single radius is broadcast.
    IndicatorBall { radius: Vec<f64> },
    /// `f(v_1) + g(v_2)` on a two-factor product space.
    CompositeFg {
        f: Box<FunctionalKind>,
        g: Box<FunctionalKind>,
    },
    Zero,
}

impl FunctionalKind {
    pub fn name(&self) -> &'static str {
        match self {
            FunctionalKind::IndicatorZero => "indicator-zero",
            FunctionalKind::GroupL1 { .. } => "group-l1",
            FunctionalKind::GroupL1Aniso { .. } => "group-l1-aniso",
            FunctionalKind::LqNorm { .. } => "lq-norm",
            FunctionalKind::HalfSquaredL2 { .. } => "half-squared-l2",
            FunctionalKind::IndicatorBall { .. } => "indicator-ball",
            FunctionalKind::CompositeFg { .. } => "composite-fg",
            FunctionalKind::Zero => "zero",
        }
    }

    /// `s * Psi` for `s > 0`, expressed in the same family.
    pub fn scaled(&self, s: f64) -> FunctionalKind {
        use FunctionalKind::*;
        match self {
            IndicatorZero => IndicatorZero,
            GroupL1 { weight } => GroupL1 { weight: weight * s },
            GroupL1Aniso { weights } => GroupL1Aniso {
                weights: weights.iter().map(|w| w * s).collect(),
            },
            LqNorm { q, weight } => LqNorm { q: *q, weight: weight * s },
            HalfSquaredL2 { weight } => HalfSquaredL2 { weight: weight * s },
            IndicatorBall { radius } => IndicatorBall { radius: radius.clone() },
            CompositeFg { f, g } => CompositeFg {
                f: Box::new(f.scaled(s)),
                g: Box::new(g.scaled(s)),
            },
            Zero => Zero,
        }
    }

    /// Whether `Psi(t v) = t Psi(v)` for `t >= 0`.
    pub fn is_one_homogeneous(&self) -> bool {
        match self {
            FunctionalKind::IndicatorZero
            | FunctionalKind::GroupL1 { .. }
            | FunctionalKind::GroupL1Aniso { .. }
            | FunctionalKind::Zero => true,
            FunctionalKind::CompositeFg { f, g } => f.is_one_homogeneous() && g.is_one_homogeneous(),
            _ => false,
        }
    }
}

/// A functional bound to the space it acts on.
#[derive(Clone, Debug)]
pub struct NodeFunctional {
    kind: FunctionalKind,
    domain: Space,
    parts: Vec<NodeFunctional>,
}

impl NodeFunctional {
    pub fn new(kind: FunctionalKind, domain: &Space) -> Result<NodeFunctional> {
        let positive = |w: f64, what: &str| -> Result<()> {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidParameter(format!("{what} must be positive and finite, got {w}")));
            }
            Ok(())
        };
        let mut parts = Vec::new();
        match &kind {
            FunctionalKind::GroupL1 { weight } => positive(*weight, "group-l1 weight")?,
            FunctionalKind::HalfSquaredL2 { weight } => positive(*weight, "half-squared-l2 weight")?,
            FunctionalKind::LqNorm { q, weight } => {
                positive(*weight, "lq-norm weight")?;
                if !(q.is_finite() && *q > 1.0) {
                    return Err(Error::InvalidParameter(format!("lq-norm needs q in (1, inf), got {q}")));
                }
            }
            FunctionalKind::GroupL1Aniso { weights } => {
                check_len("group-l1-aniso channel weights", domain.n_channels(), weights.len())?;
                for w in weights {
                    positive(*w, "group-l1-aniso weight")?;
                }
            }
            FunctionalKind::IndicatorBall { radius } => {
                if radius.len() != 1 && radius.len() != domain.n_groups() {
                    return Err(Error::DimensionMismatch {
                        context: "indicator-ball radius field".into(),
                        expected: domain.n_groups(),
                        got: radius.len(),
                    });
                }
                if radius.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
                    return Err(Error::InvalidParameter("indicator-ball radii must be >= 0".into()));
                }
            }
            FunctionalKind::CompositeFg { f, g } => {
                if domain.parts().len() != 2 {
                    return Err(Error::InvalidParameter(
                        "composite-fg acts on a two-factor product space".into(),
                    ));
                }
                for (k, sub) in [f, g].into_iter().enumerate() {
                    if !matches!(
                        **sub,
                        FunctionalKind::GroupL1 { .. } | FunctionalKind::LqNorm { .. } | FunctionalKind::HalfSquaredL2 { .. }
                    ) {
                        return Err(Error::InvalidParameter(format!(
                            "composite-fg factors must be group-l1, lq-norm or half-squared-l2, got {}",
                            sub.name()
                        )));
                    }
                    parts.push(NodeFunctional::new((**sub).clone(), &domain.parts()[k].1)?);
                }
            }
            FunctionalKind::IndicatorZero | FunctionalKind::Zero => {}
        }
        Ok(NodeFunctional {
            kind,
            domain: domain.clone(),
            parts,
        })
    }

    pub fn kind(&self) -> &FunctionalKind {
        &self.kind
    }

    pub fn domain(&self) -> &Space {
        &self.domain
    }

    pub fn scaled(&self, s: f64) -> Result<NodeFunctional> {
        NodeFunctional::new(self.kind.scaled(s), &self.domain)
    }

    pub fn is_indicator_zero(&self) -> bool {
        matches!(self.kind, FunctionalKind::IndicatorZero)
    }

    fn radius(&self, g: usize) -> f64 {
        match &self.kind {
            FunctionalKind::IndicatorBall { radius } if radius.len() == 1 => radius[0],
            FunctionalKind::IndicatorBall { radius } => radius[g],
            _ => unreachable!(),
        }
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        check_len(self.kind.name(), self.domain.dim(), v.len())
    }

    fn split<'a>(&self, v: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        v.split_at(self.domain.parts()[1].0)
    }

    pub fn eval(&self, v: &[f64]) -> Result<f64> {
        self.check(v)?;
        Ok(self.eval_unchecked(v))
    }

    pub(crate) fn eval_unchecked(&self, v: &[f64]) -> f64 {
        use FunctionalKind::*;
        match &self.kind {
            IndicatorZero => {
                if v.iter().all(|x| x.abs() <= INDICATOR_TOL) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            GroupL1 { weight } => weight * self.domain.groups().map(|g| group_norm(v, g)).sum::<f64>(),
            GroupL1Aniso { weights } => v
                .iter()
                .enumerate()
                .map(|(i, x)| weights[self.domain.channel_of(i)] * x.abs())
                .sum(),
            LqNorm { q, weight } => weight / q * v.iter().map(|x| x.abs().powf(*q)).sum::<f64>(),
            HalfSquaredL2 { weight } => 0.5 * weight * v.iter().map(|x| x * x).sum::<f64>(),
            IndicatorBall { .. } => {
                for (gi, g) in self.domain.groups().enumerate() {
                    let r = self.radius(gi);
                    if group_norm(v, g) > r + INDICATOR_TOL * (1.0 + r) {
                        return f64::INFINITY;
                    }
                }
                0.0
            }
            CompositeFg { .. } => {
                let (a, b) = self.split(v);
                self.parts[0].eval_unchecked(a) + self.parts[1].eval_unchecked(b)
            }
            Zero => 0.0,
        }
    }

    /// `argmin_z 1/2 |z - v|^2 + tau Psi(z)`.
    pub fn prox(&self, v: &[f64], tau: f64) -> Result<Vec<f64>> {
        self.check(v)?;
        let mut out = v.to_vec();
        self.prox_in_place(&mut out, tau);
        Ok(out)
    }

    pub(crate) fn prox_in_place(&self, v: &mut [f64], tau: f64) {
        use FunctionalKind::*;
        match &self.kind {
            IndicatorZero => v.fill(0.0),
            GroupL1 { weight } => {
                for g in self.domain.groups() {
                    shrink_group(v, g, tau * weight);
                }
            }
            GroupL1Aniso { weights } => {
                for i in 0..v.len() {
                    let t = tau * weights[self.domain.channel_of(i)];
                    v[i] = v[i].signum() * (v[i].abs() - t).max(0.0);
                }
            }
            LqNorm { q, weight } => {
                for x in v.iter_mut() {
                    *x = lq_prox_scalar(*x, tau * weight, *q);
                }
            }
            HalfSquaredL2 { weight } => {
                let s = 1.0 / (1.0 + tau * weight);
                v.iter_mut().for_each(|x| *x *= s);
            }
            IndicatorBall { .. } => {
                for gi in 0..self.domain.n_groups() {
                    let r = self.radius(gi);
                    project_group(v, self.domain.group(gi), r);
                }
            }
            CompositeFg { .. } => {
                let off = self.domain.parts()[1].0;
                let (a, b) = v.split_at_mut(off);
                self.parts[0].prox_in_place(a, tau);
                self.parts[1].prox_in_place(b, tau);
            }
            Zero => {}
        }
    }

    /// Proximal map of `sigma Psi^*`.
    pub fn prox_conjugate(&self, v: &[f64], sigma: f64) -> Result<Vec<f64>> {
        self.check(v)?;
        let mut out = v.to_vec();
        self.prox_conjugate_in_place(&mut out, sigma);
        Ok(out)
    }

    pub(crate) fn prox_conjugate_in_place(&self, v: &mut [f64], sigma: f64) {
        use FunctionalKind::*;
        match &self.kind {
            IndicatorZero => {}
            Zero => v.fill(0.0),
            GroupL1 { weight } => {
                for g in self.domain.groups() {
                    project_group(v, g, *weight);
                }
            }
            GroupL1Aniso { weights } => {
                for i in 0..v.len() {
                    let w = weights[self.domain.channel_of(i)];
                    v[i] = v[i].clamp(-w, w);
                }
            }
            HalfSquaredL2 { weight } => {
                let s = weight / (weight + sigma);
                v.iter_mut().for_each(|x| *x *= s);
            }
            IndicatorBall { .. } => {
                for gi in 0..self.domain.n_groups() {
                    let r = self.radius(gi);
                    shrink_group(v, self.domain.group(gi), sigma * r);
                }
            }
            CompositeFg { .. } => {
                let off = self.domain.parts()[1].0;
                let (a, b) = v.split_at_mut(off);
                self.parts[0].prox_conjugate_in_place(a, sigma);
                self.parts[1].prox_conjugate_in_place(b, sigma);
            }
            LqNorm { .. } => {
                // Moreau: v - sigma prox_{Psi / sigma}(v / sigma)
                let mut z: Vec<f64> = v.iter().map(|x| x / sigma).collect();
                self.prox_in_place(&mut z, 1.0 / sigma);
                for (x, zi) in v.iter_mut().zip(&z) {
                    *x -= sigma * zi;
                }
            }
        }
    }

    pub fn conjugate_eval(&self, y: &[f64]) -> Result<f64> {
        self.check(y)?;
        Ok(self.conjugate_unchecked(y))
    }

    pub(crate) fn conjugate_unchecked(&self, y: &[f64]) -> f64 {
        use FunctionalKind::*;
        match &self.kind {
            IndicatorZero => 0.0,
            Zero => {
                if y.iter().all(|x| x.abs() <= INDICATOR_TOL) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            GroupL1 { weight } => {
                let lim = weight * (1.0 + INDICATOR_TOL);
                if self.domain.groups().all(|g| group_norm(y, g) <= lim) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            GroupL1Aniso { weights } => {
                let ok = y
                    .iter()
                    .enumerate()
                    .all(|(i, x)| x.abs() <= weights[self.domain.channel_of(i)] * (1.0 + INDICATOR_TOL));
                if ok {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            LqNorm { q, weight } => {
                let qc = q / (q - 1.0);
                weight.powf(-(qc - 1.0)) / qc * y.iter().map(|x| x.abs().powf(qc)).sum::<f64>()
            }
            HalfSquaredL2 { weight } => y.iter().map(|x| x * x).sum::<f64>() / (2.0 * weight),
            IndicatorBall { .. } => self
                .domain
                .groups()
                .enumerate()
                .map(|(gi, g)| self.radius(gi) * group_norm(y, g))
                .sum(),
            CompositeFg { .. } => {
                let (a, b) = self.split(y);
                self.parts[0].conjugate_unchecked(a) + self.parts[1].conjugate_unchecked(b)
            }
        }
    }

    /// A subgradient of the functional at `z`; where it is not unique the
    /// entries of `fallback` are kept.
    pub(crate) fn subgradient(&self, z: &[f64], fallback: &[f64]) -> Vec<f64> {
        use FunctionalKind::*;
        match &self.kind {
            IndicatorZero => fallback.to_vec(),
            GroupL1 { weight } => {
                let mut out = fallback.to_vec();
                for g in self.domain.groups() {
                    let n = group_norm(z, g);
                    if n > 0.0 {
                        for &i in g {
                            out[i] = weight * z[i] / n;
                        }
                    }
                }
                out
            }
            GroupL1Aniso { weights } => z
                .iter()
                .zip(fallback)
                .enumerate()
                .map(|(i, (x, f))| if *x != 0.0 { weights[self.domain.channel_of(i)] * x.signum() } else { *f })
                .collect(),
            LqNorm { q, weight } => z.iter().map(|x| weight * x.abs().powf(q - 1.0) * x.signum()).collect(),
            HalfSquaredL2 { weight } => z.iter().map(|x| weight * x).collect(),
            IndicatorBall { .. } => {
                let mut out = fallback.to_vec();
                for (gi, g) in self.domain.groups().enumerate() {
                    if group_norm(z, g) < self.radius(gi) {
                        for &i in g {
                            out[i] = 0.0;
                        }
                    }
                }
                out
            }
            CompositeFg { .. } => {
                let (a, b) = self.split(z);
                let (fa, fb) = self.split(fallback);
                let mut out = self.parts[0].subgradient(a, fa);
                out.extend(self.parts[1].subgradient(b, fb));
                out
            }
            Zero => vec![0.0; z.len()],
        }
    }

    /// Largest `t` in `[0, 1]` with `t y` in the domain of the conjugate.
    pub(crate) fn conjugate_domain_scale(&self, y: &[f64]) -> f64 {
        use FunctionalKind::*;
        match &self.kind {
            GroupL1 { weight } => {
                let m = self.domain.groups().map(|g| group_norm(y, g)).fold(0.0, f64::max);
                if m <= *weight {
                    1.0
                } else {
                    weight / m
                }
            }
            GroupL1Aniso { weights } => {
                let mut t: f64 = 1.0;
                for (i, x) in y.iter().enumerate() {
                    let w = weights[self.domain.channel_of(i)];
                    if x.abs() > w {
                        t = t.min(w / x.abs());
                    }
                }
                t
            }
            Zero => {
                if y.iter().all(|x| *x == 0.0) {
                    1.0
                } else {
                    0.0
                }
            }
            CompositeFg { .. } => {
                let (a, b) = self.split(y);
                self.parts[0].conjugate_domain_scale(a).min(self.parts[1].conjugate_domain_scale(b))
            }
            _ => 1.0,
        }
    }
}

pub(crate) fn group_norm(v: &[f64], g: &[usize]) -> f64 {
    g.iter().map(|&i| v[i] * v[i]).sum::<f64>().sqrt()
}

fn shrink_group(v: &mut [f64], g: &[usize], t: f64) {
    let n = group_norm(v, g);
    let s = if n > t { 1.0 - t / n } else { 0.0 };
    for &i in g {
        v[i] *= s;
    }
}

fn project_group(v: &mut [f64], g: &[usize], r: f64) {
    let n = group_norm(v, g);
    if n > r {
        let s = if n > 0.0 { r / n } else { 0.0 };
        for &i in g {
            v[i] *= s;
        }
    }
}

/// `argmin_z 1/2 (z - v)^2 + (c / q) |z|^q` by bracketed Newton on the
/// magnitude equation `t + c t^(q-1) = |v|`.
fn lq_prox_scalar(v: f64, c: f64, q: f64) -> f64 {
    let a = v.abs();
    if a == 0.0 {
        return 0.0;
    }
    let h = |t: f64| t + c * t.powf(q - 1.0) - a;
    let (mut lo, mut hi) = (0.0_f64, a);
    let mut t = if q >= 2.0 { a / (1.0 + c * a.powf(q - 2.0)) } else { 0.5 * a };
    for _ in 0..50 {
        let ht = h(t);
        if ht.abs() <= 1e-12 * a.max(1e-300) {
            break;
        }
        if ht > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let dh = 1.0 + c * (q - 1.0) * t.powf(q - 2.0);
        let mut next = t - ht / dh;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if next == t {
            break;
        }
        t = next;
    }
    v.signum() * t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn pixel2() -> Space {
        Space::vector(&[1], 2).unwrap()
    }

    fn f(kind: FunctionalKind, s: &Space) -> NodeFunctional {
        NodeFunctional::new(kind, s).unwrap()
    }

    #[test]
    fn spot_values() {
        let s = pixel2();
        assert_eq!(f(FunctionalKind::IndicatorZero, &s).eval(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(f(FunctionalKind::GroupL1 { weight: 1.0 }, &s).eval(&[3.0, 4.0]).unwrap(), 5.0);
        let ball = f(FunctionalKind::IndicatorBall { radius: vec![1.0] }, &s);
        assert_eq!(ball.eval(&[0.0, 2.0]).unwrap(), f64::INFINITY);
        assert_eq!(ball.conjugate_eval(&[0.0, 2.0]).unwrap(), 2.0);
        let l1 = f(FunctionalKind::GroupL1 { weight: 1.0 }, &s);
        assert_eq!(l1.conjugate_eval(&[0.9, 0.0]).unwrap(), 0.0);
        assert_eq!(l1.conjugate_eval(&[1.1, 0.0]).unwrap(), f64::INFINITY);
        assert_eq!(f(FunctionalKind::IndicatorZero, &s).conjugate_eval(&[5.0, 1.0]).unwrap(), 0.0);
        assert!(l1.eval(&[1.0]).is_err());
    }

    #[test]
    fn prox_spot_values() {
        let s = pixel2();
        let l1 = f(FunctionalKind::GroupL1 { weight: 1.0 }, &s);
        let p = l1.prox(&[3.0, 4.0], 1.0).unwrap();
        assert!((p[0] - 2.4).abs() < 1e-14 && (p[1] - 3.2).abs() < 1e-14);
        let pc = l1.prox_conjugate(&[3.0, 4.0], 1.0).unwrap();
        assert!((pc[0] - 0.6).abs() < 1e-14 && (pc[1] - 0.8).abs() < 1e-14);
        let one = Space::coeff(1).unwrap();
        let hs = f(FunctionalKind::HalfSquaredL2 { weight: 1.0 }, &one);
        assert_eq!(hs.prox(&[2.0], 1.0).unwrap(), vec![1.0]);
        assert_eq!(hs.prox_conjugate(&[2.0], 1.0).unwrap(), vec![1.0]);
        assert_eq!(f(FunctionalKind::IndicatorZero, &s).prox(&[1.0, 2.0], 0.3).unwrap(), vec![0.0, 0.0]);
        assert_eq!(
            f(FunctionalKind::IndicatorZero, &s).prox_conjugate(&[1.0, 2.0], 0.3).unwrap(),
            vec![1.0, 2.0]
        );
    }

    #[test]
    fn group_prox_matches_scalar_line_search() {
        // the prox of a group norm is a radial shrink; check the radius by golden search
        let v = [3.0, 4.0];
        let obj = |r: f64| 0.5 * (r - 5.0) * (r - 5.0) + r;
        let (mut a, mut b) = (0.0, 5.0);
        for _ in 0..200 {
            let m1 = a + 0.382 * (b - a);
            let m2 = a + 0.618 * (b - a);
            if obj(m1) < obj(m2) {
                b = m2;
            } else {
                a = m1;
            }
        }
        let r = 0.5 * (a + b);
        let p = f(FunctionalKind::GroupL1 { weight: 1.0 }, &pixel2()).prox(&v, 1.0).unwrap();
        assert!((p[0] - 0.6 * r).abs() < 1e-6 && (p[1] - 0.8 * r).abs() < 1e-6);
    }

    fn library(space: &Space) -> Vec<NodeFunctional> {
        let prod = Space::product(&[space.clone(), Space::coeff(3).unwrap()]).unwrap();
        vec![
            f(FunctionalKind::GroupL1 { weight: 1.3 }, space),
            f(
                FunctionalKind::GroupL1Aniso {
                    weights: vec![0.5; space.n_channels()],
                },
                space,
            ),
            f(FunctionalKind::LqNorm { q: 1.5, weight: 0.7 }, space),
            f(FunctionalKind::LqNorm { q: 3.0, weight: 1.0 }, space),
            f(FunctionalKind::HalfSquaredL2 { weight: 2.0 }, space),
            f(FunctionalKind::IndicatorBall { radius: vec![0.8] }, space),
            NodeFunctional::new(
                FunctionalKind::CompositeFg {
                    f: Box::new(FunctionalKind::GroupL1 { weight: 1.0 }),
                    g: Box::new(FunctionalKind::LqNorm { q: 2.5, weight: 1.0 }),
                },
                &prod,
            )
            .unwrap(),
        ]
    }

    #[test]
    fn moreau_decomposition_and_prox_optimality() {
        let space = Space::sym_tensor(&[4, 3], 1).unwrap();
        let mut rng = SplitMix64::new(11);
        for func in library(&space) {
            let n = func.domain().dim();
            for _ in 0..5 {
                let v = rng.normal_vec(n);
                let p = func.prox(&v, 1.0).unwrap();
                let pc = func.prox_conjugate(&v, 1.0).unwrap();
                for i in 0..n {
                    assert!((p[i] + pc[i] - v[i]).abs() < 1e-10, "{:?}", func.kind());
                }
                let tau = 0.7;
                let p = func.prox(&v, tau).unwrap();
                let obj = |z: &[f64]| {
                    0.5 * z.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                        + tau * func.eval(z).unwrap()
                };
                let base = obj(&p);
                for _ in 0..100 {
                    let z: Vec<f64> = p.iter().map(|x| x + 0.1 * rng.next_normal()).collect();
                    assert!(base <= obj(&z) + 1e-9, "{:?}", func.kind());
                }
            }
        }
    }

    #[test]
    fn fenchel_young() {
        let space = Space::vector(&[5], 2).unwrap();
        let mut rng = SplitMix64::new(12);
        for func in library(&space) {
            let n = func.domain().dim();
            for _ in 0..50 {
                let x = rng.normal_vec(n);
                let y: Vec<f64> = rng.normal_vec(n).iter().map(|v| 0.4 * v).collect();
                let lhs = func.eval(&x).unwrap() + func.conjugate_eval(&y).unwrap();
                let ip: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
                assert!(lhs >= ip - 1e-9, "{:?}", func.kind());
            }
        }
        // equality on the smooth kinds at y = grad Psi(x)
        let lq = f(FunctionalKind::LqNorm { q: 1.5, weight: 0.7 }, &space);
        let x = rng.normal_vec(space.dim());
        let y: Vec<f64> = x.iter().map(|v| 0.7 * v.signum() * v.abs().powf(0.5)).collect();
        let ip: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let lhs = lq.eval(&x).unwrap() + lq.conjugate_eval(&y).unwrap();
        assert!((lhs - ip).abs() < 1e-10);
    }

    #[test]
    fn convexity_and_vanishing_at_zero() {
        let space = Space::vector(&[4], 3).unwrap();
        let mut rng = SplitMix64::new(13);
        for func in library(&space) {
            let n = func.domain().dim();
            assert_eq!(func.eval(&vec![0.0; n]).unwrap(), 0.0);
            for _ in 0..30 {
                let a: Vec<f64> = rng.normal_vec(n).iter().map(|v| 0.2 * v).collect();
                let b: Vec<f64> = rng.normal_vec(n).iter().map(|v| 0.2 * v).collect();
                let t = rng.next_f64();
                let m: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
                let fa = func.eval(&a).unwrap();
                let fb = func.eval(&b).unwrap();
                if fa.is_finite() && fb.is_finite() {
                    assert!(func.eval(&m).unwrap() <= t * fa + (1.0 - t) * fb + 1e-9);
                }
            }
        }
    }

    #[test]
    fn coercive_along_random_rays() {
        // |v| <= C Psi(v) + D: for rays t d, Psi(t d) must eventually grow at least linearly
        let space = Space::vector(&[3], 2).unwrap();
        let mut rng = SplitMix64::new(14);
        for func in library(&space) {
            let n = func.domain().dim();
            for _ in 0..10 {
                let d = rng.normal_vec(n);
                let nd: f64 = d.iter().map(|x| x * x).sum::<f64>().sqrt();
                let at = |t: f64| func.eval(&d.iter().map(|x| t * x / nd).collect::<Vec<_>>()).unwrap();
                let (p10, p100) = (at(10.0), at(100.0));
                assert!(p100 == f64::INFINITY || p100 >= 5.0 * p10.min(p100) && p100 > 0.0);
            }
        }
    }

    #[test]
    fn lq_prox_solves_scalar_equation() {
        for &(v, c, q) in &[(2.0, 1.0, 1.5), (-0.3, 4.0, 1.1), (5.0, 0.2, 4.0), (1e-6, 1.0, 2.0)] {
            let z: f64 = lq_prox_scalar(v, c, q);
            let res = z - v + c * z.signum() * z.abs().powf(q - 1.0);
            assert!(res.abs() < 1e-10, "v={v} c={c} q={q} z={z}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let s = pixel2();
        assert!(NodeFunctional::new(FunctionalKind::LqNorm { q: 1.0, weight: 1.0 }, &s).is_err());
        assert!(NodeFunctional::new(FunctionalKind::GroupL1 { weight: 0.0 }, &s).is_err());
        assert!(NodeFunctional::new(FunctionalKind::GroupL1Aniso { weights: vec![1.0] }, &s).is_err());
        assert!(NodeFunctional::new(
            FunctionalKind::CompositeFg {
                f: Box::new(FunctionalKind::Zero),
                g: Box::new(FunctionalKind::Zero)
            },
            &s
        )
        .is_err());
    }
}
