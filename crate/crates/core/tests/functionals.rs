use proptest::prelude::*;
use reggraph::linalg::vec_ops::{dot, norm};
use reggraph::linalg::Space;
use reggraph::rng::SplitMix64;
use reggraph::{FunctionalKind, NodeFunctional};

fn pixel() -> Space {
    Space::vector(&[1], 2).unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn l1(w: f64) -> FunctionalKind {
    FunctionalKind::GroupL1 { weight: w }
}

#[test]
fn evaluation_examples() {
    let s = pixel();
    let zero = NodeFunctional::new(FunctionalKind::IndicatorZero, &s).unwrap();
    assert_eq!(zero.eval(&[0.0, 0.0]).unwrap(), 0.0);
    assert_eq!(zero.eval(&[0.0, 1e-3]).unwrap(), f64::INFINITY);
    let g = NodeFunctional::new(l1(1.0), &s).unwrap();
    assert!((g.eval(&[3.0, 4.0]).unwrap() - 5.0).abs() < 1e-14);
    let ball = NodeFunctional::new(FunctionalKind::IndicatorBall { radius: vec![1.0] }, &s).unwrap();
    assert_eq!(ball.eval(&[0.0, 2.0]).unwrap(), f64::INFINITY);
    assert_eq!(ball.eval(&[0.6, 0.8]).unwrap(), 0.0);
}

#[test]
fn prox_examples() {
    let s = pixel();
    let zero = NodeFunctional::new(FunctionalKind::IndicatorZero, &s).unwrap();
    assert_eq!(zero.prox(&[1.0, -2.0], 0.3).unwrap(), vec![0.0, 0.0]);
    let g = NodeFunctional::new(l1(1.0), &s).unwrap();
    assert!(close(&g.prox(&[3.0, 4.0], 1.0).unwrap(), &[2.4, 3.2], 1e-14));
    let sc = Space::scalar(&[1]).unwrap();
    let q = NodeFunctional::new(FunctionalKind::HalfSquaredL2 { weight: 1.0 }, &sc).unwrap();
    assert!(close(&q.prox(&[2.0], 1.0).unwrap(), &[1.0], 1e-14));
}

#[test]
fn conjugate_prox_examples() {
    let s = pixel();
    let zero = NodeFunctional::new(FunctionalKind::IndicatorZero, &s).unwrap();
    assert_eq!(zero.prox_conjugate(&[1.5, -2.0], 0.7).unwrap(), vec![1.5, -2.0]);
    let g = NodeFunctional::new(l1(1.0), &s).unwrap();
    assert!(close(&g.prox_conjugate(&[3.0, 4.0], 1.0).unwrap(), &[0.6, 0.8], 1e-14));
    let sc = Space::scalar(&[1]).unwrap();
    let q = NodeFunctional::new(FunctionalKind::HalfSquaredL2 { weight: 1.0 }, &sc).unwrap();
    assert!(close(&q.prox_conjugate(&[2.0], 1.0).unwrap(), &[1.0], 1e-14));
}

#[test]
fn conjugate_examples() {
    let s = pixel();
    let zero = NodeFunctional::new(FunctionalKind::IndicatorZero, &s).unwrap();
    assert_eq!(zero.conjugate_eval(&[7.0, -3.0]).unwrap(), 0.0);
    let g = NodeFunctional::new(l1(1.0), &s).unwrap();
    assert_eq!(g.conjugate_eval(&[0.9, 0.0]).unwrap(), 0.0);
    assert_eq!(g.conjugate_eval(&[0.0, 1.1]).unwrap(), f64::INFINITY);
    let ball = NodeFunctional::new(FunctionalKind::IndicatorBall { radius: vec![1.0] }, &s).unwrap();
    assert!((ball.conjugate_eval(&[0.0, 2.0]).unwrap() - 2.0).abs() < 1e-14);
}

#[test]
fn ball_support_function_matches_enumeration() {
    let s = Space::vector(&[3], 2).unwrap();
    let radius = vec![0.5, 1.0, 2.0];
    let ball = NodeFunctional::new(FunctionalKind::IndicatorBall { radius: radius.clone() }, &s).unwrap();
    let y = [0.3, -1.0, 2.0, 0.5, -0.7, 0.1];
    // sup over points on each pixel's circle, sampled finely
    let mut best = 0.0;
    for g in 0..3 {
        let idx = s.group(g);
        let mut m = f64::NEG_INFINITY;
        for k in 0..20000 {
            let t = k as f64 / 20000.0 * std::f64::consts::TAU;
            let v = radius[g] * (t.cos() * y[idx[0]] + t.sin() * y[idx[1]]);
            m = m.max(v);
        }
        best += m;
    }
    assert!((ball.conjugate_eval(&y).unwrap() - best).abs() < 1e-6);
}

#[test]
fn dimension_mismatch_is_an_error() {
    let g = NodeFunctional::new(l1(1.0), &pixel()).unwrap();
    assert!(g.eval(&[1.0]).is_err());
    assert!(g.prox(&[1.0, 2.0, 3.0], 1.0).is_err());
}

#[test]
fn lq_prox_matches_scalar_minimization() {
    let s = Space::scalar(&[4]).unwrap();
    for q in [1.5, 3.0] {
        let f = NodeFunctional::new(FunctionalKind::LqNorm { q, weight: 0.7 }, &s).unwrap();
        let v = [1.3, -0.4, 2.5, 0.0];
        let p = f.prox(&v, 0.8).unwrap();
        for (vi, pi) in v.iter().zip(&p) {
            // objective derivative vanishes at the prox
            let d = pi - vi + 0.8 * 0.7 * pi.abs().powf(q - 1.0) * pi.signum();
            assert!(d.abs() < 1e-10, "q {q}: residual {d}");
        }
    }
}

fn kinds() -> Vec<(FunctionalKind, Space)> {
    let s = Space::vector(&[3], 2).unwrap();
    let prod = Space::product(&[Space::vector(&[3], 2).unwrap(), Space::scalar(&[3]).unwrap()]).unwrap();
    vec![
        (FunctionalKind::IndicatorZero, s.clone()),
        (l1(1.3), s.clone()),
        (FunctionalKind::GroupL1Aniso { weights: vec![0.5, 2.0] }, s.clone()),
        (FunctionalKind::LqNorm { q: 1.5, weight: 1.0 }, s.clone()),
        (FunctionalKind::LqNorm { q: 3.0, weight: 0.5 }, s.clone()),
        (FunctionalKind::HalfSquaredL2 { weight: 2.0 }, s.clone()),
        (FunctionalKind::IndicatorBall { radius: vec![0.5, 1.0, 1.5] }, s.clone()),
        (
            FunctionalKind::CompositeFg {
                f: Box::new(l1(1.0)),
                g: Box::new(FunctionalKind::HalfSquaredL2 { weight: 1.0 }),
            },
            prod,
        ),
        (FunctionalKind::Zero, s),
    ]
}

#[test]
fn every_kind_vanishes_at_zero() {
    for (k, s) in kinds() {
        let f = NodeFunctional::new(k.clone(), &s).unwrap();
        assert_eq!(f.eval(&s.zeros()).unwrap(), 0.0, "{}", k.name());
    }
}

#[test]
fn coercivity_along_rays() {
    // |v| <= C Psi(v) + D with C, D fitted on short rays and checked on long ones
    let mut rng = SplitMix64::new(4);
    for (k, s) in kinds() {
        if matches!(k, FunctionalKind::Zero) {
            continue;
        }
        let f = NodeFunctional::new(k.clone(), &s).unwrap();
        for _ in 0..20 {
            let d = rng.normal_vec(s.dim());
            let at = |t: f64| f.eval(&d.iter().map(|x| t * x).collect::<Vec<_>>()).unwrap();
            let (v1, v2) = (at(1.0), at(2.0));
            if v2.is_infinite() {
                continue;
            }
            let c = (2.0 - 1.0) * norm(&d) / (v2 - v1).max(1e-12);
            let dd = norm(&d) - c * v1;
            for t in [5.0, 20.0, 100.0] {
                let vt = at(t);
                assert!(t * norm(&d) <= c * vt + dd.max(0.0) + 1e-9, "{}", k.name());
            }
        }
    }
}

fn random_pair(seed: u64, s: &Space) -> (Vec<f64>, Vec<f64>) {
    let mut rng = SplitMix64::new(seed);
    (rng.normal_vec(s.dim()), rng.normal_vec(s.dim()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn moreau_decomposition(seed in any::<u64>()) {
        for (k, s) in kinds() {
            let f = NodeFunctional::new(k, &s).unwrap();
            let (v, _) = random_pair(seed, &s);
            let p = f.prox(&v, 1.0).unwrap();
            let q = f.prox_conjugate(&v, 1.0).unwrap();
            for i in 0..v.len() {
                prop_assert!((p[i] + q[i] - v[i]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn prox_is_optimal(seed in any::<u64>(), tau in 0.05f64..5.0) {
        let mut rng = SplitMix64::new(seed ^ 0xabc);
        for (k, s) in kinds() {
            let f = NodeFunctional::new(k, &s).unwrap();
            let v = rng.normal_vec(s.dim());
            let p = f.prox(&v, tau).unwrap();
            let obj = |z: &[f64]| {
                let d: f64 = z.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum();
                0.5 * d + tau * f.eval(z).unwrap()
            };
            let best = obj(&p);
            for _ in 0..100 {
                let z: Vec<f64> = p.iter().map(|x| x + 0.1 * rng.next_normal()).collect();
                prop_assert!(best <= obj(&z) + 1e-9);
            }
        }
    }

    #[test]
    fn fenchel_young(seed in any::<u64>()) {
        for (k, s) in kinds() {
            let f = NodeFunctional::new(k, &s).unwrap();
            let (x, y) = random_pair(seed, &s);
            let lhs = f.eval(&x).unwrap() + f.conjugate_eval(&y).unwrap();
            prop_assert!(lhs >= dot(&x, &y) - 1e-9);
        }
    }

    #[test]
    fn convexity(seed in any::<u64>(), t in 0.0f64..1.0) {
        for (k, s) in kinds() {
            let f = NodeFunctional::new(k, &s).unwrap();
            let (x, y) = random_pair(seed, &s);
            let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| t * a + (1.0 - t) * b).collect();
            let rhs = t * f.eval(&x).unwrap() + (1.0 - t) * f.eval(&y).unwrap();
            prop_assert!(f.eval(&mid).unwrap() <= rhs + 1e-9);
            prop_assert!(f.eval(&x).unwrap() >= 0.0);
        }
    }
}

#[test]
fn fenchel_young_equality_for_smooth_kinds() {
    let s = Space::scalar(&[5]).unwrap();
    let mut rng = SplitMix64::new(8);
    for k in [
        FunctionalKind::HalfSquaredL2 { weight: 1.7 },
        FunctionalKind::LqNorm { q: 2.5, weight: 0.6 },
    ] {
        let f = NodeFunctional::new(k.clone(), &s).unwrap();
        let x = rng.normal_vec(5);
        // gradient of the smooth functional
        let y: Vec<f64> = match k {
            FunctionalKind::HalfSquaredL2 { weight } => x.iter().map(|v| weight * v).collect(),
            FunctionalKind::LqNorm { q, weight } => x.iter().map(|v| weight * v.abs().powf(q - 1.0) * v.signum()).collect(),
            _ => unreachable!(),
        };
        let gap = f.eval(&x).unwrap() + f.conjugate_eval(&y).unwrap() - dot(&x, &y);
        assert!(gap.abs() < 1e-9, "{}: {gap}", k.name());
    }
}
