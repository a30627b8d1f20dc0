use reggraph::assembly::{assemble, assemble_predual, flatten_saddle, DataFit};
use reggraph::library::operators::{blur, grad};
use reggraph::linalg::vec_ops::{dot, norm};
use reggraph::linalg::Space;
use reggraph::rng::SplitMix64;
use reggraph::solver::{certified_gap, StepSizes};
use reggraph::{
    evaluate_r, make_graph, solve_tikhonov, FunctionalKind, GraphSpec, LinOp, NodeFunctional, RegGraph, SolverConfig,
};

fn tight() -> SolverConfig {
    SolverConfig::default().with_gap_tol(1e-9).with_max_iters(100_000)
}

fn named(name: &str, n: usize) -> (RegGraph, Vec<f64>) {
    make_graph(&GraphSpec::default_1d(name, n).unwrap()).unwrap()
}

fn tv_value(u: &[f64]) -> f64 {
    u.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

#[test]
fn trivial_graph_evaluates_its_functional() {
    let s = Space::scalar(&[6]).unwrap();
    let g = RegGraph::trivial(NodeFunctional::new(FunctionalKind::HalfSquaredL2 { weight: 1.0 }, &s).unwrap());
    let u = [1.0, -2.0, 0.5, 3.0, 0.0, -1.0];
    let r = evaluate_r(&g, &[], &u, &tight()).unwrap();
    assert!((r.value - 0.5 * dot(&u, &u)).abs() < 1e-9);
}

#[test]
fn tgv_vanishes_on_affine_signals() {
    let (g, a) = named("tgv", 12);
    let u: Vec<f64> = (0..12).map(|i| 0.3 * i as f64 - 1.0).collect();
    let r = evaluate_r(&g, &a, &u, &tight()).unwrap();
    assert!(r.value.abs() < 1e-7, "{}", r.value);
    assert!(r.converged);
}

#[test]
fn tikhonov_limits_in_beta() {
    let (g, a) = named("tv", 10);
    let k = LinOp::identity(&Space::scalar(&[10]).unwrap());
    let f = SplitMix64::new(2).normal_vec(10);
    let mean = f.iter().sum::<f64>() / 10.0;
    let big = solve_tikhonov(&k, &f, 1e6, &g, &a, &tight()).unwrap();
    assert!(big.u.iter().all(|x| (x - mean).abs() < 1e-4), "{:?} vs {mean}", big.u);
    let small = solve_tikhonov(&k, &f, 1e-8, &g, &a, &tight()).unwrap();
    assert!(small.u.iter().zip(&f).all(|(x, y)| (x - y).abs() < 1e-6));
}

#[test]
fn tikhonov_matches_first_order_optimality_for_tv() {
    // denoising with TV: the solution's mean equals the data mean
    let (g, a) = named("tv", 16);
    let k = LinOp::identity(&Space::scalar(&[16]).unwrap());
    let f = SplitMix64::new(9).normal_vec(16);
    let r = solve_tikhonov(&k, &f, 0.3, &g, &a, &tight()).unwrap();
    let m_u: f64 = r.u.iter().sum();
    let m_f: f64 = f.iter().sum();
    assert!((m_u - m_f).abs() < 1e-6);
    let objective = |u: &[f64]| {
        let d: f64 = u.iter().zip(&f).map(|(x, y)| (x - y).powi(2)).sum();
        0.5 * d + 0.3 * tv_value(u)
    };
    let best = objective(&r.u);
    let mut rng = SplitMix64::new(10);
    for _ in 0..50 {
        let z: Vec<f64> = r.u.iter().map(|x| x + 1e-3 * rng.next_normal()).collect();
        assert!(best <= objective(&z) + 1e-8);
    }
}

#[test]
fn deblurring_fits_the_data() {
    let (g, a) = named("tv", 32);
    let k = blur(&[32], 1.0).unwrap();
    let truth: Vec<f64> = (0..32).map(|i| if (8..20).contains(&i) { 1.0 } else { 0.0 }).collect();
    let f = k.apply(&truth).unwrap();
    let r = solve_tikhonov(&k, &f, 1e-4, &g, &a, &tight()).unwrap();
    let ku = k.apply(&r.u).unwrap();
    let res: Vec<f64> = ku.iter().zip(&f).map(|(x, y)| x - y).collect();
    assert!(norm(&res) <= 1e-2 * norm(&f));
}

#[test]
fn gap_shrinks_with_iterations() {
    let (g, a) = named("tgv", 16);
    let u = SplitMix64::new(3).normal_vec(16);
    let short = evaluate_r(&g, &a, &u, &SolverConfig::default().with_max_iters(10)).unwrap();
    let long = evaluate_r(&g, &a, &u, &tight()).unwrap();
    assert!(!short.converged);
    assert!(short.gap > long.gap);
    assert!(long.gap >= -1e-9);
    assert!(!long.trace.is_empty());
    assert!(long.trace_csv().lines().count() > 1);
}

#[test]
fn results_are_deterministic() {
    let (g, a) = named("tgv_frame_infconv", 16);
    let u = SplitMix64::new(4).normal_vec(16);
    let cfg = SolverConfig {
        seed: Some(7),
        ..SolverConfig::default()
    };
    let r1 = evaluate_r(&g, &a, &u, &cfg).unwrap();
    let r2 = evaluate_r(&g, &a, &u, &cfg).unwrap();
    assert_eq!(r1.value, r2.value);
    assert_eq!(r1.edge_vars, r2.edge_vars);
    assert_eq!(r1.iterations, r2.iterations);
}

#[test]
fn certified_gap_agrees_with_solver() {
    for name in ["tv", "tgv", "tv_lq"] {
        let (g, a) = named(name, 12);
        let u = SplitMix64::new(5).normal_vec(12);
        let r = evaluate_r(&g, &a, &u, &tight()).unwrap();
        let c = certified_gap(&g, &a, &u, &r).unwrap();
        assert!(c.reliable, "{name}");
        assert!(c.gap >= -1e-8 && c.gap <= 1e-5 * (1.0 + r.value), "{name}: {}", c.gap);
    }
}

#[test]
fn tgv_tikhonov_has_one_dual_block_per_node_plus_data() {
    let (g, a) = named("tgv", 8);
    let k = LinOp::identity(&Space::scalar(&[8]).unwrap());
    let f = vec![0.0; 8];
    let r = solve_tikhonov(&k, &f, 1.0, &g, &a, &SolverConfig::default()).unwrap();
    assert_eq!(r.dual_vars.len(), 5);
    assert_eq!(r.edge_vars.len(), 3);
    let ap = assemble(&g, &a).unwrap();
    let fit = DataFit { k, f, beta: 1.0 };
    let spec = flatten_saddle(&ap, None, Some(&fit)).unwrap();
    assert_eq!(spec.blocks.len(), 5);
    assert_eq!(spec.u_segment, Some(3));
}

#[test]
fn assembled_operator_rows() {
    let (g, a) = named("tv", 5);
    let ap = assemble(&g, &a).unwrap();
    assert_eq!(ap.row_nnz(0), 1);
    assert_eq!(ap.row_nnz(1), 1);
    let dense = ap.to_dense().unwrap();
    let gd = grad(&[5]).unwrap().to_dense().unwrap();
    // root row is -Phi, leaf row is Theta
    for i in 0..5 {
        for j in 0..5 {
            let id = if i == j { 1.0 } else { 0.0 };
            assert_eq!(dense[(i, j)], -id);
        }
    }
    for i in 0..4 {
        for j in 0..5 {
            assert_eq!(dense[(5 + i, j)], gd[(i, j)]);
        }
    }
    let u = [0.0, 1.0, 3.0, 2.0, 2.0];
    assert!((ap.objective(&u, &u).unwrap() - tv_value(&u)).abs() < 1e-14);
    assert_eq!(ap.objective(&u, &[0.0; 5]).unwrap(), f64::INFINITY);
}

#[test]
fn assembled_tgv_split_row() {
    let (g, _) = named("tgv", 6);
    let ap = assemble(&g, &[1.0, 1.0, 0.5]).unwrap();
    let split = g.edge(0).head;
    assert_eq!(ap.row_nnz(split), 3);
    let coeffs: Vec<f64> = ap.rows[split].blocks.iter().map(|b| b.coeff).collect();
    assert_eq!(coeffs, vec![1.0, -1.0, -0.5]);
}

#[test]
fn predual_adjoint_and_projection() {
    let (g, a) = named("tgv", 8);
    let ap = assemble(&g, &a).unwrap();
    let mut rng = SplitMix64::new(12);
    let w = rng.normal_vec(ap.edge_dim());
    let v = rng.normal_vec(ap.node_dim());
    let lhs = dot(&ap.apply(&w).unwrap(), &v);
    let rhs = dot(&w, &ap.apply_predual(&v).unwrap());
    assert!((lhs - rhs).abs() < 1e-10 * norm(&w) * norm(&v));

    let u = rng.normal_vec(8);
    let pd = assemble_predual(&g, &a, &u).unwrap();
    let p = pd.project(&v).unwrap();
    assert!(p.projection_converged);
    assert!(norm(&pd.constraint(&p.v).unwrap()) <= 1e-6 * norm(&v));
    let r = evaluate_r(&g, &a, &u, &tight()).unwrap();
    // weak duality
    assert!(p.value <= r.value + 1e-8);
}

#[test]
fn step_sizes_and_config_validation() {
    let s = StepSizes::from_norm(2.0);
    assert!(s.tau * s.sigma * 4.0 < 1.0);
    assert!(StepSizes::new(1.0, 1.0, 2.0).is_err());
    let bad = SolverConfig {
        check_every: 0,
        ..SolverConfig::default()
    };
    assert!(bad.validate().is_err());
    let (g, a) = named("tv", 4);
    assert!(evaluate_r(&g, &a, &[1.0, 2.0], &SolverConfig::default()).is_err());
    let k = LinOp::identity(&Space::scalar(&[4]).unwrap());
    assert!(solve_tikhonov(&k, &[0.0; 4], 0.0, &g, &a, &SolverConfig::default()).is_err());
}
