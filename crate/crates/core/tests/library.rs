use reggraph::library::operators::grad;
use reggraph::library::{FrameKind, GRAPH_NAMES};
use reggraph::oracle::{brute_eval, OracleConfig};
use reggraph::rng::SplitMix64;
use reggraph::{evaluate_r, make_graph, make_operator, Error, FunctionalKind, GraphSpec, OperatorSpec, SolverConfig};

fn tight() -> SolverConfig {
    SolverConfig::default().with_gap_tol(1e-9).with_max_iters(100_000)
}

fn diffs(u: &[f64]) -> Vec<f64> {
    u.windows(2).map(|w| w[1] - w[0]).collect()
}

#[test]
fn gradient_dense_rows() {
    let d = grad(&[4]).unwrap().to_dense().unwrap();
    let expected = [[-1.0, 1.0, 0.0, 0.0], [0.0, -1.0, 1.0, 0.0], [0.0, 0.0, -1.0, 1.0]];
    assert_eq!(d.nrows(), 3);
    for (i, row) in expected.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            assert_eq!(d[(i, j)], *v);
        }
    }
}

#[test]
fn every_name_has_a_default() {
    for name in GRAPH_NAMES {
        let spec = GraphSpec::default_1d(name, 8).unwrap();
        assert_eq!(spec.name(), name);
        let (g, a) = make_graph(&spec).unwrap();
        assert_eq!(g.root_space().dim(), 8);
        assert_eq!(a, g.weights());
    }
    assert!(matches!(GraphSpec::default_1d("nope", 8), Err(Error::UnknownGraph(_))));
}

#[test]
fn tgv_structure_and_weights() {
    let (g, a) = make_graph(&GraphSpec::Tgv {
        shape: vec![8],
        k: 2,
        weights: vec![0.3],
    })
    .unwrap();
    assert_eq!((g.n_nodes(), g.n_edges()), (4, 3));
    assert_eq!(a, vec![1.0, 1.0, 0.3]);
    assert_eq!(g.learnable_edges(), vec![2]);
    assert_eq!(g.edge(0).tail, g.root());
    assert_eq!(g.edge(1).tail, g.edge(0).head);
    assert_eq!(g.edge(2).tail, g.edge(0).head);
    assert!(g.node(g.root()).functional.is_indicator_zero());

    let (g3, a3) = make_graph(&GraphSpec::Tgv {
        shape: vec![8],
        k: 3,
        weights: vec![0.5, 0.25],
    })
    .unwrap();
    assert_eq!(g3.learnable_edges().len(), 2);
    assert_eq!(a3.iter().filter(|&&x| x != 1.0).count(), 2);
}

#[test]
fn graph_spec_serde_round_trip() {
    let spec = GraphSpec::TgvFrameInfconv {
        shape: vec![16],
        alpha0: 0.5,
        alpha1: 2.0,
        frame: FrameKind::Dct,
    };
    let s = serde_json::to_string(&spec).unwrap();
    assert_eq!(serde_json::from_str::<GraphSpec>(&s).unwrap(), spec);
    let tgv: GraphSpec = serde_json::from_str(r#"{"name":"tgv","shape":[8]}"#).unwrap();
    assert!(matches!(tgv, GraphSpec::Tgv { k: 2, .. }));
    assert!(serde_json::from_str::<GraphSpec>(r#"{"name":"tv","shape":[8],"extra":1}"#).is_err());
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(make_graph(&GraphSpec::TvLq {
        shape: vec![8],
        q: 2.0,
        alpha: -1.0
    })
    .is_err());
    assert!(make_graph(&GraphSpec::SecondOrderGeneral {
        n: 8,
        a: vec![0.0],
        alpha: 1.0
    })
    .is_err());
    assert!(make_operator(&OperatorSpec::Haar { shape: vec![12] }).is_err());
}

#[test]
fn tv_is_total_variation() {
    let (g, a) = make_graph(&GraphSpec::Tv { shape: vec![10] }).unwrap();
    let mut rng = SplitMix64::new(5);
    for _ in 0..5 {
        let u = rng.normal_vec(10);
        let expected: f64 = diffs(&u).iter().map(|d| d.abs()).sum();
        let r = evaluate_r(&g, &a, &u, &tight()).unwrap();
        assert!(r.converged);
        assert!((r.value - expected).abs() <= 1e-6 * (1.0 + expected));
    }
}

#[test]
fn tv_pwl_soft_thresholds_jumps() {
    let (g, a) = make_graph(&GraphSpec::default_1d("tv_pwl", 12).unwrap()).unwrap();
    let mut rng = SplitMix64::new(6);
    for _ in 0..5 {
        let u = rng.normal_vec(12);
        let expected: f64 = diffs(&u).iter().map(|d| (d.abs() - 0.5).max(0.0)).sum();
        let r = evaluate_r(&g, &a, &u, &tight()).unwrap();
        assert!((r.value - expected).abs() <= 1e-5 * (1.0 + expected), "{} vs {expected}", r.value);
    }
}

#[test]
fn tv_lq_with_q_two_is_huber() {
    let (g, a) = make_graph(&GraphSpec::default_1d("tv_lq", 12).unwrap()).unwrap();
    let huber = |d: f64| if d.abs() <= 1.0 { 0.5 * d * d } else { d.abs() - 0.5 };
    let mut rng = SplitMix64::new(7);
    for _ in 0..5 {
        let u: Vec<f64> = rng.normal_vec(12).iter().map(|x| 1.5 * x).collect();
        let expected: f64 = diffs(&u).iter().map(|&d| huber(d)).sum();
        let solved = evaluate_r(&g, &a, &u, &tight()).unwrap().value;
        let oracle = brute_eval(&g, &a, &u, &OracleConfig::default()).unwrap().value;
        assert!((solved - expected).abs() <= 1e-5 * (1.0 + expected), "{solved} vs {expected}");
        assert!((oracle - expected).abs() <= 1e-7 * (1.0 + expected), "{oracle} vs {expected}");
    }
}

#[test]
fn tight_frames_with_identity_frames_is_l1() {
    let (g, a) = make_graph(&GraphSpec::TightFrames {
        shape: vec![8],
        frame1: FrameKind::Identity,
        frame2: FrameKind::Identity,
        alpha: 1.0,
    })
    .unwrap();
    let u: [f64; 8] = [1.0, -2.0, 0.5, 0.0, 3.0, -0.25, 1.0, 0.0];
    let expected: f64 = u.iter().map(|x| x.abs()).sum();
    let r = evaluate_r(&g, &a, &u, &tight()).unwrap();
    assert!((r.value - expected).abs() <= 1e-6 * (1.0 + expected));
}

#[test]
fn sum_fg_uses_composite_leaf() {
    let (g, _) = make_graph(&GraphSpec::default_1d("sum_fg", 8).unwrap()).unwrap();
    let leaf = g.edge(0).head;
    assert!(matches!(g.node(leaf).functional.kind(), FunctionalKind::CompositeFg { .. }));
}
