use reggraph::oracle::{brute_eval, taut_string_tv1d, zero_set_probe, OracleConfig};
use reggraph::rng::SplitMix64;
use reggraph::{make_graph, GraphSpec};

fn tv_value(u: &[f64]) -> f64 {
    u.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

#[test]
fn brute_eval_reproduces_tv() {
    let (g, a) = make_graph(&GraphSpec::Tv { shape: vec![9] }).unwrap();
    let mut rng = SplitMix64::new(1);
    for _ in 0..5 {
        let u = rng.normal_vec(9);
        let b = brute_eval(&g, &a, &u, &OracleConfig::default()).unwrap();
        assert!(b.converged);
        assert!((b.value - tv_value(&u)).abs() < 1e-8);
        assert!(b.uncertainty < 1e-6);
        assert_eq!(b.w.len(), g.edge_dim());
    }
}

#[test]
fn brute_eval_tgv_of_affine_is_zero() {
    let (g, a) = make_graph(&GraphSpec::default_1d("tgv", 8).unwrap()).unwrap();
    let u: Vec<f64> = (0..8).map(|i| 2.0 - 0.5 * i as f64).collect();
    let b = brute_eval(&g, &a, &u, &OracleConfig::default()).unwrap();
    assert!(b.value.abs() < 1e-8, "{}", b.value);
}

#[test]
fn brute_eval_rejects_bad_input() {
    let (g, a) = make_graph(&GraphSpec::Tv { shape: vec![4] }).unwrap();
    assert!(brute_eval(&g, &a, &[1.0; 3], &OracleConfig::default()).is_err());
    assert!(brute_eval(&g, &[1.0, 2.0], &[1.0; 4], &OracleConfig::default()).is_err());
}

#[test]
fn taut_string_limits() {
    let f = [0.3, -1.0, 2.0, 0.5, 0.1, 1.2];
    assert_eq!(taut_string_tv1d(&f, 0.0), f.to_vec());
    let mean = f.iter().sum::<f64>() / 6.0;
    assert!(taut_string_tv1d(&f, 100.0).iter().all(|x| (x - mean).abs() < 1e-12));
}

#[test]
fn taut_string_single_step() {
    // a step of height 2 with lambda 0.5 shrinks by 2 lambda / (half length)
    let f = [0.0, 0.0, 2.0, 2.0];
    let u = taut_string_tv1d(&f, 0.5);
    let expected = [0.25, 0.25, 1.75, 1.75];
    for (a, b) in u.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12, "{u:?}");
    }
}

#[test]
fn taut_string_satisfies_optimality() {
    // cumulative residual stays in [-lambda, lambda] and touches the bound at jumps
    let mut rng = SplitMix64::new(21);
    for trial in 0..50 {
        let n = 5 + trial % 30;
        let f = rng.normal_vec(n);
        let lambda = rng.uniform(0.05, 2.0);
        let u = taut_string_tv1d(&f, lambda);
        let mut cum = 0.0;
        for i in 0..n {
            cum += f[i] - u[i];
            if i + 1 < n {
                assert!(cum.abs() <= lambda + 1e-9);
                let jump = u[i + 1] - u[i];
                if jump.abs() > 1e-9 {
                    assert!((cum + lambda * jump.signum()).abs() < 1e-8, "trial {trial} at {i}");
                }
            }
        }
        assert!(cum.abs() < 1e-9);
    }
}

#[test]
fn zero_set_probe_finds_tv_null_directions() {
    let (g, a) = make_graph(&GraphSpec::Tv { shape: vec![6] }).unwrap();
    let constant = vec![1.0; 6];
    let ramp: Vec<f64> = (0..6).map(|i| i as f64).collect();
    let found = zero_set_probe(&g, &a, &[constant, ramp], 3, 1e-6, &OracleConfig::default()).unwrap();
    assert_eq!(found, vec![true, false]);
    assert!(zero_set_probe(&g, &a, &[vec![1.0; 5]], 3, 1e-6, &OracleConfig::default()).is_err());
}
