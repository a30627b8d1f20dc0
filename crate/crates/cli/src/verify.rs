//! Self-checks run by the `verify` command.

use reggraph::graph::{enumerate_root_chains, Violation};
use reggraph::library::operators::{blur, dct, grad, grad_k, haar, mask, sym_grad};
use reggraph::library::GRAPH_NAMES;
use reggraph::linalg::analyze;
use reggraph::linalg::vec_ops::{dot, norm};
use reggraph::oracle::{brute_eval, taut_string_tv1d, OracleConfig};
use reggraph::rng::SplitMix64;
use reggraph::{
    evaluate_r, make_graph, solve_tikhonov, FunctionalKind, GraphSpec, LinOp, NodeFunctional, RegGraph, Result,
    SolverConfig, Space,
};

#[derive(Clone, Debug)]
pub struct Check {
    pub suite: &'static str,
    pub check: String,
    pub passed: bool,
    pub detail: String,
}

struct Suite {
    name: &'static str,
    out: Vec<Check>,
}

impl Suite {
    fn new(name: &'static str) -> Suite {
        Suite { name, out: Vec::new() }
    }

    fn record(&mut self, check: impl Into<String>, outcome: Result<(bool, String)>) {
        let (passed, detail) = match outcome {
            Ok(x) => x,
            Err(e) => (false, format!("error: {e}")),
        };
        self.out.push(Check {
            suite: self.name,
            check: check.into(),
            passed,
            detail,
        });
    }
}

fn within(value: f64, expected: f64, tol: f64) -> (bool, String) {
    let err = (value - expected).abs();
    (err <= tol, format!("value {value:.10} expected {expected:.10} error {err:.2e}"))
}

fn tight() -> SolverConfig {
    SolverConfig::default().with_gap_tol(1e-9).with_max_iters(100_000)
}

pub fn run(suites: &[String], seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    for s in suites {
        let checks = match s.as_str() {
            "linalg" => linalg(seed),
            "functionals" => functionals(seed),
            "graph" => graph(),
            "solver" => solver(seed),
            "oracle" => oracle(seed),
            _ => continue,
        };
        out.extend(checks);
    }
    out
}

fn linalg(seed: u64) -> Vec<Check> {
    let mut s = Suite::new("linalg");
    let ops: Vec<(&str, Result<LinOp>)> = vec![
        ("grad-1d", grad(&[9])),
        ("grad-2d", grad(&[4, 5])),
        ("sym-grad-2d", sym_grad(&[4, 4], 1)),
        ("grad-k3", grad_k(&[8], 3)),
        ("haar-2d", haar(&[4, 8])),
        ("dct-1d", dct(&[7])),
        ("blur-2d", blur(&[5, 6], 1.2)),
        ("mask-1d", mask(&[8], &[0, 2, 3, 7])),
    ];
    for (name, op) in ops {
        s.record(
            format!("adjoint {name}"),
            op.map(|op| {
                let m = op.adjoint_mismatch(4, seed);
                (m <= 1e-10, format!("relative mismatch {m:.2e}"))
            }),
        );
    }
    for (name, k, dim) in [("grad", 1, 1), ("grad-k2", 2, 2), ("grad-k3", 3, 3)] {
        s.record(
            format!("kernel {name}"),
            grad_k(&[10], k).and_then(|op| analyze(&op, 1e-8)).map(|a| {
                (a.kernel_dim() == dim, format!("kernel dimension {} expected {dim}", a.kernel_dim()))
            }),
        );
    }
    s.record(
        "haar orthonormal",
        haar(&[16]).and_then(|h| {
            let x = SplitMix64::new(seed).normal_vec(16);
            let y = h.apply(&x)?;
            Ok(within(norm(&y), norm(&x), 1e-10 * norm(&x)))
        }),
    );
    s.out
}

fn functional_cases() -> Result<Vec<(FunctionalKind, Space)>> {
    let v = Space::vector(&[4], 2)?;
    let prod = Space::product(&[Space::vector(&[4], 2)?, Space::scalar(&[4])?])?;
    Ok(vec![
        (FunctionalKind::IndicatorZero, v.clone()),
        (FunctionalKind::GroupL1 { weight: 1.3 }, v.clone()),
        (FunctionalKind::GroupL1Aniso { weights: vec![0.5, 2.0] }, v.clone()),
        (FunctionalKind::LqNorm { q: 1.5, weight: 1.0 }, v.clone()),
        (FunctionalKind::HalfSquaredL2 { weight: 2.0 }, v.clone()),
        (FunctionalKind::IndicatorBall { radius: vec![0.7] }, v.clone()),
        (
            FunctionalKind::CompositeFg {
                f: Box::new(FunctionalKind::GroupL1 { weight: 1.0 }),
                g: Box::new(FunctionalKind::HalfSquaredL2 { weight: 1.0 }),
            },
            prod,
        ),
        (FunctionalKind::Zero, v),
    ])
}

fn functionals(seed: u64) -> Vec<Check> {
    let mut s = Suite::new("functionals");
    let cases = match functional_cases() {
        Ok(c) => c,
        Err(e) => {
            s.record("setup", Err(e));
            return s.out;
        }
    };
    let mut rng = SplitMix64::new(seed);
    for (kind, space) in cases {
        let name = kind.name();
        let f = match NodeFunctional::new(kind.clone(), &space) {
            Ok(f) => f,
            Err(e) => {
                s.record(format!("construct {name}"), Err(e));
                continue;
            }
        };
        let v = rng.normal_vec(space.dim());
        let tau = 0.7;
        s.record(
            format!("moreau {name}"),
            (|| {
                let p = f.prox(&v, tau)?;
                let scaled: Vec<f64> = v.iter().map(|x| x / tau).collect();
                let q = f.prox_conjugate(&scaled, 1.0 / tau)?;
                let err = p
                    .iter()
                    .zip(&q)
                    .zip(&v)
                    .map(|((a, b), c)| (a + tau * b - c).abs())
                    .fold(0.0, f64::max);
                Ok((err <= 1e-9, format!("max deviation {err:.2e}")))
            })(),
        );
        let x = rng.normal_vec(space.dim());
        let y = rng.normal_vec(space.dim());
        s.record(
            format!("fenchel-young {name}"),
            (|| {
                let lhs = f.eval(&x)? + f.conjugate_eval(&y)?;
                let rhs = dot(&x, &y);
                Ok((lhs >= rhs - 1e-9, format!("f(x) + f*(y) = {lhs:.6}, <x, y> = {rhs:.6}")))
            })(),
        );
    }
    s.out
}

fn library(n: usize) -> Vec<(&'static str, Result<(RegGraph, Vec<f64>)>)> {
    GRAPH_NAMES
        .iter()
        .map(|&name| (name, GraphSpec::default_1d(name, n).and_then(|spec| make_graph(&spec))))
        .collect()
}

fn graph() -> Vec<Check> {
    let mut s = Suite::new("graph");
    for (name, built) in library(8) {
        s.record(
            format!("validate {name}"),
            built.map(|(g, _)| {
                let v = g.validate();
                (v.is_empty(), format!("{} violations", v.len()))
            }),
        );
    }
    s.record(
        "chains tgv",
        make_graph(&GraphSpec::default_1d("tgv", 8).unwrap_or(GraphSpec::Tv { shape: vec![8] })).map(|(g, _)| {
            let n = enumerate_root_chains(&g).len();
            (n == 4, format!("{n} root chains, expected 4"))
        }),
    );
    s.record(
        "detect self-loop",
        make_graph(&GraphSpec::Tv { shape: vec![6] }).map(|(g, _)| {
            let mut edges = g.edges().to_vec();
            edges[0].tail = edges[0].head;
            let v = RegGraph::from_parts(g.nodes().to_vec(), edges, g.root()).validate();
            let found = v.iter().any(|x| matches!(x, Violation::Cycle { .. } | Violation::Disconnected { .. }));
            (found, format!("{} violations reported", v.len()))
        }),
    );
    s.out
}

fn solver(seed: u64) -> Vec<Check> {
    let mut s = Suite::new("solver");
    s.record(
        "tv step",
        make_graph(&GraphSpec::Tv { shape: vec![4] })
            .and_then(|(g, a)| evaluate_r(&g, &a, &[0.0, 0.0, 1.0, 1.0], &tight()))
            .map(|r| within(r.value, 1.0, 1e-5)),
    );
    s.record(
        "tgv affine",
        GraphSpec::default_1d("tgv", 12)
            .and_then(|spec| make_graph(&spec))
            .and_then(|(g, a)| {
                let u: Vec<f64> = (0..12).map(|i| 0.3 * i as f64 - 1.0).collect();
                evaluate_r(&g, &a, &u, &tight())
            })
            .map(|r| within(r.value, 0.0, 1e-5)),
    );
    let mut rng = SplitMix64::new(seed);
    let ocfg = OracleConfig::default();
    for (name, built) in library(8) {
        let u = rng.normal_vec(8);
        s.record(
            format!("oracle {name}"),
            built.and_then(|(g, a)| {
                let solved = evaluate_r(&g, &a, &u, &SolverConfig::default())?.value;
                let brute = brute_eval(&g, &a, &u, &ocfg)?.value;
                Ok(within(solved, brute, f64::max(1e-4, 1e-3 * brute.abs())))
            }),
        );
    }
    s.out
}

fn oracle(seed: u64) -> Vec<Check> {
    let mut s = Suite::new("oracle");
    let n = 24;
    let mut rng = SplitMix64::new(seed);
    for lambda in [0.1, 0.5, 2.0] {
        let f: Vec<f64> = (0..n)
            .map(|i| if i < n / 2 { 0.0 } else { 1.0 } + 0.3 * rng.next_normal())
            .collect();
        s.record(
            format!("taut string lambda {lambda}"),
            make_graph(&GraphSpec::Tv { shape: vec![n] }).and_then(|(g, a)| {
                let k = LinOp::identity(g.root_space());
                // 1/2 |u - f|^2 + beta TV(u) with beta = lambda
                let sol = solve_tikhonov(&k, &f, lambda, &g, &a, &tight())?;
                let exact = taut_string_tv1d(&f, lambda);
                let err = sol.u.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                Ok((err <= 1e-5, format!("max deviation {err:.2e}")))
            }),
        );
    }
    s.out
}
