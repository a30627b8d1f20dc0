use reggraph::library::GRAPH_NAMES;
use reggraph::{make_graph, GraphSpec};
use reggraph_cli::commands::synthesize;
use reggraph_cli::config::{parse_config, parse_graph, Command, Source, Synthetic};
use reggraph_cli::graph_io::{isomorphic, to_explicit};
use reggraph_cli::io::{read_csv, read_pgm, write_pgm};
use serde_json::json;

#[test]
fn explicit_tgv_listing_matches_library() {
    let listing = json!({
        "nodes": [
            { "id": "u", "functional": { "kind": "indicator-zero" } },
            { "id": "s", "functional": { "kind": "indicator-zero" } },
            { "id": "second", "functional": { "kind": "group-l1" } },
            { "id": "first", "functional": { "kind": "group-l1" } }
        ],
        "edges": [
            { "tail": "u", "head": "s", "theta": { "type": "grad", "shape": [4] } },
            { "tail": "s", "head": "second", "theta": { "type": "sym-grad", "shape": [4], "order": 1 }, "weight": 0.5 },
            {
                "tail": "s",
                "head": "first",
                "theta": { "type": "identity", "space": { "kind": "sym-tensor", "shape": [4], "order": 1 } }
            }
        ]
    });
    let g = parse_graph(&listing, "graph").unwrap();
    let (lib, _) = make_graph(&GraphSpec::Tgv {
        shape: vec![4],
        k: 2,
        weights: vec![0.5],
    })
    .unwrap();
    assert!(isomorphic(&g, &lib));
    let (other, _) = make_graph(&GraphSpec::Tgv {
        shape: vec![4],
        k: 2,
        weights: vec![0.25],
    })
    .unwrap();
    assert!(!isomorphic(&g, &other));
}

#[test]
fn canonical_listing_round_trip() {
    for name in GRAPH_NAMES {
        let (g, _) = make_graph(&GraphSpec::default_1d(name, 8).unwrap()).unwrap();
        let text = serde_json::to_string(&to_explicit(&g)).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let back = parse_graph(&value, "graph").unwrap();
        assert!(isomorphic(&g, &back), "{name}");
        assert_eq!(back.weights(), g.weights(), "{name}");
        assert_eq!(back.learnable_edges(), g.learnable_edges(), "{name}");
    }
}

#[test]
fn misspelled_functional_names_the_key_path() {
    let text = r#"{
        "command": "graph-info",
        "graph": {
            "nodes": [
                { "id": "u", "functional": { "kind": "indicator-zero" } },
                { "id": "d", "functional": { "kind": "group-l2" } }
            ],
            "edges": [ { "tail": "u", "head": "d", "theta": { "type": "grad", "shape": [4] } } ]
        }
    }"#;
    let err = parse_config(text).unwrap_err();
    assert!(err.path.starts_with("graph.nodes[1].functional"), "{err}");
    assert!(err.to_string().contains("group-l2"), "{err}");
}

#[test]
fn structural_errors_are_reported() {
    let unknown_node = json!({
        "nodes": [ { "id": "u", "functional": { "kind": "indicator-zero" } } ],
        "edges": [ { "tail": "u", "head": "x", "theta": { "type": "grad", "shape": [4] } } ]
    });
    let err = parse_graph(&unknown_node, "graph").unwrap_err();
    assert_eq!(err.path, "graph.edges[0].head");

    let bad_dims = json!({
        "nodes": [
            { "id": "u", "functional": { "kind": "indicator-zero" }, "space": { "kind": "scalar", "shape": [5] } },
            { "id": "d", "functional": { "kind": "group-l1" } }
        ],
        "edges": [ { "tail": "u", "head": "d", "theta": { "type": "grad", "shape": [4] } } ]
    });
    let err = parse_graph(&bad_dims, "graph").unwrap_err();
    assert_eq!(err.path, "graph");
    assert!(err.message.contains("phi codomain"), "{err}");

    let trivial_weight = json!({
        "nodes": [
            { "id": "u", "functional": { "kind": "indicator-zero" } },
            { "id": "d", "functional": { "kind": "group-l1" } }
        ],
        "edges": [ { "tail": "u", "head": "d", "theta": { "type": "grad", "shape": [4] }, "weight": 2.0, "learnable": false } ]
    });
    assert_eq!(parse_graph(&trivial_weight, "graph").unwrap_err().path, "graph.edges[0].weight");
}

#[test]
fn config_errors() {
    let err = parse_config(r#"{"command": "eval", "graph": {"name": "tv", "shape": [4]}, "synthetic": {"kind": "step", "n": 4}, "sover": {}}"#)
        .unwrap_err();
    assert!(err.message.contains("sover"), "{err}");

    let err = parse_config("{\"command\": \"eval\",\n \"graph\": }").unwrap_err();
    assert!(err.message.contains("line 2"), "{err}");

    let err = parse_config(
        r#"{"command": "eval", "graph": {"name": "tv", "shape": [4]}, "input": "a.csv", "synthetic": {"kind": "step", "n": 4}}"#,
    )
    .unwrap_err();
    assert_eq!(err.path, "input");

    let err = parse_config(r#"{"command": "solve", "graph": {"name": "tv", "shape": [4]}, "synthetic": {"kind": "step", "n": 4}}"#)
        .unwrap_err();
    assert_eq!(err.path, "problem.beta");

    let err = parse_config(r#"{"command": "eval", "graph": {"name": "tv", "shape": [4]}, "synthetic": {"kind": "step", "n": 4}, "solver": {"max_iters": "many"}}"#)
        .unwrap_err();
    assert_eq!(err.path, "solver.max_iters");

    let err = parse_config(r#"{"command": "verify", "verify": {"suites": ["linalg", "magic"]}}"#).unwrap_err();
    assert_eq!(err.path, "verify.suites[1]");

    let err = parse_config(r#"{"command": "eval", "graph": {"name": "tvv", "shape": [4]}, "synthetic": {"kind": "step", "n": 4}}"#)
        .unwrap_err();
    assert!(err.path.starts_with("graph"), "{err}");
}

#[test]
fn defaults_are_filled_in() {
    let cfg = parse_config(r#"{"command": "eval", "graph": {"name": "tgv", "shape": [6]}, "input": "x.csv"}"#).unwrap();
    assert_eq!(cfg.command, Command::Eval);
    assert_eq!(cfg.source, Some(Source::File("x.csv".into())));
    assert_eq!(cfg.solver.to_config(), reggraph::SolverConfig::default());
    assert_eq!(cfg.output, std::path::PathBuf::from("."));
    assert_eq!(cfg.bilevel.beta_range, [0.01, 1.0]);
    assert_eq!(cfg.graph.unwrap().n_nodes(), 4);
}

#[test]
fn synthetic_signals() {
    let step = synthesize(&Synthetic::Step {
        n: 4,
        at: None,
        low: 0.0,
        high: 1.0,
    })
    .unwrap();
    assert_eq!(step.values, vec![0.0, 0.0, 1.0, 1.0]);

    let pc = synthesize(&Synthetic::PiecewiseConstant {
        n: 5,
        breaks: vec![2],
        values: vec![1.0, -1.0],
    })
    .unwrap();
    assert_eq!(pc.values, vec![1.0, 1.0, -1.0, -1.0, -1.0]);

    let pa = synthesize(&Synthetic::PiecewiseAffine {
        n: 6,
        breaks: vec![3],
        segments: vec![[0.0, 1.0], [2.0, 0.0]],
    })
    .unwrap();
    assert_eq!(pa.values, vec![0.0, 0.5, 1.0, 2.0, 1.0, 0.0]);

    let sq = synthesize(&Synthetic::Square {
        shape: [4, 4],
        low: 0.0,
        high: 1.0,
    })
    .unwrap();
    assert_eq!(sq.shape, vec![4, 4]);
    assert_eq!(sq.values.iter().sum::<f64>(), 4.0);
    assert_eq!(sq.values[5], 1.0);

    assert!(synthesize(&Synthetic::PiecewiseConstant {
        n: 5,
        breaks: vec![2, 2],
        values: vec![1.0, 2.0, 3.0],
    })
    .is_err());
}

#[test]
fn csv_input_variants() {
    assert_eq!(read_csv("1\n2.5\n-3\n").unwrap(), vec![1.0, 2.5, -3.0]);
    assert_eq!(read_csv("index,value\n0,1.5\n1,2\n").unwrap(), vec![1.5, 2.0]);
    assert!(read_csv("1\nx\n").is_err());
    assert!(read_csv("value\n").is_err());
}

#[test]
fn pgm_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("img.pgm");
    let values = vec![0.0, 0.25, 0.5, 1.0, 1.5, -0.2];
    write_pgm(&path, [2, 3], &values).unwrap();
    let back = read_pgm(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(back.shape, vec![2, 3]);
    let expected = [0.0, 0.25, 0.5, 1.0, 1.0, 0.0];
    for (a, b) in back.values.iter().zip(expected) {
        assert!((a - b).abs() <= 1.0 / 65535.0);
    }

    let mut eight = b"P5\n# comment\n2 2\n255\n".to_vec();
    eight.extend_from_slice(&[0, 51, 204, 255]);
    let img = read_pgm(&eight).unwrap();
    assert_eq!(img.values, vec![0.0, 0.2, 0.8, 1.0]);
    assert!(read_pgm(b"P2\n2 2\n255\n0 1 2 3").is_err());
    assert!(read_pgm(b"P5\n2 2\n255\n\x00").is_err());
}
