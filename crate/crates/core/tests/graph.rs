use reggraph::graph::{
    append_graph, chain_constant, enumerate_root_chains, gamma_factor, hat_transform, invariant_subspace,
    weight_ratio_constant, AppendEdge, Violation,
};
use reggraph::library::operators::grad;
use reggraph::linalg::Space;
use reggraph::{Edge, Error, FunctionalKind, GraphSpec, LinOp, Node, NodeFunctional, RegGraph};

fn tgv(n: usize) -> (RegGraph, Vec<f64>) {
    reggraph::make_graph(&GraphSpec::default_1d("tgv", n).unwrap()).unwrap()
}

fn tv(n: usize) -> (RegGraph, Vec<f64>) {
    reggraph::make_graph(&GraphSpec::default_1d("tv", n).unwrap()).unwrap()
}

fn l1_node(id: &str, s: &Space) -> Node {
    Node::new(id, NodeFunctional::new(FunctionalKind::GroupL1 { weight: 1.0 }, s).unwrap())
}

fn tv_parts(n: usize) -> (Vec<Node>, Vec<Edge>) {
    let u = Space::scalar(&[n]).unwrap();
    let d = Space::sym_tensor(&[n], 1).unwrap();
    let root = Node::new("root", NodeFunctional::new(FunctionalKind::IndicatorZero, &u).unwrap());
    let edge = Edge {
        tail: 0,
        head: 1,
        theta: grad(&[n]).unwrap(),
        phi: LinOp::identity(&u),
        weight: 1.0,
        learnable: false,
    };
    (vec![root, l1_node("leaf", &d)], vec![edge])
}

#[test]
fn tgv_root_chains() {
    let (g, _) = tgv(6);
    let chains = enumerate_root_chains(&g);
    let mut sorted = chains.clone();
    sorted.sort();
    assert_eq!(sorted, vec![vec![], vec![0], vec![0, 1], vec![0, 2]]);
}

#[test]
fn chain_constants() {
    let (g, _) = tgv(6);
    assert_eq!(chain_constant(&g, &[2.0, 3.0, 1.0]).unwrap(), 6.0);
    assert_eq!(chain_constant(&g, &[0.5, 0.5, 0.5]).unwrap(), 1.0);
    let gam = gamma_factor(&g, &[1.0, 1.0, 1.0], &[1.0, 0.9, 1.0]).unwrap();
    assert!((gam.value - 0.9).abs() < 1e-15);
    assert!(gam.at_most_one);
    let gam = gamma_factor(&g, &[1.0, 1.0, 0.0], &[1.0, 1.0, 0.25]).unwrap();
    assert_eq!(gam.value, 1.0);
    assert!(gamma_factor(&g, &[1.0; 3], &[1.0, 0.0, 1.0]).is_err());
    let a = [1.0, 2.0, 0.5];
    assert_eq!(weight_ratio_constant(&g, &a, &a).unwrap(), 1.0);
    assert_eq!(weight_ratio_constant(&g, &[1.0, 2.0, 0.0], &[1.0, 1.0, 0.0]).unwrap(), 1.0);
    assert!(weight_ratio_constant(&g, &[1.0, 1.0, 1.0], &[1.0, 2.0, 1.0]).is_err());
}

#[test]
fn library_graphs_validate() {
    for name in reggraph::library::GRAPH_NAMES {
        let (g, a) = reggraph::make_graph(&GraphSpec::default_1d(name, 8).unwrap()).unwrap();
        assert!(g.validate().is_empty(), "{name}");
        assert_eq!(a.len(), g.n_edges());
        assert_eq!(g.n_edges() + 1, g.n_nodes(), "{name}");
        for (e, edge) in g.edges().iter().enumerate() {
            if !edge.learnable {
                assert_eq!(a[e], 1.0, "{name} edge {e}");
            }
        }
    }
}

#[test]
fn validate_reports_structural_defects() {
    let (nodes, edges) = tv_parts(5);
    assert!(RegGraph::new(nodes.clone(), edges.clone(), 0).is_ok());

    let g = RegGraph::from_parts(nodes.clone(), vec![], 0);
    let v = g.validate();
    assert!(v.contains(&Violation::EdgeCount { nodes: 2, edges: 0 }), "{v:?}");

    let mut dup = nodes.clone();
    dup[1].id = "root".into();
    let v = RegGraph::from_parts(dup, edges.clone(), 0).validate();
    assert!(v.contains(&Violation::DuplicateId("root".into())), "{v:?}");

    let mut bad = edges.clone();
    bad[0].weight = 2.0;
    let v = RegGraph::from_parts(nodes.clone(), bad, 0).validate();
    assert!(v.iter().any(|x| matches!(x, Violation::TrivialWeightNotOne { edge: 0, .. })), "{v:?}");

    let mut bad = edges.clone();
    bad[0].learnable = true;
    bad[0].weight = -1.0;
    let v = RegGraph::from_parts(nodes.clone(), bad, 0).validate();
    assert!(v.iter().any(|x| matches!(x, Violation::InvalidWeight { edge: 0, .. })), "{v:?}");

    let mut bad = edges.clone();
    bad[0].head = 7;
    let v = RegGraph::from_parts(nodes.clone(), bad, 0).validate();
    assert!(v.iter().any(|x| matches!(x, Violation::UnknownNode { edge: 0, index: 7 })), "{v:?}");

    let mut bad = edges.clone();
    bad[0].theta = LinOp::identity(&Space::scalar(&[3]).unwrap());
    let v = RegGraph::from_parts(nodes.clone(), bad, 0).validate();
    assert!(v.iter().any(|x| matches!(x, Violation::DimensionMismatch { edge: 0, .. })), "{v:?}");

    let mut bad = edges;
    bad[0].tail = 1;
    bad[0].head = 0;
    let v = RegGraph::from_parts(nodes, bad, 0).validate();
    assert!(v.contains(&Violation::RootHasParent), "{v:?}");

    match RegGraph::new(vec![], vec![], 0) {
        Err(Error::InvalidGraph(v)) => assert!(!v.is_empty()),
        other => panic!("expected invalid graph, got {other:?}"),
    }
}

#[test]
fn navigation_helpers() {
    let (g, _) = tgv(6);
    assert_eq!(g.root(), 0);
    assert_eq!(g.parent_edge(0), None);
    assert_eq!(g.order()[0], 0);
    assert_eq!(g.learnable_edges(), vec![2]);
    let leaves = (0..g.n_nodes()).filter(|&v| g.is_leaf(v)).count();
    assert_eq!(leaves, 2);
    assert_eq!(g.edge_offsets().last().copied(), Some(g.edge_dim()));
    let h = g.with_learnable_weights(&[0.3]).unwrap();
    assert_eq!(h.weights(), vec![1.0, 1.0, 0.3]);
    assert!(g.with_weights(&[1.0, 1.0]).is_err());
    assert!(g.is_one_homogeneous());
}

#[test]
fn hat_transform_replaces_zero_weight_children() {
    let (g, _) = tgv(6);
    let (hat, tilde) = hat_transform(&g, &[1.0, 1.0, 0.0]).unwrap();
    assert_eq!(tilde, vec![1.0, 1.0, 1.0]);
    let head = g.edge(2).head;
    assert!(hat.node(head).functional.is_indicator_zero());
    assert!(!g.node(head).functional.is_indicator_zero());
    assert!(hat.validate().is_empty());

    let (same, tilde) = hat_transform(&g, &[1.0, 1.0, 0.4]).unwrap();
    assert_eq!(tilde, vec![1.0, 1.0, 0.4]);
    assert!(!same.node(head).functional.is_indicator_zero());
}

#[test]
fn invariant_subspace_dimensions() {
    let (g, a) = tv(8);
    let inv = invariant_subspace(&g, &a).unwrap();
    assert_eq!(inv.dim(), 1);
    let (g, a) = tgv(8);
    assert_eq!(invariant_subspace(&g, &a).unwrap().dim(), 2);
    assert_eq!(invariant_subspace(&g, &[1.0, 1.0, 0.0]).unwrap().dim(), 1);
    // the kernel of the gradient is the constants
    let b = &inv.basis_l;
    let gb = grad(&[8]).unwrap().apply(b.column(0).as_slice()).unwrap();
    assert!(gb.iter().all(|v| v.abs() < 1e-10));
}

#[test]
fn append_graph_grafts_below_a_leaf() {
    let (g, _) = tv(6);
    let leaf = (0..g.n_nodes()).find(|&v| g.is_leaf(v)).unwrap();
    let s = g.node(leaf).space.clone();
    let extra = RegGraph::trivial(NodeFunctional::new(FunctionalKind::HalfSquaredL2 { weight: 1.0 }, &s).unwrap());
    let edge = AppendEdge {
        theta: LinOp::identity(&s),
        phi: LinOp::identity(&s),
        weight: 0.5,
        learnable: true,
    };
    let h = append_graph(&g, leaf, &extra, edge.clone()).unwrap();
    assert_eq!(h.n_nodes(), g.n_nodes() + 1);
    assert!(!h.is_leaf(leaf));
    assert!(h.validate().is_empty());
    assert!(h.nodes().iter().any(|n| n.id.starts_with(&format!("{}.", g.node(leaf).id))));
    assert!(append_graph(&g, g.root(), &extra, edge).is_err());
}

#[test]
fn subtree_and_trivial_graphs() {
    let (g, _) = tgv(6);
    let child = g.edge(0).head;
    let sub = g.subtree(child);
    assert_eq!(sub.n_edges(), 2);
    assert!(sub.validate().is_empty());
    let t = RegGraph::trivial(NodeFunctional::new(FunctionalKind::IndicatorZero, &Space::scalar(&[4]).unwrap()).unwrap());
    assert_eq!((t.n_nodes(), t.n_edges()), (1, 0));
}
