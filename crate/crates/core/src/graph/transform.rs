use super::{Edge, Node, RegGraph};
use crate::error::{check_len, Error, Result};
use crate::functionals::{FunctionalKind, NodeFunctional};
use crate::library::operators::{duplicate, embed};
use crate::linalg::{LinOp, Space};

/// Zero-weight limit graph: for every edge with `alpha_e = 0` the child's
/// functional becomes the indicator of zero and the weight is reset to 1.
/// Returns the transformed graph (carrying the new weights) and the weights.
pub fn hat_transform(g: &RegGraph, alpha: &[f64]) -> Result<(RegGraph, Vec<f64>)> {
    check_len("edge weights", g.n_edges(), alpha.len())?;
    let mut nodes = g.nodes().to_vec();
    let mut edges = g.edges().to_vec();
    let mut tilde = alpha.to_vec();
    for (e, edge) in edges.iter_mut().enumerate() {
        edge.weight = alpha[e];
        if alpha[e] == 0.0 {
            let node = &mut nodes[edge.head];
            node.functional = NodeFunctional::new(FunctionalKind::IndicatorZero, &node.space)?;
            tilde[e] = 1.0;
            edge.weight = 1.0;
        }
    }
    Ok((RegGraph::new(nodes, edges, g.root())?, tilde))
}

fn prefixed(g: &RegGraph, prefix: &str, node_offset: usize) -> (Vec<Node>, Vec<Edge>) {
    let nodes = g
        .nodes()
        .iter()
        .map(|n| Node {
            id: format!("{prefix}{}", n.id),
            ..n.clone()
        })
        .collect();
    let edges = g
        .edges()
        .iter()
        .map(|e| Edge {
            tail: e.tail + node_offset,
            head: e.head + node_offset,
            ..e.clone()
        })
        .collect();
    (nodes, edges)
}

fn check_embedding(g: &RegGraph, emb: &LinOp, joint: &Space, which: &str) -> Result<()> {
    if emb.domain() != g.root_space() || emb.codomain() != joint {
        return Err(Error::DimensionMismatch {
            context: format!(
                "{which} embedding {} -> {} for root space {} and joint space {}",
                emb.domain(),
                emb.codomain(),
                g.root_space(),
                joint
            ),
            expected: joint.dim(),
            got: emb.codomain().dim(),
        });
    }
    Ok(())
}

/// Common skeleton: new root `n^`, splitting node `n^0`, and both graphs
/// hanging below `n^0`. Node order: root, split, graph 1, graph 2.
#[allow(clippy::too_many_arguments)]
fn combine(
    g1: &RegGraph,
    g2: &RegGraph,
    joint: &Space,
    split_space: &Space,
    theta0: LinOp,
    phi1: LinOp,
    phi2: LinOp,
    alpha_star: f64,
) -> Result<RegGraph> {
    let zero = |s: &Space| NodeFunctional::new(FunctionalKind::IndicatorZero, s);
    let mut nodes = vec![Node::new("root", zero(joint)?), Node::new("split", zero(split_space)?)];
    let (n1, e1) = prefixed(g1, "a.", 2);
    let (n2, e2) = prefixed(g2, "b.", 2 + g1.n_nodes());
    nodes.extend(n1);
    nodes.extend(n2);
    let r1 = 2 + g1.root();
    let r2 = 2 + g1.n_nodes() + g2.root();
    let mut edges = vec![
        Edge {
            tail: 0,
            head: 1,
            theta: theta0,
            phi: LinOp::identity(joint),
            weight: 1.0,
            learnable: false,
        },
        Edge {
            tail: 1,
            head: r1,
            theta: LinOp::identity(g1.root_space()),
            phi: phi1,
            weight: 1.0,
            learnable: false,
        },
        Edge {
            tail: 1,
            head: r2,
            theta: LinOp::identity(g2.root_space()),
            phi: phi2,
            weight: alpha_star,
            learnable: true,
        },
    ];
    edges.extend(e1);
    edges.extend(e2);
    RegGraph::new(nodes, edges, 0)
}

/// `R(u) = inf_v R1(u - alpha* v) + R2(v)` with roots embedded by `i1`, `i2`.
pub fn infconv_combine(
    g1: &RegGraph,
    g2: &RegGraph,
    alpha_star: f64,
    i1: &LinOp,
    i2: &LinOp,
    joint: &Space,
) -> Result<RegGraph> {
    if !alpha_star.is_finite() || alpha_star < 0.0 {
        return Err(Error::InvalidParameter(format!("alpha* must be >= 0, got {alpha_star}")));
    }
    check_embedding(g1, i1, joint, "first")?;
    check_embedding(g2, i2, joint, "second")?;
    combine(
        g1,
        g2,
        joint,
        joint,
        LinOp::identity(joint),
        i1.clone(),
        i2.clone(),
        alpha_star,
    )
}

/// `R(u) = R1(u) + R2(u / alpha*)` through a duplication node.
pub fn sum_combine(
    g1: &RegGraph,
    g2: &RegGraph,
    alpha_star: f64,
    i1: &LinOp,
    i2: &LinOp,
    joint: &Space,
) -> Result<RegGraph> {
    if !alpha_star.is_finite() || alpha_star <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "summation needs alpha* > 0, got {alpha_star}"
        )));
    }
    check_embedding(g1, i1, joint, "first")?;
    check_embedding(g2, i2, joint, "second")?;
    let pair = [joint.clone(), joint.clone()];
    let split = Space::product(&pair)?;
    let phi1 = i1.then(&embed(&pair, 0)?)?;
    let phi2 = i2.then(&embed(&pair, 1)?)?;
    combine(g1, g2, joint, &split, duplicate(joint, 2)?, phi1, phi2, alpha_star)
}

/// Edge joining a leaf of the host graph to the root of an appended graph.
#[derive(Clone, Debug)]
pub struct AppendEdge {
    pub theta: LinOp,
    pub phi: LinOp,
    pub weight: f64,
    pub learnable: bool,
}

/// Grafts `g2` below the leaf `leaf` of `g`.
pub fn append_graph(g: &RegGraph, leaf: usize, g2: &RegGraph, edge: AppendEdge) -> Result<RegGraph> {
    if leaf >= g.n_nodes() || !g.is_leaf(leaf) {
        return Err(Error::Precondition(format!("node {leaf} is not a leaf of the host graph")));
    }
    let mut nodes = g.nodes().to_vec();
    let mut edges = g.edges().to_vec();
    let (n2, e2) = prefixed(g2, &format!("{}.", g.node(leaf).id), g.n_nodes());
    let head = g.n_nodes() + g2.root();
    nodes.extend(n2);
    edges.push(Edge {
        tail: leaf,
        head,
        theta: edge.theta,
        phi: edge.phi,
        weight: edge.weight,
        learnable: edge.learnable,
    });
    edges.extend(e2);
    RegGraph::new(nodes, edges, g.root())
}
