//! Explicit node/edge listings of regularization graphs.

use std::collections::HashMap;

use reggraph::{make_operator, Edge, FunctionalKind, LinOp, Node, NodeFunctional, OperatorSpec, RegGraph, Space, SpaceSpec};
use serde::{Deserialize, Serialize};

use crate::config::ConfigError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitGraph {
    /// Defaults to the first node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<String>,
    pub nodes: Vec<ExplicitNode>,
    #[serde(default)]
    pub edges: Vec<ExplicitEdge>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitNode {
    pub id: String,
    pub functional: FunctionalKind,
    /// Inferred from the adjacent edges when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<SpaceSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitEdge {
    pub tail: String,
    pub head: String,
    pub theta: OperatorSpec,
    /// Identity on the edge space when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<OperatorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    /// Defaults to true when a weight is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learnable: Option<bool>,
}

fn err(path: String, e: impl ToString) -> ConfigError {
    ConfigError::new(path, e.to_string())
}

pub fn build_explicit(listing: &ExplicitGraph, prefix: &str) -> Result<RegGraph, ConfigError> {
    let mut index = HashMap::new();
    for (i, n) in listing.nodes.iter().enumerate() {
        if index.insert(n.id.as_str(), i).is_some() {
            return Err(err(format!("{prefix}.nodes[{i}].id"), format!("duplicate node id `{}`", n.id)));
        }
    }
    if listing.nodes.is_empty() {
        return Err(err(format!("{prefix}.nodes"), "a graph needs at least one node"));
    }
    let lookup = |id: &str, path: String| -> Result<usize, ConfigError> {
        index.get(id).copied().ok_or_else(|| err(path, format!("unknown node `{id}`")))
    };

    let mut ops = Vec::with_capacity(listing.edges.len());
    for (i, e) in listing.edges.iter().enumerate() {
        let path = format!("{prefix}.edges[{i}]");
        let tail = lookup(&e.tail, format!("{path}.tail"))?;
        let head = lookup(&e.head, format!("{path}.head"))?;
        let theta = make_operator(&e.theta).map_err(|x| err(format!("{path}.theta"), x))?;
        let phi = match &e.phi {
            Some(spec) => make_operator(spec).map_err(|x| err(format!("{path}.phi"), x))?,
            None => LinOp::identity(theta.domain()),
        };
        ops.push((tail, head, theta, phi));
    }

    let mut nodes = Vec::with_capacity(listing.nodes.len());
    for (i, n) in listing.nodes.iter().enumerate() {
        let path = format!("{prefix}.nodes[{i}]");
        let space = match &n.space {
            Some(s) => Space::from_spec(s).map_err(|x| err(format!("{path}.space"), x))?,
            None => ops
                .iter()
                .find(|o| o.1 == i)
                .map(|o| o.2.codomain().clone())
                .or_else(|| ops.iter().find(|o| o.0 == i).map(|o| o.3.codomain().clone()))
                .ok_or_else(|| err(format!("{path}.space"), "isolated node needs an explicit space"))?,
        };
        let functional =
            NodeFunctional::new(n.functional.clone(), &space).map_err(|x| err(format!("{path}.functional"), x))?;
        nodes.push(Node::new(n.id.clone(), functional));
    }

    let mut edges = Vec::with_capacity(ops.len());
    for (i, ((tail, head, theta, phi), e)) in ops.into_iter().zip(&listing.edges).enumerate() {
        let learnable = e.learnable.unwrap_or(e.weight.is_some());
        let weight = e.weight.unwrap_or(1.0);
        if !learnable && weight != 1.0 {
            return Err(err(
                format!("{prefix}.edges[{i}].weight"),
                format!("trivial edge must have weight 1, got {weight}"),
            ));
        }
        edges.push(Edge {
            tail,
            head,
            theta,
            phi,
            weight,
            learnable,
        });
    }
    let root = match &listing.root {
        Some(id) => lookup(id, format!("{prefix}.root"))?,
        None => 0,
    };
    RegGraph::new(nodes, edges, root).map_err(|x| err(prefix.to_string(), x))
}

/// Canonical listing: every space and `phi` explicit, weights only on
/// learnable edges.
pub fn to_explicit(g: &RegGraph) -> ExplicitGraph {
    let nodes = g
        .nodes()
        .iter()
        .map(|n| ExplicitNode {
            id: n.id.clone(),
            functional: n.functional.kind().clone(),
            space: Some(n.space.spec().clone()),
        })
        .collect();
    let edges = g
        .edges()
        .iter()
        .map(|e| ExplicitEdge {
            tail: g.node(e.tail).id.clone(),
            head: g.node(e.head).id.clone(),
            theta: e.theta.spec().clone(),
            phi: Some(e.phi.spec().clone()),
            weight: e.learnable.then_some(e.weight),
            learnable: e.learnable.then_some(true),
        })
        .collect();
    ExplicitGraph {
        root: Some(g.node(g.root()).id.clone()),
        nodes,
        edges,
    }
}

fn json(v: &impl Serialize) -> String {
    serde_json::to_string(v).unwrap_or_default()
}

fn signature(g: &RegGraph, node: usize) -> String {
    let n = g.node(node);
    let mut kids: Vec<String> = g
        .child_edges(node)
        .iter()
        .map(|&ei| {
            let e = g.edge(ei);
            format!(
                "<{}|{}|{}|{}|{}>",
                json(e.theta.spec()),
                json(e.phi.spec()),
                e.weight,
                e.learnable,
                signature(g, e.head)
            )
        })
        .collect();
    kids.sort();
    format!("({}:{}[{}])", json(n.functional.kind()), json(n.space.spec()), kids.join(","))
}

/// Same tree up to node ids and child order.
pub fn isomorphic(a: &RegGraph, b: &RegGraph) -> bool {
    signature(a, a.root()) == signature(b, b.root())
}
