//! Regularization graphs: rooted trees of node functionals joined by
//! weighted operator pairs.

mod chains;
mod invariant;
mod transform;

use std::collections::{HashMap, VecDeque};
use std::fmt;

use crate::error::{Error, Result};
use crate::functionals::NodeFunctional;
use crate::linalg::{LinOp, Space};

pub use chains::{chain_constant, enumerate_root_chains, gamma_factor, weight_ratio_constant, GammaFactor};
pub use invariant::{invariant_subspace, InvariantSubspace};
pub use transform::{append_graph, hat_transform, infconv_combine, sum_combine, AppendEdge};

#[derive(Clone, Debug)]
pub struct Node {
    pub id: String,
    pub space: Space,
    pub functional: NodeFunctional,
}

impl Node {
    pub fn new(id: impl Into<String>, functional: NodeFunctional) -> Node {
        Node {
            id: id.into(),
            space: functional.domain().clone(),
            functional,
        }
    }
}

/// Edge from parent `tail` to child `head`. `theta` maps the edge variable
/// into the child's space, `phi` into the parent's.
#[derive(Clone, Debug)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
    pub theta: LinOp,
    pub phi: LinOp,
    pub weight: f64,
    pub learnable: bool,
}

impl Edge {
    pub fn space(&self) -> &Space {
        self.theta.domain()
    }
}

/// A structural defect found by [`RegGraph::validate`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    UnknownNode { edge: usize, index: usize },
    DuplicateId(String),
    RootHasParent,
    MultipleParents { node: String },
    EdgeCount { nodes: usize, edges: usize },
    Cycle { node: String },
    Disconnected { node: String },
    DimensionMismatch {
        edge: usize,
        operator: &'static str,
        expected: String,
        got: String,
    },
    FunctionalDomain { node: String },
    TrivialWeightNotOne { edge: usize, weight: f64 },
    InvalidWeight { edge: usize, weight: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownNode { edge, index } => write!(f, "edge {edge} refers to missing node {index}"),
            Violation::DuplicateId(id) => write!(f, "duplicate node id `{id}`"),
            Violation::RootHasParent => write!(f, "root node has an incoming edge"),
            Violation::MultipleParents { node } => write!(f, "node `{node}` has several incoming edges"),
            Violation::EdgeCount { nodes, edges } => {
                write!(f, "a tree on {nodes} nodes needs {} edges, found {edges}", nodes.saturating_sub(1))
            }
            Violation::Cycle { node } => write!(f, "cycle through node `{node}`"),
            Violation::Disconnected { node } => write!(f, "node `{node}` is not reachable from the root"),
            Violation::DimensionMismatch {
                edge,
                operator,
                expected,
                got,
            } => write!(f, "edge {edge}: {operator} expected {expected}, got {got}"),
            Violation::FunctionalDomain { node } => {
                write!(f, "functional of node `{node}` acts on a different space")
            }
            Violation::TrivialWeightNotOne { edge, weight } => {
                write!(f, "edge {edge} has a trivial weight of {weight}")
            }
            Violation::InvalidWeight { edge, weight } => write!(f, "edge {edge} has invalid weight {weight}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RegGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    root: usize,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    order: Vec<usize>,
}

impl RegGraph {
    /// Builds and validates a graph.
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>, root: usize) -> Result<RegGraph> {
        let g = RegGraph::from_parts(nodes, edges, root);
        let v = g.validate();
        if v.is_empty() {
            Ok(g)
        } else {
            Err(Error::InvalidGraph(v))
        }
    }

    /// Builds without validation; navigation helpers are only meaningful
    /// once [`validate`](Self::validate) reports no violations.
    pub fn from_parts(nodes: Vec<Node>, edges: Vec<Edge>, root: usize) -> RegGraph {
        let n = nodes.len();
        let mut parent = vec![None; n];
        let mut children = vec![Vec::new(); n];
        for (ei, e) in edges.iter().enumerate() {
            if e.tail < n && e.head < n {
                if parent[e.head].is_none() {
                    parent[e.head] = Some(ei);
                }
                children[e.tail].push(ei);
            }
        }
        let mut order = Vec::with_capacity(n);
        let mut seen = vec![false; n];
        let mut queue = VecDeque::new();
        if root < n {
            queue.push_back(root);
            seen[root] = true;
        }
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &ei in &children[v] {
                let h = edges[ei].head;
                if !seen[h] {
                    seen[h] = true;
                    queue.push_back(h);
                }
            }
        }
        RegGraph {
            nodes,
            edges,
            root,
            parent,
            children,
            order,
        }
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.nodes.len();
        let mut ids = HashMap::new();
        for node in &self.nodes {
            if ids.insert(node.id.as_str(), ()).is_some() {
                out.push(Violation::DuplicateId(node.id.clone()));
            }
            if node.functional.domain() != &node.space {
                out.push(Violation::FunctionalDomain { node: node.id.clone() });
            }
        }
        let mut indeg = vec![0usize; n];
        for (ei, e) in self.edges.iter().enumerate() {
            let mut ok = true;
            for idx in [e.tail, e.head] {
                if idx >= n {
                    out.push(Violation::UnknownNode { edge: ei, index: idx });
                    ok = false;
                }
            }
            if !e.weight.is_finite() || e.weight < 0.0 {
                out.push(Violation::InvalidWeight { edge: ei, weight: e.weight });
            }
            if !e.learnable && e.weight != 1.0 {
                out.push(Violation::TrivialWeightNotOne { edge: ei, weight: e.weight });
            }
            if e.theta.domain() != e.phi.domain() {
                out.push(Violation::DimensionMismatch {
                    edge: ei,
                    operator: "phi domain",
                    expected: e.theta.domain().to_string(),
                    got: e.phi.domain().to_string(),
                });
            }
            if !ok {
                continue;
            }
            indeg[e.head] += 1;
            if e.theta.codomain() != &self.nodes[e.head].space {
                out.push(Violation::DimensionMismatch {
                    edge: ei,
                    operator: "theta codomain",
                    expected: self.nodes[e.head].space.to_string(),
                    got: e.theta.codomain().to_string(),
                });
            }
            if e.phi.codomain() != &self.nodes[e.tail].space {
                out.push(Violation::DimensionMismatch {
                    edge: ei,
                    operator: "phi codomain",
                    expected: self.nodes[e.tail].space.to_string(),
                    got: e.phi.codomain().to_string(),
                });
            }
        }
        if self.root >= n {
            out.push(Violation::Disconnected {
                node: format!("#{}", self.root),
            });
            return out;
        }
        if indeg[self.root] > 0 {
            out.push(Violation::RootHasParent);
        }
        for (v, &d) in indeg.iter().enumerate() {
            if d > 1 {
                out.push(Violation::MultipleParents {
                    node: self.nodes[v].id.clone(),
                });
            }
        }
        if self.edges.len() + 1 != n {
            out.push(Violation::EdgeCount {
                nodes: n,
                edges: self.edges.len(),
            });
        }
        let mut reach = vec![false; n];
        for &v in &self.order {
            reach[v] = true;
        }
        for v in 0..n {
            if reach[v] {
                continue;
            }
            // walk parents; returning to v means v lies on a cycle
            let mut cur = v;
            let mut steps = 0;
            let mut cyc = false;
            while let Some(pe) = self.parent[cur] {
                cur = self.edges[pe].tail;
                steps += 1;
                if cur == v {
                    cyc = true;
                    break;
                }
                if steps > n {
                    break;
                }
            }
            let node = self.nodes[v].id.clone();
            out.push(if cyc {
                Violation::Cycle { node }
            } else {
                Violation::Disconnected { node }
            });
        }
        out
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn edge(&self, i: usize) -> &Edge {
        &self.edges[i]
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn root_space(&self) -> &Space {
        &self.nodes[self.root].space
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Incoming edge of a node (`None` for the root).
    pub fn parent_edge(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    /// Outgoing edges of a node.
    pub fn child_edges(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        self.children[node].is_empty()
    }

    /// Nodes in breadth-first order from the root.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn weights(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.weight).collect()
    }

    /// Indices of edges whose weight may vary.
    pub fn learnable_edges(&self) -> Vec<usize> {
        (0..self.edges.len()).filter(|&e| self.edges[e].learnable).collect()
    }

    /// Copy with all edge weights replaced.
    pub fn with_weights(&self, alpha: &[f64]) -> Result<RegGraph> {
        crate::error::check_len("edge weights", self.edges.len(), alpha.len())?;
        let mut g = self.clone();
        for (e, &a) in g.edges.iter_mut().zip(alpha) {
            if !a.is_finite() || a < 0.0 {
                return Err(Error::InvalidParameter(format!("edge weight {a} must be finite and >= 0")));
            }
            if !e.learnable && a != 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "trivial edge weights are fixed to 1, got {a}"
                )));
            }
            e.weight = a;
        }
        Ok(g)
    }

    /// Copy with the learnable weights replaced, in edge order.
    pub fn with_learnable_weights(&self, alpha: &[f64]) -> Result<RegGraph> {
        let idx = self.learnable_edges();
        crate::error::check_len("learnable weights", idx.len(), alpha.len())?;
        let mut full = self.weights();
        for (&e, &a) in idx.iter().zip(alpha) {
            full[e] = a;
        }
        self.with_weights(&full)
    }

    /// Total dimension of all edge variables.
    pub fn edge_dim(&self) -> usize {
        self.edges.iter().map(|e| e.space().dim()).sum()
    }

    /// Offsets of the edge variables in a flat vector.
    pub fn edge_offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.edges.len() + 1);
        let mut acc = 0;
        off.push(0);
        for e in &self.edges {
            acc += e.space().dim();
            off.push(acc);
        }
        off
    }

    /// The subtree rooted at `node`, with inherited weights.
    pub fn subtree(&self, node: usize) -> RegGraph {
        let mut keep = Vec::new();
        let mut stack = vec![node];
        while let Some(v) = stack.pop() {
            keep.push(v);
            for &e in self.children[v].iter().rev() {
                stack.push(self.edges[e].head);
            }
        }
        keep.sort_unstable();
        let map: HashMap<usize, usize> = keep.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let nodes = keep.iter().map(|&v| self.nodes[v].clone()).collect();
        let edges = self
            .edges
            .iter()
            .filter(|e| map.contains_key(&e.tail) && map.contains_key(&e.head))
            .map(|e| Edge {
                tail: map[&e.tail],
                head: map[&e.head],
                ..e.clone()
            })
            .collect();
        RegGraph::from_parts(nodes, edges, map[&node])
    }

    /// The one-node graph `R(u) = Psi(u)`.
    pub fn trivial(functional: NodeFunctional) -> RegGraph {
        RegGraph::from_parts(vec![Node::new("root", functional)], Vec::new(), 0)
    }

    /// Whether every node functional is positively one-homogeneous.
    pub fn is_one_homogeneous(&self) -> bool {
        self.nodes.iter().all(|n| n.functional.kind().is_one_homogeneous())
    }
}
