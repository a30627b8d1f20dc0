use serde::{Deserialize, Serialize};

use super::operators::{grad, grad_k, make_operator, sym_grad, OperatorSpec};
use crate::error::{Error, Result};
use crate::functionals::{FunctionalKind, NodeFunctional};
use crate::graph::{Edge, Node, RegGraph};
use crate::linalg::{analyze, LinOp, Space, KERNEL_TOL};

/// Parseval frame standing in for a multiscale directional transform.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameKind {
    Identity,
    #[default]
    Haar,
    Dct,
}

impl FrameKind {
    fn operator(self, shape: &[usize]) -> Result<LinOp> {
        match self {
            FrameKind::Identity => Ok(LinOp::identity(&Space::scalar(shape)?)),
            FrameKind::Haar => make_operator(&OperatorSpec::Haar { shape: shape.to_vec() }),
            FrameKind::Dct => make_operator(&OperatorSpec::Dct { shape: shape.to_vec() }),
        }
    }
}

fn two() -> usize {
    2
}

/// Named catalogue graph with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Tv {
        shape: Vec<usize>,
    },
    TvkInfconv {
        shape: Vec<usize>,
        k1: usize,
        k2: usize,
        alpha: f64,
    },
    /// Order-`k` TGV; `weights[j]` sits on the `j`-th symmetrized-gradient edge.
    Tgv {
        shape: Vec<usize>,
        #[serde(default = "two")]
        k: usize,
        #[serde(default)]
        weights: Vec<f64>,
    },
    TgvFrameInfconv {
        shape: Vec<usize>,
        alpha0: f64,
        alpha1: f64,
        #[serde(default)]
        frame: FrameKind,
    },
    TvLq {
        shape: Vec<usize>,
        q: f64,
        alpha: f64,
    },
    Spatiotemporal {
        shape: Vec<usize>,
        beta1: Vec<f64>,
        beta2: Vec<f64>,
        alpha: f64,
    },
    SumFg {
        shape: Vec<usize>,
        f: FunctionalKind,
        g: FunctionalKind,
    },
    /// One-dimensional; `a` is the column of the pointwise matrix.
    SecondOrderGeneral {
        n: usize,
        a: Vec<f64>,
        alpha: f64,
    },
    TightFrames {
        shape: Vec<usize>,
        frame1: FrameKind,
        frame2: FrameKind,
        alpha: f64,
    },
    TvPwl {
        shape: Vec<usize>,
        gamma: Vec<f64>,
        alpha: f64,
    },
}

pub const GRAPH_NAMES: [&str; 10] = [
    "tv",
    "tvk_infconv",
    "tgv",
    "tgv_frame_infconv",
    "tv_lq",
    "spatiotemporal",
    "sum_fg",
    "second_order_general",
    "tight_frames",
    "tv_pwl",
];

impl GraphSpec {
    /// Catalogue entry with default parameters on a 1-D grid of length `n`.
    pub fn default_1d(name: &str, n: usize) -> Result<GraphSpec> {
        let shape = vec![n];
        Ok(match name {
            "tv" => GraphSpec::Tv { shape },
            "tvk_infconv" => GraphSpec::TvkInfconv {
                shape,
                k1: 1,
                k2: 2,
                alpha: 1.0,
            },
            "tgv" => GraphSpec::Tgv {
                shape,
                k: 2,
                weights: vec![1.0],
            },
            "tgv_frame_infconv" => GraphSpec::TgvFrameInfconv {
                shape,
                alpha0: 1.0,
                alpha1: 1.0,
                frame: FrameKind::Haar,
            },
            "tv_lq" => GraphSpec::TvLq { shape, q: 2.0, alpha: 1.0 },
            "spatiotemporal" => GraphSpec::Spatiotemporal {
                shape,
                beta1: vec![1.0],
                beta2: vec![0.5],
                alpha: 1.0,
            },
            "sum_fg" => GraphSpec::SumFg {
                shape,
                f: FunctionalKind::GroupL1 { weight: 1.0 },
                g: FunctionalKind::GroupL1 { weight: 0.5 },
            },
            "second_order_general" => GraphSpec::SecondOrderGeneral {
                n,
                a: vec![1.0],
                alpha: 1.0,
            },
            "tight_frames" => GraphSpec::TightFrames {
                shape,
                frame1: FrameKind::Identity,
                frame2: FrameKind::Dct,
                alpha: 1.0,
            },
            "tv_pwl" => GraphSpec::TvPwl {
                shape,
                gamma: vec![0.5],
                alpha: 1.0,
            },
            other => return Err(Error::UnknownGraph(other.to_string())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            GraphSpec::Tv { .. } => "tv",
            GraphSpec::TvkInfconv { .. } => "tvk_infconv",
            GraphSpec::Tgv { .. } => "tgv",
            GraphSpec::TgvFrameInfconv { .. } => "tgv_frame_infconv",
            GraphSpec::TvLq { .. } => "tv_lq",
            GraphSpec::Spatiotemporal { .. } => "spatiotemporal",
            GraphSpec::SumFg { .. } => "sum_fg",
            GraphSpec::SecondOrderGeneral { .. } => "second_order_general",
            GraphSpec::TightFrames { .. } => "tight_frames",
            GraphSpec::TvPwl { .. } => "tv_pwl",
        }
    }
}

struct Builder {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl Builder {
    fn new() -> Builder {
        Builder {
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    fn node(&mut self, id: &str, kind: FunctionalKind, space: &Space) -> Result<usize> {
        self.nodes.push(Node::new(id, NodeFunctional::new(kind, space)?));
        Ok(self.nodes.len() - 1)
    }

    fn split(&mut self, id: &str, space: &Space) -> Result<usize> {
        self.node(id, FunctionalKind::IndicatorZero, space)
    }

    /// Edge whose backward operator is the identity on the parent space.
    fn edge(&mut self, tail: usize, head: usize, theta: LinOp, weight: Option<f64>) {
        let phi = LinOp::identity(theta.domain());
        self.edges.push(Edge {
            tail,
            head,
            theta,
            phi,
            weight: weight.unwrap_or(1.0),
            learnable: weight.is_some(),
        });
    }

    fn finish(self) -> Result<(RegGraph, Vec<f64>)> {
        let g = RegGraph::new(self.nodes, self.edges, 0)?;
        let w = g.weights();
        Ok((g, w))
    }
}

fn l1() -> FunctionalKind {
    FunctionalKind::GroupL1 { weight: 1.0 }
}

fn check_weight(a: f64, what: &str) -> Result<()> {
    if !a.is_finite() || a < 0.0 {
        return Err(Error::InvalidParameter(format!("{what} must be finite and >= 0, got {a}")));
    }
    Ok(())
}

/// Builds a catalogue graph; returns it with its full edge-weight vector.
pub fn make_graph(spec: &GraphSpec) -> Result<(RegGraph, Vec<f64>)> {
    let mut b = Builder::new();
    match spec {
        GraphSpec::Tv { shape } => {
            let u = Space::scalar(shape)?;
            let root = b.split("root", &u)?;
            let leaf = b.node("leaf", l1(), &Space::sym_tensor(shape, 1)?)?;
            b.edge(root, leaf, grad(shape)?, None);
        }
        GraphSpec::TvkInfconv { shape, k1, k2, alpha } => {
            check_weight(*alpha, "alpha")?;
            if *k1 == 0 || *k2 == 0 {
                return Err(Error::InvalidParameter("derivative orders must be >= 1".into()));
            }
            let u = Space::scalar(shape)?;
            let root = b.split("root", &u)?;
            let l1n = b.node("leaf1", l1(), &Space::sym_tensor(shape, *k1)?)?;
            let l2n = b.node("leaf2", l1(), &Space::sym_tensor(shape, *k2)?)?;
            b.edge(root, l1n, grad_k(shape, *k1)?, None);
            b.edge(root, l2n, grad_k(shape, *k2)?, Some(*alpha));
        }
        GraphSpec::Tgv { shape, k, weights } => {
            if *k == 0 {
                return Err(Error::InvalidParameter("tgv order must be >= 1".into()));
            }
            let weights = if weights.is_empty() { vec![1.0; k - 1] } else { weights.clone() };
            if weights.len() != k - 1 {
                return Err(Error::DimensionMismatch {
                    context: "tgv weights".into(),
                    expected: k - 1,
                    got: weights.len(),
                });
            }
            for w in &weights {
                check_weight(*w, "tgv weight")?;
            }
            let u = Space::scalar(shape)?;
            let root = b.split("root", &u)?;
            if *k == 1 {
                let leaf = b.node("leaf", l1(), &Space::sym_tensor(shape, 1)?)?;
                b.edge(root, leaf, grad(shape)?, None);
            } else {
                let mut cur = b.split("split1", &Space::sym_tensor(shape, 1)?)?;
                b.edge(root, cur, grad(shape)?, None);
                for order in 1..*k {
                    let sp = Space::sym_tensor(shape, order)?;
                    let id_leaf = b.node(&format!("leaf{order}"), l1(), &sp)?;
                    b.edge(cur, id_leaf, LinOp::identity(&sp), None);
                    let next_space = Space::sym_tensor(shape, order + 1)?;
                    let next = if order + 1 == *k {
                        b.node(&format!("leaf{}", order + 1), l1(), &next_space)?
                    } else {
                        b.split(&format!("split{}", order + 1), &next_space)?
                    };
                    b.edge(cur, next, sym_grad(shape, order)?, Some(weights[order - 1]));
                    cur = next;
                }
            }
        }
        GraphSpec::TgvFrameInfconv {
            shape,
            alpha0,
            alpha1,
            frame,
        } => {
            check_weight(*alpha0, "alpha0")?;
            check_weight(*alpha1, "alpha1")?;
            let u = Space::scalar(shape)?;
            let root = b.split("root", &u)?;
            let s1 = Space::sym_tensor(shape, 1)?;
            let split = b.split("split1", &s1)?;
            let w = frame.operator(shape)?;
            let frame_leaf = b.node("frame", l1(), w.codomain())?;
            let id_leaf = b.node("leaf1", l1(), &s1)?;
            let sym_leaf = b.node("leaf2", l1(), &Space::sym_tensor(shape, 2)?)?;
            b.edge(root, split, grad(shape)?, None);
            b.edge(root, frame_leaf, w, Some(*alpha0));
            b.edge(split, id_leaf, LinOp::identity(&s1), None);
            b.edge(split, sym_leaf, sym_grad(shape, 1)?, Some(*alpha1));
        }
        GraphSpec::TvLq { shape, q, alpha } => {
            tv_with_split_leaf(&mut b, shape, FunctionalKind::LqNorm { q: *q, weight: 1.0 }, *alpha)?;
        }
        GraphSpec::TvPwl { shape, gamma, alpha } => {
            tv_with_split_leaf(&mut b, shape, FunctionalKind::IndicatorBall { radius: gamma.clone() }, *alpha)?;
        }
        GraphSpec::Spatiotemporal {
            shape,
            beta1,
            beta2,
            alpha,
        } => {
            check_weight(*alpha, "alpha")?;
            let u = Space::scalar(shape)?;
            let s1 = Space::sym_tensor(shape, 1)?;
            let root = b.split("root", &u)?;
            let a = b.node("leaf1", FunctionalKind::GroupL1Aniso { weights: beta1.clone() }, &s1)?;
            let c = b.node("leaf2", FunctionalKind::GroupL1Aniso { weights: beta2.clone() }, &s1)?;
            b.edge(root, a, grad(shape)?, None);
            b.edge(root, c, grad(shape)?, Some(*alpha));
        }
        GraphSpec::SumFg { shape, f, g } => {
            let u = Space::scalar(shape)?;
            let root = b.split("root", &u)?;
            let theta = LinOp::stack(&[grad(shape)?, grad_k(shape, 2)?])?;
            let kind = FunctionalKind::CompositeFg {
                f: Box::new(f.clone()),
                g: Box::new(g.clone()),
            };
            let leaf = b.node("leaf", kind, &theta.codomain().clone())?;
            b.edge(root, leaf, theta, None);
        }
        GraphSpec::SecondOrderGeneral { n, a, alpha } => {
            check_weight(*alpha, "alpha")?;
            let ag = make_operator(&OperatorSpec::AGrad { n: *n, a: a.clone() })?;
            let an = analyze(&ag, KERNEL_TOL)?;
            if an.kernel_dim() != 1 {
                return Err(Error::InvalidParameter(format!(
                    "A grad must annihilate exactly the constants, kernel has dimension {}",
                    an.kernel_dim()
                )));
            }
            let shape = [*n];
            let s1 = Space::sym_tensor(&shape, 1)?;
            let root = b.split("root", &Space::scalar(&shape)?)?;
            let split = b.split("split1", &s1)?;
            let id_leaf = b.node("leaf1", l1(), &s1)?;
            let a_leaf = b.node("leaf2", l1(), &ag.codomain().clone())?;
            b.edge(root, split, grad(&shape)?, None);
            b.edge(split, id_leaf, LinOp::identity(&s1), None);
            b.edge(split, a_leaf, ag, Some(*alpha));
        }
        GraphSpec::TightFrames {
            shape,
            frame1,
            frame2,
            alpha,
        } => {
            check_weight(*alpha, "alpha")?;
            let u = Space::scalar(shape)?;
            let root = b.split("root", &u)?;
            let w1 = frame1.operator(shape)?;
            let w2 = frame2.operator(shape)?;
            let a = b.node("leaf1", l1(), &w1.codomain().clone())?;
            let c = b.node("leaf2", l1(), &w2.codomain().clone())?;
            b.edge(root, a, w1, None);
            b.edge(root, c, w2, Some(*alpha));
        }
    }
    b.finish()
}

/// `inf_w |grad u - alpha w| + Psi(w)` through a splitting node.
fn tv_with_split_leaf(b: &mut Builder, shape: &[usize], third: FunctionalKind, alpha: f64) -> Result<()> {
    check_weight(alpha, "alpha")?;
    let s1 = Space::sym_tensor(shape, 1)?;
    let root = b.split("root", &Space::scalar(shape)?)?;
    let split = b.split("split1", &s1)?;
    let id_leaf = b.node("leaf1", l1(), &s1)?;
    let leaf2 = b.node("leaf2", third, &s1)?;
    b.edge(root, split, grad(shape)?, None);
    b.edge(split, id_leaf, LinOp::identity(&s1), None);
    b.edge(split, leaf2, LinOp::identity(&s1), Some(alpha));
    Ok(())
}
