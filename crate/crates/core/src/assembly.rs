//! Block realization of `Lambda_alpha`, its predual, and the flattened
//! saddle-point form handed to the solver.

use crate::error::{check_len, Error, Result};
use crate::functionals::{FunctionalKind, NodeFunctional};
use crate::graph::RegGraph;
use crate::linalg::vec_ops::{conjugate_gradient_floor, dot, norm};
use crate::linalg::{power_iteration, LinOp};

/// One nonzero block of a node row: `coeff * op` applied to an edge variable.
#[derive(Clone, Debug)]
pub struct Block {
    pub edge: usize,
    pub op: LinOp,
    pub coeff: f64,
}

#[derive(Clone, Debug)]
pub struct NodeRow {
    pub node: usize,
    pub blocks: Vec<Block>,
}

/// `(Lambda_alpha w)_n = Theta_(n-,n) w_(n-,n) - sum alpha_(n,m) Phi_(n,m) w_(n,m)`
/// together with the node functionals; the root row is shifted by `u`.
#[derive(Clone, Debug)]
pub struct AssembledProblem {
    pub graph: RegGraph,
    pub alpha: Vec<f64>,
    pub rows: Vec<NodeRow>,
    pub node_offsets: Vec<usize>,
    pub edge_offsets: Vec<usize>,
}

pub fn assemble(g: &RegGraph, alpha: &[f64]) -> Result<AssembledProblem> {
    check_len("edge weights", g.n_edges(), alpha.len())?;
    let violations = g.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidGraph(violations));
    }
    let mut rows = Vec::with_capacity(g.n_nodes());
    let mut node_offsets = vec![0];
    for n in 0..g.n_nodes() {
        let mut blocks = Vec::new();
        if let Some(e) = g.parent_edge(n) {
            blocks.push(Block {
                edge: e,
                op: g.edge(e).theta.clone(),
                coeff: 1.0,
            });
        }
        for &e in g.child_edges(n) {
            blocks.push(Block {
                edge: e,
                op: g.edge(e).phi.clone(),
                coeff: -alpha[e],
            });
        }
        rows.push(NodeRow { node: n, blocks });
        node_offsets.push(node_offsets[n] + g.node(n).space.dim());
    }
    Ok(AssembledProblem {
        graph: g.clone(),
        alpha: alpha.to_vec(),
        rows,
        node_offsets,
        edge_offsets: g.edge_offsets(),
    })
}

impl AssembledProblem {
    pub fn node_dim(&self) -> usize {
        *self.node_offsets.last().unwrap()
    }

    pub fn edge_dim(&self) -> usize {
        *self.edge_offsets.last().unwrap()
    }

    fn edge_slice<'a>(&self, w: &'a [f64], e: usize) -> &'a [f64] {
        &w[self.edge_offsets[e]..self.edge_offsets[e + 1]]
    }

    /// `Lambda_alpha w` as one flat vector over nodes.
    pub fn apply(&self, w: &[f64]) -> Result<Vec<f64>> {
        check_len("edge variables", self.edge_dim(), w.len())?;
        let mut out = vec![0.0; self.node_dim()];
        let mut scratch = Vec::new();
        for row in &self.rows {
            let seg = &mut out[self.node_offsets[row.node]..self.node_offsets[row.node + 1]];
            for b in &row.blocks {
                b.op.apply_add(self.edge_slice(w, b.edge), b.coeff, seg, &mut scratch);
            }
        }
        Ok(out)
    }

    /// `Lambda_alpha^# v`: per edge `Theta^T v_head - alpha Phi^T v_tail`.
    pub fn apply_predual(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("node variables", self.node_dim(), v.len())?;
        let mut out = vec![0.0; self.edge_dim()];
        let mut scratch = Vec::new();
        for row in &self.rows {
            let seg = &v[self.node_offsets[row.node]..self.node_offsets[row.node + 1]];
            for b in &row.blocks {
                let dst = &mut out[self.edge_offsets[b.edge]..self.edge_offsets[b.edge + 1]];
                b.op.adjoint_add(seg, b.coeff, dst, &mut scratch);
            }
        }
        Ok(out)
    }

    /// `sum_n Psi_n((Lambda w)_n + [n = root] u)`.
    pub fn objective(&self, u: &[f64], w: &[f64]) -> Result<f64> {
        check_len("root input", self.graph.root_space().dim(), u.len())?;
        let mut r = self.apply(w)?;
        let root = self.graph.root();
        for (i, ui) in u.iter().enumerate() {
            r[self.node_offsets[root] + i] += ui;
        }
        Ok((0..self.graph.n_nodes())
            .map(|n| {
                self.graph
                    .node(n)
                    .functional
                    .eval_unchecked(&r[self.node_offsets[n]..self.node_offsets[n + 1]])
            })
            .sum())
    }

    /// Number of nonzero blocks in the row of node `n`.
    pub fn row_nnz(&self, n: usize) -> usize {
        self.rows[n].blocks.len()
    }

    /// Dense `Lambda_alpha` (nodes x edges), for small problems.
    pub fn to_dense(&self) -> Result<nalgebra::DMatrix<f64>> {
        let (m, n) = (self.node_dim(), self.edge_dim());
        if m > crate::linalg::DENSE_LIMIT || n > crate::linalg::DENSE_LIMIT {
            return Err(Error::TooLarge { rows: m, cols: n });
        }
        let mut a = nalgebra::DMatrix::zeros(m, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.apply(&e)?;
            for i in 0..m {
                a[(i, j)] = col[i];
            }
            e[j] = 0.0;
        }
        Ok(a)
    }
}

/// `sup { <u, v_root> - sum_n Psi_n^*(v_n) : Lambda^# v = 0 }`.
#[derive(Clone, Debug)]
pub struct PredualProblem {
    pub assembled: AssembledProblem,
    pub u: Vec<f64>,
}

/// Dual point after projection onto `ker Lambda^#` and scaling into the
/// conjugate domains.
#[derive(Clone, Debug)]
pub struct ProjectedDual {
    pub v: Vec<f64>,
    pub value: f64,
    pub projection_converged: bool,
    pub constraint_residual: f64,
}

pub fn assemble_predual(g: &RegGraph, alpha: &[f64], u: &[f64]) -> Result<PredualProblem> {
    let assembled = assemble(g, alpha)?;
    check_len("root input", g.root_space().dim(), u.len())?;
    Ok(PredualProblem {
        assembled,
        u: u.to_vec(),
    })
}

impl PredualProblem {
    /// Edge-indexed constraint residual `Lambda^# v`.
    pub fn constraint(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.assembled.apply_predual(v)
    }

    /// `<u, v_root> - sum Psi_n^*(v_n)` without checking the constraint.
    pub fn value(&self, v: &[f64]) -> Result<f64> {
        let ap = &self.assembled;
        check_len("node variables", ap.node_dim(), v.len())?;
        let root = ap.graph.root();
        let vr = &v[ap.node_offsets[root]..ap.node_offsets[root + 1]];
        let mut val = dot(&self.u, vr);
        for n in 0..ap.graph.n_nodes() {
            val -= ap
                .graph
                .node(n)
                .functional
                .conjugate_unchecked(&v[ap.node_offsets[n]..ap.node_offsets[n + 1]]);
        }
        Ok(val)
    }

    /// Least-squares projection onto `ker Lambda^#` followed by the largest
    /// scaling in `[0, 1]` that keeps every conjugate finite.
    pub fn project(&self, v: &[f64]) -> Result<ProjectedDual> {
        let ap = &self.assembled;
        check_len("node variables", ap.node_dim(), v.len())?;
        let rhs = ap.apply_predual(v)?;
        let normal = |z: &[f64], out: &mut [f64]| {
            let lz = ap.apply(z).expect("sized");
            let back = ap.apply_predual(&lz).expect("sized");
            out.copy_from_slice(&back);
        };
        let lip = power_iteration(rhs.len(), 200, 0x5eed, normal).value;
        // the normal-equation residual is the constraint residual after projection
        let scale = lip * norm(v);
        let cg = conjugate_gradient_floor(normal, &rhs, None, 1e-10, 1e-12 * scale, 500);
        let lz = ap.apply(&cg.x)?;
        let mut p: Vec<f64> = v.iter().zip(&lz).map(|(a, b)| a - b).collect();
        let mut t: f64 = 1.0;
        for n in 0..ap.graph.n_nodes() {
            let seg = &p[ap.node_offsets[n]..ap.node_offsets[n + 1]];
            t = t.min(ap.graph.node(n).functional.conjugate_domain_scale(seg));
        }
        p.iter_mut().for_each(|x| *x *= t);
        let res = ap.apply_predual(&p)?;
        let constraint_residual = norm(&res);
        Ok(ProjectedDual {
            value: self.value(&p)?,
            v: p,
            projection_converged: constraint_residual <= 1e-9 * scale.max(1e-300),
            constraint_residual,
        })
    }
}

/// One term `coeff * op x_segment` of a dual block.
#[derive(Clone, Debug)]
pub struct Term {
    pub segment: usize,
    pub op: LinOp,
    pub coeff: f64,
}

/// `F_j(sum_terms + offset)`, dualized as `<A_j x + c_j, y_j> - F_j^*(y_j)`.
#[derive(Clone, Debug)]
pub struct DualBlock {
    pub label: String,
    pub terms: Vec<Term>,
    pub offset: Vec<f64>,
    pub functional: NodeFunctional,
}

/// `min_x max_y sum_j <A_j x + c_j, y_j> - F_j^*(y_j)`.
#[derive(Clone, Debug)]
pub struct SaddleSpec {
    /// Sizes of the primal segments: the edge variables, then `u` if present.
    pub segments: Vec<usize>,
    pub blocks: Vec<DualBlock>,
    pub n_edges: usize,
    pub u_segment: Option<usize>,
}

/// Quadratic data term `(beta-free) 1/2 |K u - f|^2` for Tikhonov problems.
#[derive(Clone, Debug)]
pub struct DataFit {
    pub k: LinOp,
    pub f: Vec<f64>,
    /// Regularization parameter multiplying the graph functional.
    pub beta: f64,
}

pub fn flatten_saddle(ap: &AssembledProblem, u: Option<&[f64]>, extra: Option<&DataFit>) -> Result<SaddleSpec> {
    let g = &ap.graph;
    let mut segments: Vec<usize> = g.edges().iter().map(|e| e.space().dim()).collect();
    let root_dim = g.root_space().dim();
    let (scale, u_segment) = match extra {
        Some(d) => {
            if !(d.beta.is_finite() && d.beta > 0.0) {
                return Err(Error::InvalidParameter(format!("beta must be positive, got {}", d.beta)));
            }
            if d.k.domain() != g.root_space() {
                return Err(Error::DimensionMismatch {
                    context: "forward operator domain vs root space".into(),
                    expected: root_dim,
                    got: d.k.domain().dim(),
                });
            }
            check_len("data", d.k.codomain().dim(), d.f.len())?;
            segments.push(root_dim);
            (d.beta, Some(segments.len() - 1))
        }
        None => (1.0, None),
    };
    let mut blocks = Vec::new();
    for row in &ap.rows {
        let node = g.node(row.node);
        let mut terms: Vec<Term> = row
            .blocks
            .iter()
            .map(|b| Term {
                segment: b.edge,
                op: b.op.clone(),
                coeff: b.coeff,
            })
            .collect();
        let mut offset = vec![0.0; node.space.dim()];
        if row.node == g.root() {
            match (u_segment, u) {
                (Some(s), _) => terms.push(Term {
                    segment: s,
                    op: LinOp::identity(g.root_space()),
                    coeff: 1.0,
                }),
                (None, Some(u)) => {
                    check_len("root input", root_dim, u.len())?;
                    offset.copy_from_slice(u);
                }
                (None, None) => {
                    return Err(Error::InvalidParameter("evaluation needs an input u".into()));
                }
            }
        }
        let functional = if scale == 1.0 {
            node.functional.clone()
        } else {
            node.functional.scaled(scale)?
        };
        blocks.push(DualBlock {
            label: node.id.clone(),
            terms,
            offset,
            functional,
        });
    }
    if let (Some(d), Some(s)) = (extra, u_segment) {
        blocks.push(DualBlock {
            label: "data".into(),
            terms: vec![Term {
                segment: s,
                op: d.k.clone(),
                coeff: 1.0,
            }],
            offset: d.f.iter().map(|x| -x).collect(),
            functional: NodeFunctional::new(FunctionalKind::HalfSquaredL2 { weight: 1.0 }, d.k.codomain())?,
        });
    }
    Ok(SaddleSpec {
        segments,
        blocks,
        n_edges: g.n_edges(),
        u_segment,
    })
}
