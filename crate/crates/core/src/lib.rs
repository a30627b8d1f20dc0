//! Regularization graphs: tree-structured convex regularizers assembled from
//! linear operators and node functionals, with certified evaluation,
//! Tikhonov solves and bilevel weight learning.

pub mod assembly;
pub mod bilevel;
pub mod error;
pub mod functionals;
pub mod graph;
pub mod inverse;
pub mod library;
pub mod linalg;
pub mod oracle;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use functionals::{FunctionalKind, NodeFunctional};
pub use graph::{Edge, Node, RegGraph};
pub use library::{make_graph, make_operator, GraphSpec, OperatorSpec};
pub use linalg::{LinOp, Space, SpaceSpec};
pub use solver::{evaluate_r, solve_tikhonov, SolveResult, SolverConfig};
