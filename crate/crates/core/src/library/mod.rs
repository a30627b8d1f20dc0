//! Operator constructors and the catalogue of named regularization graphs.

mod graphs;
pub mod operators;

pub use graphs::{make_graph, FrameKind, GraphSpec, GRAPH_NAMES};
pub use operators::{make_operator, OperatorSpec};
