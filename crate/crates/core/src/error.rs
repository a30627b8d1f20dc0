use thiserror::Error;

use crate::graph::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operator of size {rows}x{cols} exceeds the dense materialization limit")]
    TooLarge { rows: usize, cols: usize },

    #[error("invalid graph: {}", format_violations(.0))]
    InvalidGraph(Vec<Violation>),

    #[error("unknown graph name `{0}`")]
    UnknownGraph(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("all bilevel candidates are infeasible")]
    NoFeasibleCandidate,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            context: context.to_string(),
            expected,
            got,
        });
    }
    Ok(())
}
