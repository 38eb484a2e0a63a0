use thiserror::Error;

pub type Result<T> = std::result::Result<T, NnError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("query row {row} has every key masked")]
    AllMasked { row: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

impl NnError {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        NnError::Shape {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
