use std::fmt;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A syntax or validation error with a 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("relation `{relation}` has arity {expected}, got a tuple of arity {found}")]
    ArityMismatch {
        relation: String,
        expected: usize,
        found: usize,
    },
    #[error("relation `{0}` is static and cannot be updated")]
    StaticUpdate(String),
    #[error("query is not well-behaved")]
    NotWellBehaved,
    #[error("query is {class} but this operation needs {needed}")]
    WrongClass { class: String, needed: &'static str },
    #[error("variable `{0}` is not covered by any atom")]
    Uncoverable(String),
    #[error("maximal dynamic database has {p} facts, above the eager cap of {cap}")]
    EagerCapExceeded { p: usize, cap: usize },
    #[error("view tree is not safe: {0}")]
    UnsafePlan(String),
    #[error("invalid variable order: {0}")]
    InvalidOrder(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
