use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("internal node times {first} and {second} coincide within tolerance")]
    DegenerateTimes { first: f64, second: f64 },

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("invalid SPR operation: {0}")]
    InvalidOperation(String),

    #[error("next tree is not reachable from the decorated tree: {0}")]
    InconsistentTransition(String),

    #[error("newick parse error at byte {position}: {message}")]
    Newick { position: usize, message: String },

    #[error("data parse error at line {line}, column {column}: {message}")]
    DataParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("oracle refused input: {0}")]
    Refused(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
