//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed arguments or mismatched dimensions.
    #[error("input error: {0}")]
    Input(String),

    /// Unsatisfiable configuration (generator spec, budget, config file).
    #[error("configuration error: {0}")]
    Config(String),

    /// Dataset file that does not follow the on-disk format. `line` is
    /// 1-based; 0 marks a file-level problem.
    #[error("format error in {file} line {line}: {msg}")]
    Format {
        file: String,
        line: usize,
        msg: String,
    },

    /// Homophily ratio requested on a graph with no countable edges.
    #[error("homophily ratio undefined: no edges with both endpoint labels known")]
    UndefinedRatio,

    /// Theorem scenario whose aggregate features collapse (s0 == s1), so
    /// the loss ratio is 0/0.
    #[error("degenerate scenario: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
