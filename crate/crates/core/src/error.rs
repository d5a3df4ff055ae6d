use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("cache {path}: {msg}")]
    Cache { path: PathBuf, msg: String },

    #[error("oracle state space too large: {0} states (limit {1})")]
    StateSpace(u64, u64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
