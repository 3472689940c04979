use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("duplicate rating for pair ({row}, {col})")]
    DuplicatePair { row: u64, col: u64 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("cannot evaluate on an empty rating set")]
    EmptyEval,

    #[error("non-finite parameter update at triplet (e={row}, u={col}), epoch {epoch}; learning rate likely too large")]
    Diverged { row: usize, col: usize, epoch: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
