use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters or inconsistent experiment setup.
    #[error("configuration error: {0}")]
    Config(String),

    /// A call violated an operation's input contract (lengths, ranges).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    /// Too few or degenerate training symbols to identify the channel.
    #[error("channel not identifiable: {0}")]
    Identifiability(String),

    #[error("search budget exceeded: {candidates} candidates > limit {limit}")]
    Budget { candidates: u128, limit: u128 },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("numerical failure at tone {tone}, seed {seed}: {msg}")]
    Numerical { tone: usize, seed: u64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
}
