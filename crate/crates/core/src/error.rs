use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot ingest {path}: {reason}")]
    Ingestion { path: PathBuf, reason: String },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("corrupt latent: index {index} is outside a codebook of {codebook_size} entries")]
    CorruptLatent { index: u32, codebook_size: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("wire format error: {0}")]
    Format(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
