use thiserror::Error;

use crate::{ClientId, Round, ShardId};

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("training diverged in epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("partition infeasible: {0}")]
    InfeasiblePartition(String),

    #[error("no record for shard {shard} round {round}")]
    NotFound { shard: ShardId, round: Round },

    #[error("all clients of shard {0} would be unlearned")]
    EmptyRetained(ShardId),

    #[error("client key sets differ between stored and fresh parameters")]
    KeySetMismatch,

    #[error("unknown client {0}")]
    UnknownClient(ClientId),

    #[error("history commit rejected: {0}")]
    Commit(String),

    #[error("decode failure: {0}")]
    DecodeFailure(String),

    #[error("authorization refused: {0}")]
    Unauthorized(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
