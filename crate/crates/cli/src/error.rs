use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{0}")]
    MissingInput(String),

    #[error("unlearning failed: {0}")]
    Unlearning(String),

    #[error(transparent)]
    Core(#[from] fusim_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// Process exit status: 2 for bad configuration or inputs, 3 for
    /// decoding or unlearning failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use fusim_core::Error as E;
        match self {
            CliError::Config(_) | CliError::MissingInput(_) => 2,
            CliError::Unlearning(_) => 3,
            CliError::Core(e) => match e {
                E::InvalidArgument(_) | E::InfeasiblePartition(_) | E::DimensionMismatch { .. } => 2,
                E::DecodeFailure(_)
                | E::EmptyRetained(_)
                | E::KeySetMismatch
                | E::Unauthorized(_)
                | E::TrainingDiverged { .. }
                | E::NotFound { .. } => 3,
                _ => 1,
            },
            _ => 1,
        }
    }
}
