use thiserror::Error;

/// Errors produced by detectors, trainers and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or vector dimensions do not match the operation's contract.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A matrix inverse required by a combiner does not exist.
    #[error("singular matrix while building {0}")]
    Singular(&'static str),

    /// An exhaustive enumeration would exceed the tractability guard.
    #[error("search space of {size} candidates exceeds the limit of {limit}")]
    SearchSpaceTooLarge { size: u64, limit: u64 },

    /// Invalid experiment or training configuration (bad key, value or combination).
    #[error("config error: {0}")]
    Config(String),

    /// A step-size parameter file is malformed or inconsistent.
    #[error("parameter file error: {0}")]
    ParamFile(String),

    /// Training aborted because the loss ran away from its initial level.
    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for configuration errors (CLI exit code 1); everything else is a
    /// runtime failure (exit code 2).
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
