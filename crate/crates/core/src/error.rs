use thiserror::Error;

/// Errors raised by the estimation, simulation and tracking routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyncError {
    /// A configuration value violates its documented range.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// An argument is inconsistent with the operation's preconditions.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// A streaming input arrived out of order.
    #[error("stream error: {0}")]
    Stream(String),
    /// The simulated scenario cannot be realized with the given margins.
    #[error("simulation error: {0}")]
    Simulation(String),
    /// A numerical operation failed (singular matrix, non-finite value).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, SyncError>;

impl SyncError {
    /// Prefixes the message, keeping the error kind.
    pub fn context(self, prefix: impl std::fmt::Display) -> Self {
        match self {
            SyncError::Config(m) => SyncError::Config(format!("{prefix}: {m}")),
            SyncError::Argument(m) => SyncError::Argument(format!("{prefix}: {m}")),
            SyncError::Stream(m) => SyncError::Stream(format!("{prefix}: {m}")),
            SyncError::Simulation(m) => SyncError::Simulation(format!("{prefix}: {m}")),
            SyncError::Numerical(m) => SyncError::Numerical(format!("{prefix}: {m}")),
        }
    }
}
