use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum GofError {
    #[error("infeasible parameters: {0}")]
    Infeasible(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("bootstrap failed: {0}")]
    Bootstrap(String),

    #[error("numerical overflow: {0}")]
    Overflow(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl GofError {
    /// Whether the error stems from user input (config, flags, data layout)
    /// rather than from a failed computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            GofError::Infeasible(_)
                | GofError::Dimension(_)
                | GofError::Domain(_)
                | GofError::Config(_)
                | GofError::Data(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, GofError>;
