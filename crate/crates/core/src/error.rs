use thiserror::Error;

/// Errors shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value (unknown law, bad parameter, malformed key-value block).
    #[error("configuration error: {0}")]
    Config(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Requested size exceeds a truncation cap or is too small to hold the model.
    #[error("size error: {0}")]
    Size(String),

    /// Operation not defined for the given inputs.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// An iterative scheme did not stabilize; carries diagnostics.
    #[error("convergence failure: {0}")]
    Convergence(String),

    /// Estimator failed on one realization of a disorder average.
    #[error("estimator failed at realization {index}: {source}")]
    Estimator {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    /// A curve or series was unusable for the requested fit.
    #[error("fit error: {0}")]
    Fit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
