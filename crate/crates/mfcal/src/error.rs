//! Error type shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes of the calibration pipeline.
///
/// `Domain` is a caller mistake (bad shapes, non-finite inputs,
/// out-of-range settings) and is always detectable before any numerics
/// run. The remaining variants are things the data can do to us.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid argument or inconsistent dimensions.
    #[error("domain error: {0}")]
    Domain(String),

    /// A matrix factorization failed even after jitter escalation.
    #[error("numerical error: {context} (jitters tried: {jitters:?})")]
    Numerical { context: String, jitters: Vec<f64> },

    /// Maximum-likelihood fitting produced no usable optimum.
    #[error("fit error: {0}")]
    Fit(String),

    /// The scaling-parameter search or its leave-one-out folds failed.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// A simulation study lost too many iterations to be trusted.
    #[error("analysis error: {0}")]
    Analysis(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numerical(context: impl Into<String>, jitters: Vec<f64>) -> Self {
        Error::Numerical {
            context: context.into(),
            jitters,
        }
    }

    pub(crate) fn fit(msg: impl Into<String>) -> Self {
        Error::Fit(msg.into())
    }

    pub(crate) fn estimation(msg: impl Into<String>) -> Self {
        Error::Estimation(msg.into())
    }

    pub(crate) fn analysis(msg: impl Into<String>) -> Self {
        Error::Analysis(msg.into())
    }
}
