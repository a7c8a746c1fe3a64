use crate::optimizer::GradedProfile;

/// Unified error type for the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter or configuration field violates its invariant.
    #[error("invalid {field}: {message}")]
    InvalidParam {
        field: &'static str,
        message: String,
    },

    /// A spike stream violates ordering or containment invariants.
    #[error("invalid spike stream: {0}")]
    InvalidStream(String),

    /// An input is degenerate for the requested computation.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// No detector within the search bounds satisfies tau*f*M >= min_product.
    #[error("no (tau, dt) within bounds satisfies tau*f*M >= {min_product}")]
    Infeasible { min_product: f64 },

    /// Graded-weight ascent exhausted its iteration budget without meeting the
    /// stationarity tolerance; carries the best profile found so far.
    #[error("graded-weight optimization budget exhausted at snr {snr:.6}")]
    GradedBudget { snr: f64, best: Box<GradedProfile> },

    /// Too little pattern-free time to estimate noise statistics.
    #[error("noise segments total {available_s:.3} s, need at least {required_s:.3} s")]
    InsufficientNoise { available_s: f64, required_s: f64 },

    /// The closed-form initial weight falls outside (0, 1].
    #[error("initial weight {value:.6} falls outside (0, 1]")]
    InitialWeight { value: f64 },

    /// Weights were not converged when a converged outcome was required.
    #[error("weights not converged: convergence index {index:.4} >= {threshold}")]
    NotConverged { index: f64, threshold: f64 },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(field: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParam {
            field,
            message: message.into(),
        }
    }
}
