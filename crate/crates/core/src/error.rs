use thiserror::Error;

/// Errors raised by the engine.
///
/// Variants fall into two families: violations of the hypotheses under which
/// the asymptotic results hold (bad input data or configuration), and
/// numerical failures (resolution, convergence).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RgError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported derivative order {0} (only 0, 1, 2 are available)")]
    UnsupportedOrder(u8),

    #[error("corrupted function: {0}")]
    Corrupted(String),

    #[error("truncation error: boundary magnitude {magnitude:.3e} exceeds tolerance {tolerance:.1e}")]
    Truncation { magnitude: f64, tolerance: f64 },

    #[error("zero-mass hypothesis violated: |f^(0)| = {mass:.3e} is not below {threshold:.3e}")]
    NotZeroMass { mass: f64, threshold: f64 },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("bad reference profile: f'^(0) = {found} (expected i)")]
    BadReference { found: String },

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("outside analyticity radius: sup|u| <= {bound:.3e} but radius is {radius:.3e}")]
    OutsideAnalyticity { bound: f64, radius: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("Picard iteration did not converge in {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("Picard iteration diverges after {iterations} iterations (ratios {ratios:?}); data too large")]
    Divergence { iterations: usize, ratios: Vec<f64> },

    #[error("trajectory is not converged")]
    StaleState,

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("non-admissible time scale: {0}")]
    NonAdmissibleTimescale(String),

    #[error("nonlinearity is {class} (d_F = {d_f}); only irrelevant perturbations are supported")]
    NotIrrelevant { class: String, d_f: f64 },

    #[error("i/o error: {0}")]
    Io(String),
}

impl RgError {
    /// True when the error means the input violates a hypothesis of the
    /// theory (as opposed to a numerical failure of the engine). Picard
    /// divergence counts as a violated smallness condition.
    pub fn is_hypothesis_violation(&self) -> bool {
        matches!(
            self,
            RgError::Domain(_)
                | RgError::UnsupportedOrder(_)
                | RgError::NotZeroMass { .. }
                | RgError::Hypothesis(_)
                | RgError::Degenerate(_)
                | RgError::BadReference { .. }
                | RgError::OutsideAnalyticity { .. }
                | RgError::Divergence { .. }
                | RgError::Config(_)
                | RgError::NonAdmissibleTimescale(_)
                | RgError::NotIrrelevant { .. }
        )
    }
}

impl From<std::io::Error> for RgError {
    fn from(e: std::io::Error) -> Self {
        RgError::Io(e.to_string())
    }
}

impl From<csv::Error> for RgError {
    fn from(e: csv::Error) -> Self {
        RgError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for RgError {
    fn from(e: serde_json::Error) -> Self {
        RgError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, RgError>;
