use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter `{name}` is not finite")]
    NonFinite { name: &'static str },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("singular steady state (|denominator| = {magnitude:e})")]
    SingularSteadyState { magnitude: f64 },

    #[error("two-mode model outside its validity range: excited population {population:.4} >= 1")]
    ModelBreakdown { population: f64 },

    #[error("model validity lost at operating point: excited population {population:.4} > {limit}")]
    ModelInvalid { population: f64, limit: f64 },

    #[error("integration did not reach steady state by t = {t:e} s (residual {residual:e})")]
    NotConverged { t: f64, residual: f64 },

    #[error("insensitive operating point: signal slope is zero")]
    InsensitiveOperatingPoint,

    #[error("grid too narrow: {0}")]
    GridTooNarrow(String),

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("fit failed: {0}")]
    FitFailed(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by malformed inputs rather than by the physics
    /// or a numerical procedure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::InvalidParameter { .. } | Error::InsufficientData { .. }
        )
    }
}
