use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Missing or malformed parameters, unreadable inputs.
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("support cap exceeded at step {step_index}: projected {projected} atoms > cap {cap}")]
    SupportCap {
        step_index: usize,
        projected: usize,
        cap: usize,
    },

    #[error("cover-time calibration for block {block} exceeded its sample budget")]
    CalibrationBudget { block: usize },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("inconsistent moments: second moment {second_moment} < mean^2 = {}", mean * mean)]
    InconsistentMoments { mean: f64, second_moment: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Resource/horizon exhaustion, as opposed to bad input.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::SupportCap { .. } | Error::CalibrationBudget { .. } | Error::Infeasible(_)
        )
    }
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
