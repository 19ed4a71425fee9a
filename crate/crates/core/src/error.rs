use thiserror::Error;

/// Errors produced by model construction, solving, and metric evaluation.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("{context}: expected dimension {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{context}: index {index} out of range ({limit} available)")]
    IndexOutOfRange {
        context: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("{context}: {reason}")]
    Invalid {
        context: &'static str,
        reason: String,
    },

    #[error("{context}: input is empty")]
    Empty { context: &'static str },

    /// The QP loop ran out of sweeps. Carries the best iterate so the
    /// caller can decide whether to accept it anyway.
    #[error("solver stopped after {iterations} sweeps with KKT residual {residual:.3e}")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(context: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            context,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
