use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeonetError {
    #[error("integration failure: {0}")]
    Integration(String),

    #[error("geodesic boundary-value solve did not converge (final residual {residual:.3e})")]
    Bvp { residual: f64 },

    #[error("stationary solve did not converge after {iterations} iterations (residual {residual:.3e})")]
    Solver {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("net is not stationary (max vertex residual {0:.3e})")]
    NonStationary(f64),

    #[error("incomplete net: {0}")]
    IncompleteNet(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("rejected: {0}")]
    Rejected(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl GeonetError {
    /// True for failures of a numerical procedure on valid input, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            GeonetError::Integration(_)
                | GeonetError::Bvp { .. }
                | GeonetError::Solver { .. }
                | GeonetError::Numeric(_)
        )
    }

    pub fn rejected(msg: impl Into<String>) -> Self {
        GeonetError::Rejected(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, GeonetError>;
