use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the numerical pipeline.
///
/// The CLI maps `InvalidParams`/`InvalidInput`/`Config` to exit code 2 and
/// the numerical failures (`Quadrature`, `Convergence`, `InsufficientResolution`)
/// to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid operator parameters: {0}")]
    InvalidParams(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("quadrature did not converge: estimated error {achieved:e} exceeds tolerance {requested:e} (value {value})")]
    Quadrature {
        value: f64,
        achieved: f64,
        requested: f64,
    },

    #[error("convergence failure in {stage}: {detail}")]
    Convergence { stage: &'static str, detail: String },

    #[error("insufficient spectral resolution at t={t}: smallest usable t is {smallest_usable_t}")]
    InsufficientResolution { t: f64, smallest_usable_t: f64 },

    #[error("angular truncation at l_max={l_max} leaves estimated error {estimate:e} above tolerance {tolerance:e}")]
    AngularTruncation {
        l_max: usize,
        estimate: f64,
        tolerance: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of a numerical method (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Quadrature { .. }
                | Error::Convergence { .. }
                | Error::InsufficientResolution { .. }
                | Error::AngularTruncation { .. }
        )
    }
}
