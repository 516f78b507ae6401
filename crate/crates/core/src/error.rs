use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("quadrature did not converge: estimated error {achieved:e} > target {target:e} after {evals} evaluations")]
    QuadratureNoConvergence { achieved: f64, target: f64, evals: usize },

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("tabulated measure cannot bound its tail: {0}")]
    TabulationTooCoarse(String),

    #[error("measure not supported for synthesis: {0}")]
    UnsupportedMeasure(String),

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("kernel support leaves the spatial domain: {0}")]
    SupportOverflow(String),

    #[error("calibration file: {0}")]
    Calibration(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by numerical non-convergence rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::QuadratureNoConvergence { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
