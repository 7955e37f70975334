use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// A parameter failed validation.
    Config,
    /// The numerics broke down (under-resolved grid, norm blow-up, ...).
    Numeric,
    /// A fit could not be carried out on the supplied data.
    Fit,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid step {dt_max:e} s exceeds half the shortest modulation sub-interval ({limit:e} s)")]
    UnderResolvedGrid { dt_max: f64, limit: f64 },

    #[error("Bloch vector norm {norm} exceeds 1 + tolerance at t = {t:e} s; grid is too coarse")]
    BlochNorm { t: f64, norm: f64 },

    #[error("trace does not live on the pulse grid: {0}")]
    GridMismatch(String),

    #[error("input energy is not positive ({0:e} J)")]
    ZeroInputEnergy(f64),

    #[error("insufficient background span: {0}")]
    InsufficientSpan(String),

    #[error("degenerate circle: radius {radius:e} is below 10x the residual noise {noise:e}")]
    DegenerateCircle { radius: f64, noise: f64 },

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("optimum at search boundary d = {duty}")]
    BoundaryOptimum { duty: f64 },

    #[error("sweep point {axis} = {value}: {source}")]
    SweepPoint {
        axis: &'static str,
        value: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter { .. } => ErrorKind::Config,
            Error::InsufficientSpan(_) | Error::DegenerateCircle { .. } | Error::FitFailed(_) => ErrorKind::Fit,
            Error::SweepPoint { source, .. } => source.kind(),
            _ => ErrorKind::Numeric,
        }
    }
}
