use thiserror::Error;

/// Where a non-positive gap was found.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactPoint {
    pub x: f64,
    pub y: f64,
    pub gap: f64,
}

impl std::fmt::Display for ContactPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "gap {:.3e} m at (x={:.6e}, y={:.6e})", self.gap, self.x, self.y)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contact: {0}")]
    Contact(ContactPoint),

    #[error("non-finite integrand {value} at quadrature node ({x:.6e}, {y:.6e})")]
    NonFinite { x: f64, y: f64, value: f64 },

    #[error("root finding did not converge: {0}")]
    RootFinding(String),

    #[error("newton solver failed after {iterations} iterations (scaled residual trace: {trace:?})")]
    Newton { iterations: usize, trace: Vec<f64> },

    #[error("singular system in {0}")]
    Singular(&'static str),

    #[error("fixed-point coupling did not converge: correction {correction:.3e} m after {sweeps} sweeps")]
    FixedPoint { sweeps: usize, correction: f64 },

    #[error("models are not comparable: {0}")]
    Incomparable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn is_contact(&self) -> bool {
        matches!(self, Error::Contact(_))
    }

    /// Configuration-class errors map to CLI exit code 2, the rest to 3.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Json(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
