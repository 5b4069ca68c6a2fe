use thiserror::Error;

use crate::solver::SolveReport;

#[derive(Debug, Error)]
pub enum HomogError {
    #[error("invalid Lamé pair (lambda = {lambda}, mu = {mu}) in dimension {dim}: need mu > 0 and d*lambda + 2*mu > 0")]
    InvalidLame { lambda: f64, mu: f64, dim: usize },

    #[error("unsupported dimension {0}; expected 2 or 3")]
    Dimension(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid medium: {0}")]
    Medium(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("right-hand side is incompatible: |<f>|/|f| = {defect:.3e}")]
    Compatibility { defect: f64 },

    #[error("solver did not converge after {} iterations (relative residual {:.3e})", .report.iterations, .report.relative_residual)]
    NonConvergence { report: SolveReport },

    #[error("eigensolver did not converge at k = {k:?}: residual {residual:.3e} after {iterations} iterations")]
    EigenNonConvergence {
        k: Vec<f64>,
        residual: f64,
        iterations: usize,
    },

    #[error("effective tensor lost convexity (margin {margin:.3e})")]
    ConvexityLost { margin: f64 },

    #[error("acoustic block C_(1j1l) is singular at sample {sample}")]
    SingularAcousticBlock { sample: usize },

    #[error("resonant denominator in {what}: |value| = {magnitude:.3e}")]
    ResonantDenominator { what: &'static str, magnitude: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HomogError>;
