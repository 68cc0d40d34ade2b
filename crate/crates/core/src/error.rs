use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-invertible covariance")]
    NonInvertibleCovariance,

    #[error("degenerate marginal")]
    DegenerateMarginal,

    #[error("nonpositive innovation variance {0}")]
    NonpositiveInnovation(f64),

    #[error("invalid loss: {0}")]
    InvalidLoss(String),

    #[error("{kind} loss is not supported by {context}")]
    UnsupportedLoss { kind: &'static str, context: &'static str },

    #[error("singular prior covariance")]
    SingularPrior,

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("IBFFD requires input-side constraints (output losses found at step {step}, output {output})")]
    OutputConstrainedIbffd { step: usize, output: usize },

    #[error("non-finite value in {context} at iteration {iteration}")]
    NonFinite { iteration: usize, context: String },

    #[error("degenerate forward message variance {variance} at iteration {iteration}")]
    DegenerateForward { iteration: usize, variance: f64 },

    #[error("infeasible")]
    Infeasible,

    #[error("enumeration bound exceeded: {candidates} candidate active sets (limit {limit})")]
    EnumerationBound { candidates: f64, limit: usize },

    #[error("KKT certificate failed: {0}")]
    Certificate(String),

    #[error("objective is non-finite on the entire grid")]
    EmptyGrid,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
