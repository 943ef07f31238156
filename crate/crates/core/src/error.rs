use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("cell Reynolds condition violated: Re*dx = {cell_re} (must be < 2)")]
    CellReynolds { cell_re: f64 },

    #[error("singular system at row {row}")]
    Singular { row: usize },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonDivergence { iterations: usize, residual: f64 },

    #[error("training diverged at epoch {epoch}: non-finite loss (learning rate too large?)")]
    TrainingDiverged { epoch: usize },

    #[error("solver failed at z = {z:?}: {source}")]
    SolverAt {
        z: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate similarity check: coarse inter-level error norm is {norm:e}")]
    DegenerateError { norm: f64 },

    #[error("grid search failed, every cell diverged: {0:?}")]
    AllDiverged(Vec<String>),

    #[error("level {level}: validation threshold not reached after {rounds} rounds (v history {history:?})")]
    MaxRounds { level: usize, rounds: usize, history: Vec<f64> },

    #[error("collocation level cap {cap} exceeded at PDE level {level}")]
    CollocationCap { cap: usize, level: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
