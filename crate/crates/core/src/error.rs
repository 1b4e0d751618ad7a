use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("no data records")]
    EmptyData,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("infeasible marginals: row {row} has no admissible move (corrupted indicator matrix)")]
    InfeasibleMarginals { row: usize },

    #[error("simplex failed after {iterations} iterations: {reason} (trace: {trace})")]
    Solver {
        iterations: usize,
        reason: String,
        trace: String,
    },

    #[error("dual-face LP is unbounded: {0}")]
    Degeneracy(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("bootstrap configuration error: {0}")]
    Config(String),

    #[error("bootstrap iteration {iteration} failed: {source}")]
    Bootstrap {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: row {row}: {message}")]
    Parse { path: String, row: usize, message: String },

    #[error("prediction protocol error: {0}")]
    Protocol(String),

    #[error("no prediction for row {row} (feature tuple {tuple})")]
    JoinMiss { row: usize, tuple: String },

    #[error("http error: {0}")]
    Http(String),

    #[error("row {row}: missing prediction")]
    MissingPrediction { row: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
