use thiserror::Error;

/// Errors raised while building, reducing or solving a flexibility problem.
#[derive(Debug, Error)]
pub enum Error {
    #[error("model schema: {0}")]
    Schema(String),

    #[error("dimension mismatch at `{path}`: expected {expected}, found {found}")]
    Dimension {
        path: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid value at `{path}`: {reason}")]
    Invariant { path: String, reason: String },

    #[error("feeder has no controllable devices")]
    NoDevices,

    #[error("statically infeasible constraint row {row} ({label})")]
    StaticInfeasible { row: usize, label: String },

    #[error("aggregation matrix is rank deficient: dependent rows {rows:?}")]
    RankDeficient { rows: Vec<usize> },

    #[error("uncertainty block {block} has norm {norm:.6} > 1")]
    OutsideUncertaintySet { block: usize, norm: f64 },

    #[error("point lies outside the ellipsoid (|xi| = {norm:.9})")]
    OutsideEllipsoid { norm: f64 },

    #[error("problem exceeds size budget: {0}")]
    SizeBudget(String),

    #[error("conic program: {0}")]
    Program(String),

    #[error("solver finished with status {status}: {detail}")]
    Solver { status: String, detail: String },

    #[error("exact projection: {0}")]
    Projection(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
