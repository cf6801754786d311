use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("duplicate station id `{0}`")]
    DuplicateStationId(String),

    #[error("unknown station `{0}`")]
    UnknownStation(String),

    #[error("edge {from} -> {to} has non-positive or non-finite length {length}")]
    NonPositiveLength { from: String, to: String, length: f64 },

    #[error("graph is disconnected; unreachable from `{origin}`: {}", unreachable.join(", "))]
    DisconnectedGraph {
        origin: String,
        unreachable: Vec<String>,
    },

    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("equiangular system became singular at step {step}")]
    NumericalRankLoss { step: usize },

    #[error("coordinate descent did not converge within {sweeps} sweeps")]
    NonConvergence { sweeps: usize },

    #[error("design matrix is rank deficient (condition estimate {condition:e})")]
    RankDeficient { condition: f64 },

    #[error("local fit at station `{station}` is singular (condition estimate {condition:e})")]
    LocalSingularFit { station: String, condition: f64 },

    #[error("station `{station}` has {effective} positively weighted observations, needs {required}")]
    InsufficientEffectiveWeight {
        station: String,
        effective: usize,
        required: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("variable is constant")]
    ConstantVariable,

    #[error("row {0} of the spatial weights has no neighbours")]
    EmptyNeighborhood(usize),

    #[error("requested {k} clusters for {n} profiles")]
    TooManyClusters { k: usize, n: usize },

    #[error("k range must contain at least 3 values, got {0}")]
    RangeTooSmall(usize),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column `{column}`: value {value} out of range")]
    OutOfRange {
        row: usize,
        column: String,
        value: f64,
    },

    #[error("column `{0}` already exists")]
    ColumnCollision(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name, used in the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "InvalidInput",
            Error::DuplicateStationId(_) => "DuplicateStationId",
            Error::UnknownStation(_) => "UnknownStation",
            Error::NonPositiveLength { .. } => "NonPositiveLength",
            Error::DisconnectedGraph { .. } => "DisconnectedGraph",
            Error::InvalidBandwidth(_) => "InvalidBandwidth",
            Error::DegenerateDesign(_) => "DegenerateDesign",
            Error::NumericalRankLoss { .. } => "NumericalRankLoss",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::RankDeficient { .. } => "RankDeficient",
            Error::LocalSingularFit { .. } => "LocalSingularFit",
            Error::InsufficientEffectiveWeight { .. } => "InsufficientEffectiveWeight",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::ConstantVariable => "ConstantVariable",
            Error::EmptyNeighborhood(_) => "EmptyNeighborhood",
            Error::TooManyClusters { .. } => "TooManyClusters",
            Error::RangeTooSmall(_) => "RangeTooSmall",
            Error::MissingColumn(_) => "MissingColumn",
            Error::NonNumericCell { .. } => "NonNumericCell",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::ColumnCollision(_) => "ColumnCollision",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
        }
    }
}
