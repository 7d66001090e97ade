use std::path::PathBuf;

use thiserror::Error;

use crate::pitchdata::RowError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing column `{0}` in pitch file header")]
    MissingColumn(String),

    #[error("{failed} of {total} rows failed validation (limit is 1%); first error: {first}")]
    TooManyInvalidRows {
        failed: usize,
        total: usize,
        first: RowError,
        errors: Vec<RowError>,
    },

    #[error("invalid count {balls}-{strikes}")]
    InvalidCount { balls: i64, strikes: i64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("point ({x:.4}, {z:.4}) lies outside the surface support box")]
    OutsideSupport { x: f64, z: f64 },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("penalized IRLS did not converge after {iterations} iterations (deviance trace: {trace:?})")]
    NonConvergence { iterations: usize, trace: Vec<f64> },

    #[error("parameter vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unknown {factor} level `{id}`")]
    UnknownLevel { factor: &'static str, id: String },

    #[error("non-finite gradient at coordinate {coordinate} ({name})")]
    NonFiniteGradient { coordinate: usize, name: String },

    #[error("could not find a finite initial point for chain {chain}")]
    Initialization { chain: usize },

    #[error(
        "chain {chain}: divergence rate {rate:.3} exceeds {limit:.3} ({divergent} of {draws} post-warmup transitions)"
    )]
    Divergences {
        chain: usize,
        rate: f64,
        limit: f64,
        divergent: usize,
        draws: usize,
    },

    #[error("degenerate variance for coordinate {0}")]
    DegenerateVariance(usize),

    #[error("no observations for count {count} after a called {call}")]
    EmptyCell { count: String, call: String },

    #[error("parameter dimension {0} is too large for grid quadrature (max 3)")]
    QuadratureDimension(usize),

    #[error("malformed draws file: {0}")]
    DrawsFormat(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
