use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Attach a pipeline stage name to errors.
pub(crate) trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| match e {
            already @ Error::Stage { .. } => already,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate id {id:?} on lines {first} and {second}")]
    DuplicateId { id: String, first: usize, second: usize },

    #[error("line {line}: record {id:?} is invalid: {violations}")]
    InvalidRecord {
        line: usize,
        id: String,
        violations: String,
    },

    #[error("need at least {needed} distinct source keys, found {found}")]
    TooFewSourceKeys { needed: usize, found: usize },

    #[error("not a probability: {0}")]
    NotAProbability(f64),

    #[error("clamp epsilon must be in (0, 0.5), got {0}")]
    BadEpsilon(f64),

    #[error("zero vector")]
    ZeroVector,

    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("matrix is not square: {rows} rows, row {row} has {cols} columns")]
    NotSquare { rows: usize, row: usize, cols: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("missing embeddings for records: {}", .0.join(", "))]
    MissingEmbeddings(Vec<String>),

    #[error("score matrix does not cover record {0:?}")]
    UnknownMatrixId(String),

    #[error("bad score matrix file: {0}")]
    MatrixFormat(String),

    #[error("no perfect matching")]
    NoPerfectMatching,

    #[error("weight matrix row or column {0} has no allowed entry")]
    EmptyLine(usize),

    #[error("oracle size cap: n = {0} > 10")]
    OracleSizeCap(usize),

    #[error("empty input")]
    EmptyInput,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("fold {fold} has {size} records, fewer than {needed}")]
    FoldTooSmall {
        fold: usize,
        size: usize,
        needed: usize,
    },

    #[error("matching round {round} is infeasible: no perfect matching")]
    InfeasibleRound { round: usize },

    #[error("lambda {lambda}: {source}")]
    AtLambda {
        lambda: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}
