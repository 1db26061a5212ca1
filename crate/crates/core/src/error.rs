use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the kK-NN library and its command-line front end.
#[derive(Debug, Error)]
pub enum KknnError {
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

    #[error("empty input: {0}")]
    Empty(String),

    #[error("row {row}, column {column:?}: cannot parse {value:?} as a number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column {column:?}: value is not finite")]
    NonFinite { row: usize, column: String },

    #[error("label column {0} not found")]
    MissingLabelColumn(String),

    #[error("dataset has a single class; at least two are required")]
    SingleClass,

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("{what} = {value} is out of range ({expected})")]
    OutOfRange {
        what: &'static str,
        value: String,
        expected: String,
    },

    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("class {class} would receive no training samples")]
    EmptyTrainClass { class: usize },

    #[error("within-class scatter is singular; use a positive ridge")]
    SingularScatter,

    #[error("network error: {0}")]
    Network(String),

    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),

    #[error("malformed payload: {0}")]
    Malformed(String),

    #[error("incompatible model file: {0}")]
    IncompatibleModel(String),
}

pub type Result<T> = std::result::Result<T, KknnError>;

impl KknnError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KknnError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn out_of_range(
        what: &'static str,
        value: impl ToString,
        expected: impl Into<String>,
    ) -> Self {
        KknnError::OutOfRange {
            what,
            value: value.to_string(),
            expected: expected.into(),
        }
    }
}
