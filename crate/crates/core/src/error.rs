use std::path::PathBuf;

use thiserror::Error;

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

    #[error("header does not match schema: {0}")]
    Schema(String),

    #[error("no samples")]
    NoSamples,

    #[error("non-monotonic timestamps at data row {row}: {current} ms after {previous} ms")]
    NonMonotonicTimestamps { row: usize, previous: i64, current: i64 },

    #[error("unknown device `{0}`")]
    UnknownDevice(String),

    #[error("duplicate device `{0}`")]
    DuplicateDevice(String),

    #[error("stream `{0}` is empty")]
    EmptyStream(String),

    #[error("empty result after synchronization")]
    EmptySynchronization,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("feature mismatch: expected {expected:?}, found {found:?}")]
    FeatureMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },

    #[error("uninformative column `{0}`: every value is missing")]
    UninformativeColumn(String),

    #[error("column `{0}` contains missing values")]
    MissingValues(String),

    #[error("dataset is not labeled")]
    Unlabeled,

    #[error("class {class} has {count} rows, at least {required} are needed to stratify")]
    ClassTooSmall {
        class: u8,
        count: usize,
        required: usize,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("SMV requires raw g units, the dataset is z-scored")]
    NotRawUnits,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("rows are not aligned with the series at row {row}")]
    Misaligned { row: usize },

    #[error("invalid label `{0}`, expected 0 or 1")]
    InvalidLabel(String),

    #[error("review range [{start}, {end}] ms matches no timestamp")]
    UnknownTimestampRange { start: i64, end: i64 },

    #[error("training data contains a single class")]
    SingleClass,

    #[error("input width {found} does not match training width {expected}")]
    WidthMismatch { expected: usize, found: usize },

    #[error("no training sample was ever out-of-bag")]
    NoOutOfBag,

    #[error("training data has zero variance, gamma is undefined")]
    ZeroVariance,

    #[error("k = {k} exceeds the training size {n}")]
    KTooLarge { k: usize, n: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by malformed inputs or parameters rather than by
    /// the environment (I/O) or by a failed computation.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::Csv(_) | Error::Json(_) | Error::NoOutOfBag
        )
    }
}
