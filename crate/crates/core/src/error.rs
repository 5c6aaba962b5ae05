use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: row {row}: expected {expected} cells, found {found}")]
    RaggedRow {
        path: PathBuf,
        row: u64,
        expected: usize,
        found: usize,
    },
    #[error("{path}: malformed delimited data: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("duplicate attribute name {0:?}")]
    DuplicateAttribute(String),
    #[error("normalization needs at least two profiles, got {0}")]
    PopulationTooSmall(usize),
    #[error("attribute {0:?} has no non-missing values")]
    EmptyAttribute(String),
    #[error("empty value set")]
    EmptySet,
    #[error("profile schema version {found} does not match {expected}")]
    SchemaMismatch { expected: u32, found: u32 },
    #[error("feature vector has width {found}, model expects {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("training corpus lacks classes {0:?}")]
    MissingClasses(Vec<u8>),
    #[error("training set needs both labels and at least two samples")]
    DegenerateTrainingSet,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("length mismatch: {0} predictions vs {1} truths")]
    LengthMismatch(usize, usize),
    #[error("attribute {dataset}.{attribute} has no stored profile; run `profile` on its dataset first")]
    Unprofiled { dataset: String, attribute: String },
    #[error("unsupported document format version {found} (expected {expected})")]
    UnsupportedVersion { expected: u32, found: u32 },
    #[error("malformed document {path}: {message}")]
    MalformedDocument { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
