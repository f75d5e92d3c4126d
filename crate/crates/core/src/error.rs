use std::path::PathBuf;

/// Every failure the head-training stack can report.
#[derive(Debug, thiserror::Error)]
pub enum KanError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("index out of range: {what} = {index}, bound {bound}")]
    Index {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("stale forward cache: {0}")]
    StaleCache(String),

    #[error("label {label} out of range for {n_classes} classes")]
    Label { label: usize, n_classes: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("experiment mismatch: {0}")]
    Mismatch(String),
}

impl KanError {
    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        KanError::Shape {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KanError::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable process exit code for each error class, used by the CLI. Starts
    /// at 3 because 1 and 2 are taken by generic failures and usage errors.
    pub fn exit_code(&self) -> u8 {
        match self {
            KanError::Domain(_) => 3,
            KanError::Index { .. } => 4,
            KanError::Shape { .. } => 5,
            KanError::Numeric(_) => 6,
            KanError::StaleCache(_) => 7,
            KanError::Label { .. } => 8,
            KanError::Format(_) => 9,
            KanError::Io { .. } => 10,
            KanError::Config(_) => 11,
            KanError::Mismatch(_) => 12,
        }
    }
}

pub type Result<T> = std::result::Result<T, KanError>;
