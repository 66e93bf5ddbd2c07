//! Crate-wide error type.

/// Errors produced by any stage of the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("column '{0}' not found in CSV header")]
    MissingColumn(String),

    #[error("row {row}: label '{label}' is not covered by the label map")]
    UnmappableLabel { row: usize, label: String },

    #[error("corpus '{0}' has no valid rows")]
    EmptyCorpus(String),

    #[error("corpus has {size} documents, need at least {min}")]
    CorpusTooSmall { size: usize, min: usize },

    #[error("cannot take {n} documents from a corpus of {available}")]
    NTooLarge { n: usize, available: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("embedding file line {line}: expected {expected} components, found {found}")]
    InconsistentDimension {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("no overlap between embedding file and vocabulary")]
    NoOverlap,

    #[error("training labels contain a single class")]
    SingleClassInput,

    #[error("loss became non-finite at epoch {0}")]
    DivergedLoss(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("representation mismatch: model expects {expected}, features are {found}")]
    RepresentationMismatch { expected: String, found: String },

    #[error("length mismatch: {left} predictions vs {right} labels")]
    LengthMismatch { left: usize, right: usize },

    #[error("experiment spec is invalid:\n{0}")]
    SpecValidation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("{path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    /// Wrap an IO error with the path it occurred on.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by a malformed spec or configuration (CLI
    /// exit code 1), false for runtime/data errors (exit code 2).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::SpecValidation(_) | Error::InvalidConfig(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
