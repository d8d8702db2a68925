//! Error types shared across the crate.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, KirsError>;

/// All failure modes surfaced by the toolkit.
///
/// The CLI maps these onto exit codes: input/parse/domain problems are
/// user errors (exit 2), missing artifacts are prerequisites (exit 3),
/// everything else is internal (exit 1).
#[derive(Debug, thiserror::Error)]
pub enum KirsError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Input is well-formed but semantically unusable (e.g. filtering
    /// removed every record).
    #[error("{0}")]
    Domain(String),

    /// A caller broke an API precondition (dimension mismatch, double
    /// application of a one-shot update, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Negative sampling has no candidates to draw from.
    #[error("sampling error: {0}")]
    Sampling(String),

    /// Persistence-layer failures, each corruption class kept distinct.
    #[error(transparent)]
    Store(#[from] StoreError),

    /// A required artifact (infomax store, checkpoint, ...) is absent.
    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),

    #[error("config error: {0}")]
    Config(String),

    /// A training stage aborted; the stage name is preserved for the report.
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<KirsError>,
    },
}

/// Load/save failures for the binary table formats.
#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },

    #[error("file truncated at record {record}")]
    Truncated { record: usize },

    #[error("payload checksum mismatch: expected {expected:#010x}, computed {computed:#010x}")]
    Checksum { expected: u32, computed: u32 },

    #[error("invalid header: {0}")]
    Header(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl KirsError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KirsError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        KirsError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn contract(message: impl Into<String>) -> Self {
        KirsError::Contract(message.into())
    }

    /// Wrap an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &str) -> Self {
        KirsError::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
