use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing input file for source `{source_id}`: {path}")]
    MissingInput { source_id: String, path: PathBuf },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("undetectable: text contains no letters")]
    Undetectable,

    #[error("sampling shortfall: {0}")]
    Shortfall(String),

    #[error("invalid vocabulary: {0}")]
    Vocab(String),

    #[error("bad-magic: not an instance file")]
    BadMagic,

    #[error("version-mismatch: file format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("vocab-mismatch: file was written against vocabulary {found:016x}, supplied vocabulary is {expected:016x}")]
    VocabMismatch { found: u64, expected: u64 },

    #[error("corrupt record: {0}")]
    Corrupt(String),

    #[error("empty: {0}")]
    Empty(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
