//! Readers and writers for every on-disk artifact.
//!
//! Datasets, fixtures, and reports are line-delimited JSON or plain text.
//! Tensors and audio features are little-endian binary behind a 4-byte magic
//! tag and a version number.

mod binary;
mod lock;
mod records;

use std::path::{Path, PathBuf};

pub use binary::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, read_features, write_checkpoint, write_features,
    CheckpointData, FeatureMatrix, CHECKPOINT_SCHEMA, FEATURE_SCHEMA,
};
pub use lock::WriteLock;
pub use records::{read_records, read_vocab, write_records, write_text, write_vocab, LineError, ReadMode};

#[derive(Debug, thiserror::Error)]
pub enum PersistenceError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: expected magic {expected:?}, found {found:?}")]
    Magic {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}: unsupported {kind} version {found} (reader supports {supported}; no migration registered)")]
    UnsupportedVersion {
        path: PathBuf,
        kind: &'static str,
        found: u32,
        supported: u32,
    },
    #[error("{path}: integrity check failed: header declares {expected} bytes, file has {actual}")]
    Integrity {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },
    #[error("{path}: malformed content: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: locked by another writer ({lock})")]
    Locked { path: PathBuf, lock: PathBuf },
    #[error("{path}: {message}")]
    Vocabulary { path: PathBuf, message: String },
}

impl PersistenceError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Magic tag plus version for a binary format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchemaVersion {
    pub magic: [u8; 4],
    pub version: u32,
    pub kind: &'static str,
}

impl SchemaVersion {
    /// Versions older than `self.version` that a registered migration can lift.
    /// Nothing is registered yet, so only the current version is readable.
    const MIGRATIONS: &'static [u32] = &[];

    pub(crate) fn check(&self, path: &Path, magic: &[u8], version: u32) -> Result<(), PersistenceError> {
        if magic != self.magic {
            return Err(PersistenceError::Magic {
                path: path.to_path_buf(),
                expected: String::from_utf8_lossy(&self.magic).into_owned(),
                found: String::from_utf8_lossy(magic).into_owned(),
            });
        }
        if version == self.version || Self::MIGRATIONS.contains(&version) {
            return Ok(());
        }
        Err(PersistenceError::UnsupportedVersion {
            path: path.to_path_buf(),
            kind: self.kind,
            found: version,
            supported: self.version,
        })
    }
}
