use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{PersistenceError, WriteLock};
use crate::tokenizer::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReadMode {
    /// Stop at the first malformed line.
    Strict,
    /// Collect malformed lines and keep going.
    #[default]
    Lenient,
}

/// A line that failed to parse, 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

/// Reads one JSON object per non-blank line.
pub fn read_records<T: DeserializeOwned>(
    path: &Path,
    mode: ReadMode,
) -> Result<(Vec<T>, Vec<LineError>), PersistenceError> {
    let file = fs::File::open(path).map_err(|e| PersistenceError::io(path, e))?;
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| PersistenceError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<T>(&line) {
            Ok(r) => records.push(r),
            Err(e) => {
                let err = LineError {
                    line: i + 1,
                    message: e.to_string(),
                };
                if mode == ReadMode::Strict {
                    return Err(PersistenceError::Record {
                        path: path.to_path_buf(),
                        line: err.line,
                        message: err.message,
                    });
                }
                errors.push(err);
            }
        }
    }
    Ok((records, errors))
}

pub fn write_records<T: Serialize>(path: &Path, records: &[T]) -> Result<(), PersistenceError> {
    let mut out = String::new();
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| PersistenceError::Malformed {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        out.push_str(&line);
        out.push('\n');
    }
    write_text(path, &out)
}

/// Writes `content` under an exclusive lock, creating parent directories.
pub fn write_text(path: &Path, content: &str) -> Result<(), PersistenceError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| PersistenceError::io(parent, e))?;
    }
    let _lock = WriteLock::acquire(path)?;
    let mut f = fs::File::create(path).map_err(|e| PersistenceError::io(path, e))?;
    f.write_all(content.as_bytes()).map_err(|e| PersistenceError::io(path, e))
}

/// One token per line; the line number is the id.
pub fn write_vocab(path: &Path, vocab: &Vocabulary) -> Result<(), PersistenceError> {
    let mut out = vocab.tokens().join("\n");
    out.push('\n');
    write_text(path, &out)
}

pub fn read_vocab(path: &Path) -> Result<Vocabulary, PersistenceError> {
    let text = fs::read_to_string(path).map_err(|e| PersistenceError::io(path, e))?;
    let tokens = text.lines().map(str::to_string).collect();
    Vocabulary::from_tokens(tokens).map_err(|e| PersistenceError::Vocabulary {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Row {
        id: u32,
        name: String,
    }

    #[test]
    fn lenient_and_strict_modes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.jsonl");
        let rows = vec![Row { id: 1, name: "a".into() }, Row { id: 2, name: "b".into() }];
        write_records(&path, &rows).unwrap();
        let (back, errs) = read_records::<Row>(&path, ReadMode::Strict).unwrap();
        assert_eq!(back, rows);
        assert!(errs.is_empty());

        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("{\"id\": oops}\n{\"id\":3,\"name\":\"c\"}\n");
        fs::write(&path, text).unwrap();
        let (back, errs) = read_records::<Row>(&path, ReadMode::Lenient).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].line, 3);
        let err = read_records::<Row>(&path, ReadMode::Strict).unwrap_err();
        assert!(matches!(err, PersistenceError::Record { line: 3, .. }));
    }

    #[test]
    fn missing_file_error_names_path() {
        let err = read_records::<Row>(Path::new("/nonexistent/x.jsonl"), ReadMode::Lenient).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.jsonl"));
    }

    #[test]
    fn held_lock_blocks_writer() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        let guard = WriteLock::acquire(&path).unwrap();
        assert!(matches!(write_text(&path, "x"), Err(PersistenceError::Locked { .. })));
        drop(guard);
        write_text(&path, "x").unwrap();
        assert!(!dir.path().join("out.txt.lock").exists());
    }

    #[test]
    fn vocab_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = Vocabulary::build(&["the car is loud"], 32).unwrap();
        write_vocab(&path, &v).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().nth(3), Some("[AUDIO]"));
        assert_eq!(read_vocab(&path).unwrap(), v);
    }
}
