use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use super::PersistenceError;

/// Advisory exclusive-writer lock: a `<file>.lock` sibling created with
/// `create_new` and removed on drop.
#[derive(Debug)]
pub struct WriteLock {
    lock_path: PathBuf,
}

impl WriteLock {
    pub fn acquire(path: &Path) -> Result<Self, PersistenceError> {
        let mut name = path.file_name().unwrap_or_default().to_os_string();
        name.push(".lock");
        let lock_path = path.with_file_name(name);
        match OpenOptions::new().write(true).create_new(true).open(&lock_path) {
            Ok(_) => Ok(Self { lock_path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(PersistenceError::Locked {
                path: path.to_path_buf(),
                lock: lock_path,
            }),
            Err(e) => Err(PersistenceError::io(&lock_path, e)),
        }
    }
}

impl Drop for WriteLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.lock_path);
    }
}
