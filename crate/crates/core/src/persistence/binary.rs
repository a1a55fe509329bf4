use std::fs;
use std::path::Path;

use super::{PersistenceError, SchemaVersion, WriteLock};
use crate::numerics::Tensor;

pub const FEATURE_SCHEMA: SchemaVersion = SchemaVersion {
    magic: *b"AFTR",
    version: 1,
    kind: "feature",
};

pub const CHECKPOINT_SCHEMA: SchemaVersion = SchemaVersion {
    magic: *b"ILKM",
    version: 1,
    kind: "checkpoint",
};

/// Frame-major audio feature matrix as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub frames: usize,
    pub feature_dim: usize,
    pub data: Vec<f32>,
}

/// Layout: `"AFTR"`, version u32, frames u32, feature_dim u32, then
/// `frames * feature_dim` little-endian f32 values.
pub fn write_features(path: &Path, m: &FeatureMatrix) -> Result<(), PersistenceError> {
    let mut buf = Vec::with_capacity(16 + m.data.len() * 4);
    buf.extend_from_slice(&FEATURE_SCHEMA.magic);
    buf.extend_from_slice(&FEATURE_SCHEMA.version.to_le_bytes());
    buf.extend_from_slice(&(m.frames as u32).to_le_bytes());
    buf.extend_from_slice(&(m.feature_dim as u32).to_le_bytes());
    for v in &m.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    write_bytes(path, &buf)
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix, PersistenceError> {
    let bytes = fs::read(path).map_err(|e| PersistenceError::io(path, e))?;
    let mut r = Reader::new(path, &bytes);
    let magic = r.take(4)?;
    let version = r.u32()?;
    FEATURE_SCHEMA.check(path, magic, version)?;
    let frames = r.u32()? as usize;
    let feature_dim = r.u32()? as usize;
    let expected = 16 + (frames * feature_dim * 4) as u64;
    if bytes.len() as u64 != expected {
        return Err(PersistenceError::Integrity {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    let data = (0..frames * feature_dim)
        .map(|_| r.take(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))))
        .collect::<Result<_, _>>()?;
    Ok(FeatureMatrix {
        frames,
        feature_dim,
        data,
    })
}

/// Serialized model state: an opaque JSON config block plus named tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointData {
    pub config_json: String,
    pub tensors: Vec<(String, Tensor)>,
}

/// Layout: `"ILKM"`, version u32, body length u64, then the body:
/// config length u32 + UTF-8 JSON, tensor count u32, and per tensor
/// name length u32 + name, rank u32, rank × u64 dims, little-endian f64 payload.
pub fn encode_checkpoint(data: &CheckpointData) -> Vec<u8> {
    let mut body = Vec::new();
    put_str(&mut body, &data.config_json);
    body.extend_from_slice(&(data.tensors.len() as u32).to_le_bytes());
    for (name, t) in &data.tensors {
        put_str(&mut body, name);
        body.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            body.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            body.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut out = Vec::with_capacity(16 + body.len());
    out.extend_from_slice(&CHECKPOINT_SCHEMA.magic);
    out.extend_from_slice(&CHECKPOINT_SCHEMA.version.to_le_bytes());
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(&body);
    out
}

pub fn decode_checkpoint(path: &Path, bytes: &[u8]) -> Result<CheckpointData, PersistenceError> {
    let mut r = Reader::new(path, bytes);
    let magic = r.take(4)?;
    let version = r.u32()?;
    CHECKPOINT_SCHEMA.check(path, magic, version)?;
    let body_len = r.u64()?;
    let actual = (bytes.len() - 16) as u64;
    if actual != body_len {
        return Err(PersistenceError::Integrity {
            path: path.to_path_buf(),
            expected: body_len + 16,
            actual: bytes.len() as u64,
        });
    }
    let config_json = r.string()?;
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.string()?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let values = (0..n)
            .map(|_| r.take(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))))
            .collect::<Result<Vec<_>, _>>()?;
        let t = Tensor::new(shape, values).map_err(|e| r.malformed(e.to_string()))?;
        tensors.push((name, t));
    }
    if r.pos != bytes.len() {
        return Err(r.malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(CheckpointData { config_json, tensors })
}

pub fn write_checkpoint(path: &Path, data: &CheckpointData) -> Result<(), PersistenceError> {
    write_bytes(path, &encode_checkpoint(data))
}

pub fn read_checkpoint(path: &Path) -> Result<CheckpointData, PersistenceError> {
    let bytes = fs::read(path).map_err(|e| PersistenceError::io(path, e))?;
    decode_checkpoint(path, &bytes)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), PersistenceError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| PersistenceError::io(parent, e))?;
    }
    let _lock = WriteLock::acquire(path)?;
    fs::write(path, bytes).map_err(|e| PersistenceError::io(path, e))
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(path: &'a Path, bytes: &'a [u8]) -> Self {
        Self { path, bytes, pos: 0 }
    }

    fn malformed(&self, message: String) -> PersistenceError {
        PersistenceError::Malformed {
            path: self.path.to_path_buf(),
            message,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], PersistenceError> {
        if self.pos + n > self.bytes.len() {
            return Err(PersistenceError::Integrity {
                path: self.path.to_path_buf(),
                expected: (self.pos + n) as u64,
                actual: self.bytes.len() as u64,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, PersistenceError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, PersistenceError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, PersistenceError> {
        let n = self.u32()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|e| self.malformed(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CheckpointData {
        CheckpointData {
            config_json: "{\"d\":2}".into(),
            tensors: vec![
                ("a".into(), Tensor::new(vec![2, 2], vec![1.0, -2.5, 3.25, f64::MIN_POSITIVE]).unwrap()),
                ("b".into(), Tensor::vector(vec![0.1])),
            ],
        }
    }

    #[test]
    fn checkpoint_round_trip_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        write_checkpoint(&p, &sample()).unwrap();
        let back = read_checkpoint(&p).unwrap();
        assert_eq!(back, sample());
        assert_eq!(encode_checkpoint(&back), fs::read(&p).unwrap());
    }

    #[test]
    fn truncated_checkpoint_fails_integrity() {
        let bytes = encode_checkpoint(&sample());
        let cut = &bytes[..bytes.len() - 8];
        let err = decode_checkpoint(Path::new("m.ckpt"), cut).unwrap_err();
        assert!(matches!(err, PersistenceError::Integrity { .. }), "{err}");
    }

    #[test]
    fn wrong_magic_names_both_tags() {
        let mut bytes = encode_checkpoint(&sample());
        bytes[..4].copy_from_slice(b"AFTR");
        let err = decode_checkpoint(Path::new("m.ckpt"), &bytes).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("ILKM") && msg.contains("AFTR"), "{msg}");
    }

    #[test]
    fn newer_version_is_refused() {
        let mut bytes = encode_checkpoint(&sample());
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        let err = decode_checkpoint(Path::new("m.ckpt"), &bytes).unwrap_err();
        assert!(matches!(err, PersistenceError::UnsupportedVersion { found: 2, supported: 1, .. }));
    }

    #[test]
    fn older_version_without_migration_is_refused() {
        let mut bytes = encode_checkpoint(&sample());
        bytes[4..8].copy_from_slice(&0u32.to_le_bytes());
        let err = decode_checkpoint(Path::new("m.ckpt"), &bytes).unwrap_err();
        assert!(matches!(err, PersistenceError::UnsupportedVersion { found: 0, .. }));
    }

    #[test]
    fn feature_file_round_trip_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("clip.aftr");
        let m = FeatureMatrix {
            frames: 2,
            feature_dim: 3,
            data: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        };
        write_features(&p, &m).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"AFTR");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(f32::from_le_bytes(bytes[16..20].try_into().unwrap()), 1.0);
        assert_eq!(bytes.len(), 16 + 24);
        assert_eq!(read_features(&p).unwrap(), m);
    }

    #[test]
    fn feature_file_with_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.aftr");
        fs::write(&p, b"XXXX\x01\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00").unwrap();
        let err = read_features(&p).unwrap_err();
        assert!(matches!(err, PersistenceError::Magic { .. }));
    }
}
