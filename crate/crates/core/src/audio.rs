//! Stub audio encoder and the linear projection into model space.
//!
//! The encoder is a frozen mean-pooler: a clip's stored feature frames are
//! split into `K` contiguous windows and each window is averaged to one slot.
//! [`FeatureWorld`] synthesizes clips from one seeded Gaussian per sound label
//! so a small model has something genuinely learnable to latch onto.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::numerics::{NumericsError, Tape, Tensor, Var};
use crate::persistence::{self, FeatureMatrix, PersistenceError};
use crate::util::stable_hash;

#[derive(Debug, thiserror::Error)]
pub enum AudioError {
    #[error("corrupt feature file {path}: {reason}")]
    CorruptFeature { path: PathBuf, reason: String },
    #[error(transparent)]
    Persistence(#[from] PersistenceError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid frontend config: {0}")]
    Config(String),
}

/// A stored clip: feature matrix on disk plus its nominal duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioClipRef {
    pub id: String,
    pub feature_path: PathBuf,
    pub duration_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrontendConfig {
    /// Number of embedding slots one clip expands to.
    pub audio_slot_count: usize,
    pub d_audio: usize,
    pub d_model: usize,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            audio_slot_count: 8,
            d_audio: 16,
            d_model: 64,
        }
    }
}

impl FrontendConfig {
    /// Dimensions of the full-size encoder/backbone pairing (32 slots, 768 → 4096).
    pub fn full_scale() -> Self {
        Self {
            audio_slot_count: 32,
            d_audio: 768,
            d_model: 4096,
        }
    }

    pub fn validate(&self) -> Result<(), AudioError> {
        if self.audio_slot_count == 0 || self.d_audio == 0 || self.d_model == 0 {
            return Err(AudioError::Config(format!("all dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// The projected `K × d_model` audio representation that replaces a placeholder.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioEmbeddingBlock {
    slots: Tensor,
}

impl AudioEmbeddingBlock {
    pub fn new(slots: Tensor, expected_slots: usize) -> Result<Self, AudioError> {
        let (k, _) = slots.dims2()?;
        if k != expected_slots {
            return Err(AudioError::Config(format!("block has {k} slots, expected {expected_slots}")));
        }
        if !slots.all_finite() {
            return Err(AudioError::Config("block contains non-finite values".into()));
        }
        Ok(Self { slots })
    }

    pub fn slots(&self) -> &Tensor {
        &self.slots
    }

    pub fn slot_count(&self) -> usize {
        self.slots.shape()[0]
    }
}

/// Mean-pools `frames` into exactly `k` slots over contiguous windows of
/// `frames / k` rows; the last window absorbs the remainder. With fewer frames
/// than slots, slot `i` copies frame `i * frames / k`.
pub fn pool_frames(m: &FeatureMatrix, k: usize) -> Vec<f64> {
    let (f, d) = (m.frames, m.feature_dim);
    let mut out = vec![0.0; k * d];
    let window = f / k;
    for slot in 0..k {
        let (start, end) = if window == 0 {
            let i = slot * f / k;
            (i, i + 1)
        } else if slot + 1 == k {
            (slot * window, f)
        } else {
            (slot * window, (slot + 1) * window)
        };
        let dst = &mut out[slot * d..(slot + 1) * d];
        for frame in start..end {
            for (o, v) in dst.iter_mut().zip(&m.data[frame * d..(frame + 1) * d]) {
                *o += f64::from(*v);
            }
        }
        let n = (end - start) as f64;
        dst.iter_mut().for_each(|o| *o /= n);
    }
    out
}

/// Reads a clip's features and pools them to a `K × d_audio` matrix.
pub fn encode_audio(clip: &AudioClipRef, cfg: &FrontendConfig) -> Result<Tensor, AudioError> {
    let corrupt = |reason: String| AudioError::CorruptFeature {
        path: clip.feature_path.clone(),
        reason,
    };
    let m = persistence::read_features(&clip.feature_path).map_err(|e| match e {
        PersistenceError::Io { .. } => AudioError::Persistence(e),
        other => corrupt(other.to_string()),
    })?;
    if m.frames == 0 {
        return Err(corrupt("no frames".into()));
    }
    if m.feature_dim != cfg.d_audio {
        return Err(corrupt(format!("feature_dim {} but d_audio is {}", m.feature_dim, cfg.d_audio)));
    }
    if let Some(i) = m.data.iter().position(|v| !v.is_finite()) {
        return Err(corrupt(format!("non-finite value at index {i}")));
    }
    Ok(Tensor::new(vec![cfg.audio_slot_count, cfg.d_audio], pool_frames(&m, cfg.audio_slot_count))?)
}

/// `h · weights + bias` outside any tape.
pub fn project(h: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<AudioEmbeddingBlock, AudioError> {
    let (k, _) = h.dims2()?;
    let mut tape = Tape::new();
    let (hv, wv, bv) = (tape.leaf(h), tape.leaf(weights), tape.leaf(bias));
    let out = project_on_tape(&mut tape, hv, wv, bv)?;
    AudioEmbeddingBlock::new(tape.to_tensor(out), k)
}

/// Gradient-tracked projection used during training.
pub fn project_on_tape(tape: &mut Tape, h: Var, weights: Var, bias: Var) -> Result<Var, NumericsError> {
    let z = tape.matmul(h, weights)?;
    tape.add_row(z, bias)
}

/// Seeded generator of synthetic clips: one Gaussian mean per sound label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureWorld {
    pub seed: u64,
    pub feature_dim: usize,
    pub frames: usize,
    /// Per-frame noise standard deviation around the label mean.
    pub noise_std: f64,
    pub duration_s: f64,
}

impl Default for FeatureWorld {
    fn default() -> Self {
        Self {
            seed: 7,
            feature_dim: 16,
            frames: 16,
            noise_std: 0.5,
            duration_s: 10.0,
        }
    }
}

impl FeatureWorld {
    pub fn label_mean(&self, label: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ stable_hash(&["mean", label]));
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        (0..self.feature_dim).map(|_| normal.sample(&mut rng)).collect()
    }

    pub fn sample_clip(&self, label: &str, clip_id: &str) -> FeatureMatrix {
        let mean = self.label_mean(label);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ stable_hash(&["clip", label, clip_id]));
        let noise = Normal::new(0.0, self.noise_std.max(f64::MIN_POSITIVE)).expect("valid std");
        let data = (0..self.frames)
            .flat_map(|_| mean.iter().map(|m| (m + noise.sample(&mut rng)) as f32).collect::<Vec<_>>())
            .collect();
        FeatureMatrix {
            frames: self.frames,
            feature_dim: self.feature_dim,
            data,
        }
    }

    /// Writes a clip's feature file under `dir` and returns its reference.
    pub fn write_clip(&self, dir: &Path, label: &str, clip_id: &str) -> Result<AudioClipRef, AudioError> {
        let path = dir.join(format!("{clip_id}.aftr"));
        persistence::write_features(&path, &self.sample_clip(label, clip_id))?;
        Ok(AudioClipRef {
            id: clip_id.to_string(),
            feature_path: path,
            duration_s: self.duration_s,
        })
    }
}
