//! Merged run configuration loaded from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{FeatureWorld, FrontendConfig};
use crate::forge::ForgeSettings;
use crate::model::ModelConfig;
use crate::shard::EvalSettings;
use crate::synth::SynthSettings;
use crate::trainer::TrainConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureSettings {
    pub words: usize,
    pub per_word_audio: usize,
}

impl Default for FixtureSettings {
    fn default() -> Self {
        Self {
            words: 78,
            per_word_audio: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub world: FeatureWorld,
    pub synth: SynthSettings,
    pub fixture: FixtureSettings,
    pub frontend: FrontendConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub forge: ForgeSettings,
    pub eval: EvalSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut c = Self {
            seed: 0,
            world: FeatureWorld::default(),
            synth: SynthSettings::default(),
            fixture: FixtureSettings::default(),
            frontend: FrontendConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            forge: ForgeSettings::default(),
            eval: EvalSettings::default(),
        };
        c.apply_seed(0);
        c
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: Self = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is plain data")
    }

    /// Sets the run seed and every component seed derived from it.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.world.seed = seed;
        self.train.seed = seed;
        self.eval.seed = seed;
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.frontend.validate().map_err(|e| invalid(&e))?;
        // vocab_size comes from the built vocabulary, not the file
        let model = ModelConfig {
            vocab_size: self.model.vocab_size.max(1),
            ..self.model
        };
        model.validate().map_err(|e| invalid(&e))?;
        self.train.validate().map_err(|e| invalid(&e))?;
        if self.frontend.d_model != self.model.d_model {
            return Err(ConfigError::Invalid(format!(
                "d_model mismatch: frontend projects to {} but the model width is {}",
                self.frontend.d_model, self.model.d_model
            )));
        }
        if self.frontend.audio_slot_count >= self.model.max_seq_len {
            return Err(ConfigError::Invalid(format!(
                "audio_slot_count {} leaves no room for text within max_seq_len {}",
                self.frontend.audio_slot_count, self.model.max_seq_len
            )));
        }
        if self.world.feature_dim != self.frontend.d_audio {
            return Err(ConfigError::Invalid(format!(
                "feature_dim {} does not match frontend d_audio {}",
                self.world.feature_dim, self.frontend.d_audio
            )));
        }
        if self.world.frames == 0 {
            return Err(ConfigError::Invalid("world.frames must be at least 1".into()));
        }
        if self.eval.repeats == 0 {
            return Err(ConfigError::Invalid("eval.repeats must be at least 1".into()));
        }
        if !(self.forge.temperature_min <= self.forge.temperature_max) {
            return Err(ConfigError::Invalid(format!(
                "forge temperature range [{}, {}] is empty",
                self.forge.temperature_min, self.forge.temperature_max
            )));
        }
        if !(0.0..=1.0).contains(&self.synth.open_ended_share) {
            return Err(ConfigError::Invalid("synth.open_ended_share must lie in [0, 1]".into()));
        }
        Ok(())
    }
}
