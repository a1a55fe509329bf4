//! Masked next-token fine-tuning loop.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Example, Model, ModelError};
use crate::numerics::{Adam, AdamConfig, LossReduction, NumericsError};
use crate::persistence::PersistenceError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("batch has no supervised positions")]
    NoSupervisedTokens,
    #[error("loss became {loss} at step {step}; last checkpoint left untouched")]
    Divergence { step: usize, loss: f64 },
    #[error("invalid train config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Persistence(#[from] PersistenceError),
    #[error(transparent)]
    Model(ModelError),
}

impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Numerics(NumericsError::NoSupervisedTokens) => Self::NoSupervisedTokens,
            ModelError::EmptyBatch => Self::NoSupervisedTokens,
            other => Self::Model(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
    pub loss_reduction: LossReduction,
    pub mask_prompt_text: bool,
    pub freeze_projection: bool,
    /// Train only adapters (and the projection unless frozen).
    pub freeze_backbone: bool,
    /// Write an intermediate checkpoint every this many steps; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 4,
            learning_rate: 1e-3,
            steps: 300,
            seed: 0,
            loss_reduction: LossReduction::Mean,
            mask_prompt_text: false,
            freeze_projection: false,
            freeze_backbone: false,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(TrainError::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}

/// Forward, masked loss, backward and one optimizer update.
pub fn train_step(
    batch: &[Example],
    model: &mut Model,
    optimizer: &mut Adam,
    reduction: LossReduction,
    step: usize,
) -> Result<f64, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::NoSupervisedTokens);
    }
    let loss = model.loss_and_grads(batch, reduction)?;
    if !loss.is_finite() {
        model.params_mut().values_mut().for_each(|t| t.zero_grad());
        return Err(TrainError::Divergence { step, loss });
    }
    optimizer.step(model.params_mut().iter_mut().map(|(n, t)| (n.as_str(), t)));
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub checkpoint: PathBuf,
    pub losses: Vec<f64>,
    pub checkpoints_written: Vec<PathBuf>,
}

pub const FINAL_CHECKPOINT: &str = "model.ilkm";
pub const TRAIN_LOG: &str = "train.log";

/// Trains `model` for `cfg.steps` steps over seeded shuffled epochs of
/// `data`, appending `step\tloss` lines to `out_dir/train.log`.
///
/// Optimizer moments are not checkpointed; a resumed run restarts them.
pub fn run(model: &mut Model, data: &[Example], cfg: &TrainConfig, out_dir: &Path) -> Result<RunOutcome, TrainError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    std::fs::create_dir_all(out_dir).map_err(|source| TrainError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    model.set_trainable(!cfg.freeze_backbone, !cfg.freeze_projection);
    let log_path = out_dir.join(TRAIN_LOG);
    let mut log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|source| TrainError::Io {
            path: log_path.clone(),
            source,
        })?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let mut optimizer = Adam::new(cfg.adam());
    let mut losses = Vec::with_capacity(cfg.steps);
    let mut written = Vec::new();
    for step in 1..=cfg.steps {
        if cursor >= order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + cfg.batch_size).min(order.len());
        let batch: Vec<Example> = order[cursor..end].iter().map(|&i| data[i].clone()).collect();
        cursor = end;
        let loss = train_step(&batch, model, &mut optimizer, cfg.loss_reduction, step)?;
        writeln!(log, "{step}\t{loss}").map_err(|source| TrainError::Io {
            path: log_path.clone(),
            source,
        })?;
        losses.push(loss);
        if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.steps {
            let p = out_dir.join(format!("ckpt-{step:06}.ilkm"));
            model.save(&p)?;
            written.push(p);
        }
    }
    let checkpoint = out_dir.join(FINAL_CHECKPOINT);
    model.save(&checkpoint)?;
    written.push(checkpoint.clone());
    Ok(RunOutcome {
        checkpoint,
        losses,
        checkpoints_written: written,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::FrontendConfig;
    use crate::model::ModelConfig;
    use crate::numerics::Tensor;
    use crate::sequence::{build_interleaved, BuildOptions};
    use crate::tokenizer::{Vocabulary, AUDIO_ID};

    fn setup() -> (Model, Vec<Example>) {
        let vocab = Vocabulary::build(&["what is this ? labels : dog cat"], 64).unwrap();
        let cfg = ModelConfig {
            d_model: 16,
            n_heads: 2,
            d_ff: 32,
            max_seq_len: 32,
            ..ModelConfig::default()
        };
        let fe = FrontendConfig {
            audio_slot_count: 2,
            d_audio: 4,
            d_model: 16,
        };
        let model = Model::new(cfg, fe, vocab.clone(), 3).unwrap();
        let mut prompt = vocab.encode("what is");
        prompt.push(AUDIO_ID);
        prompt.extend(vocab.encode("?"));
        let data = ["labels : dog", "labels : cat"]
            .iter()
            .enumerate()
            .map(|(i, a)| Example {
                seq: build_interleaved(&prompt, &vocab.encode(a), &BuildOptions::wrapped(2)).unwrap(),
                audio: vec![Tensor::new(vec![2, 4], vec![i as f64; 8]).unwrap()],
            })
            .collect();
        (model, data)
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(bad.validate(), Err(TrainError::Config(_))));
    }

    #[test]
    fn empty_dataset() {
        let (mut m, _) = setup();
        let dir = tempfile::tempdir().unwrap();
        let err = run(&mut m, &[], &TrainConfig::default(), dir.path()).unwrap_err();
        assert!(matches!(err, TrainError::EmptyDataset));
    }

    #[test]
    fn fully_masked_batch() {
        let (mut m, mut data) = setup();
        for p in data[0].seq.positions_mut() {
            p.label = crate::numerics::IGNORE_INDEX;
        }
        let mut opt = Adam::new(AdamConfig::default());
        let err = train_step(&data[..1], &mut m, &mut opt, LossReduction::Mean, 1).unwrap_err();
        assert!(matches!(err, TrainError::NoSupervisedTokens));
    }

    #[test]
    fn one_step_run_writes_one_checkpoint_and_log_line() {
        let (mut m, data) = setup();
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            steps: 1,
            checkpoint_every: 1,
            ..TrainConfig::default()
        };
        let out = run(&mut m, &data, &cfg, dir.path()).unwrap();
        assert_eq!(out.checkpoints_written.len(), 1);
        let ckpts = std::fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "ilkm"))
            .count();
        assert_eq!(ckpts, 1);
        let log = std::fs::read_to_string(dir.path().join(TRAIN_LOG)).unwrap();
        assert_eq!(log.lines().count(), 1);
        assert!(log.starts_with("1\t"));
    }

    #[test]
    fn periodic_checkpoints() {
        let (mut m, data) = setup();
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            steps: 5,
            checkpoint_every: 2,
            ..TrainConfig::default()
        };
        let out = run(&mut m, &data, &cfg, dir.path()).unwrap();
        let names: Vec<_> = out
            .checkpoints_written
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, ["ckpt-000002.ilkm", "ckpt-000004.ilkm", "model.ilkm"]);
    }

    #[test]
    fn seeded_runs_are_bit_identical() {
        let cfg = TrainConfig {
            steps: 6,
            batch_size: 1,
            ..TrainConfig::default()
        };
        let mut outs = Vec::new();
        for _ in 0..2 {
            let (mut m, data) = setup();
            let dir = tempfile::tempdir().unwrap();
            let out = run(&mut m, &data, &cfg, dir.path()).unwrap();
            outs.push((out.losses, std::fs::read(out.checkpoint).unwrap()));
        }
        assert_eq!(outs[0], outs[1]);
    }

    #[test]
    fn divergence_is_reported() {
        let (mut m, data) = setup();
        m.params_mut()["lm_head"].data_mut()[0] = f64::NAN;
        let mut opt = Adam::new(AdamConfig::default());
        let err = train_step(&data, &mut m, &mut opt, LossReduction::Mean, 7).unwrap_err();
        assert!(matches!(err, TrainError::Divergence { step: 7, .. }));
    }

    #[test]
    fn loss_decreases_on_repeated_example() {
        let (mut m, data) = setup();
        let mut opt = Adam::new(AdamConfig::default());
        let first = train_step(&data[..1], &mut m, &mut opt, LossReduction::Mean, 1).unwrap();
        let mut last = first;
        for s in 2..=300 {
            last = train_step(&data[..1], &mut m, &mut opt, LossReduction::Mean, s).unwrap();
        }
        assert!(last < 0.1 * first, "{first} -> {last}");
    }
}
