//! End-to-end glue: synthetic sources, forging, vocabulary, training
//! examples, fine-tuning and benchmark evaluation.

use std::path::{Path, PathBuf};

use crate::audio::{encode_audio, AudioError, FrontendConfig};
use crate::config::{ConfigError, RunConfig};
use crate::forge::{forge_dataset, ForgeOutcome, OfflineBackend, SourceRecord, TemplateBank};
use crate::forge::ForgeRecord;
use crate::layout::{layout, Format};
use crate::model::{Example, Model, ModelError};
use crate::sequence::{BuildOptions, SequenceError};
use crate::shard::{self, build_shard_fixture, evaluate, MetricsReport, Relation, ResponseRecord, ShardError, ShardItem};
use crate::synth::{self, synth_sources};
use crate::tokenizer::{TokenizerError, Vocabulary};
use crate::trainer::{self, TrainError};

/// Large enough to hold every word the bundled task family can produce.
pub const VOCAB_MAX: usize = 4096;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("record {id}: {source}")]
    Record {
        id: String,
        #[source]
        source: SequenceError,
    },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Shard(#[from] ShardError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Forged prompts and answers, the default template banks, both evaluation
/// template families and the lexicon.
pub fn vocab_corpus(records: &[ForgeRecord], bank: &TemplateBank) -> Vec<String> {
    let mut c = synth::corpus();
    for r in records {
        c.push(r.original_prompt.clone());
        c.push(r.interleaved_prompt.clone());
        c.push(r.answer.clone());
    }
    c.extend(bank.label.iter().chain(&bank.acoustic).chain(&bank.open_ended_wrap).cloned());
    for rel in [Relation::Identity, Relation::Synonym, Relation::Hypernym] {
        for f in [Format::Interleaved, Format::NonInterleaved] {
            c.push(shard::template(rel, f).to_string());
        }
    }
    c
}

pub fn build_vocab(records: &[ForgeRecord], bank: &TemplateBank) -> Result<Vocabulary, TokenizerError> {
    Vocabulary::build(&vocab_corpus(records, bank), VOCAB_MAX)
}

/// Tokenizes each record under `format` and encodes its clip.
pub fn to_examples(
    records: &[ForgeRecord],
    format: Format,
    vocab: &Vocabulary,
    frontend: &FrontendConfig,
    mask_prompt_text: bool,
) -> Result<Vec<Example>, PipelineError> {
    let lay = layout(format);
    let opts = BuildOptions {
        mask_prompt_text,
        ..BuildOptions::wrapped(frontend.audio_slot_count)
    };
    records
        .iter()
        .map(|r| {
            let prompt = vocab.encode(lay.training_prompt(r));
            let seq = lay
                .build(&prompt, &vocab.encode(&r.answer), &opts)
                .map_err(|source| PipelineError::Record {
                    id: r.id.clone(),
                    source,
                })?;
            Ok(Example {
                seq,
                audio: vec![encode_audio(&r.audio, frontend)?],
            })
        })
        .collect()
}

/// Everything shared by the conditions of one run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub sources: Vec<SourceRecord>,
    pub forged: ForgeOutcome,
    pub vocab: Vocabulary,
    pub items: Vec<ShardItem>,
}

/// Writes source and benchmark clips under `dir/features` and forges the
/// sources offline.
pub fn prepare(cfg: &RunConfig, dir: &Path) -> Result<Prepared, PipelineError> {
    cfg.validate()?;
    let features = dir.join("features");
    let sources = synth_sources(cfg.seed, &cfg.synth, &cfg.world, &features)?;
    let backend = OfflineBackend {
        bank: cfg.forge.bank.clone(),
    };
    let forged = forge_dataset(&sources, &backend, cfg.seed);
    let vocab = build_vocab(&forged.accepted, &cfg.forge.bank)?;
    let items = build_shard_fixture(
        cfg.seed,
        cfg.fixture.words,
        cfg.fixture.per_word_audio,
        &cfg.world,
        &features,
    )?;
    Ok(Prepared {
        sources,
        forged,
        vocab,
        items,
    })
}

#[derive(Debug, Clone)]
pub struct Condition {
    pub checkpoint: PathBuf,
    pub losses: Vec<f64>,
    pub report: MetricsReport,
    pub responses: Vec<ResponseRecord>,
}

/// Fine-tunes a fresh model on the forged records laid out as `format`
/// (under `out_dir`), then evaluates it with the matching prompt family.
pub fn train_and_eval(
    cfg: &RunConfig,
    prepared: &Prepared,
    format: Format,
    out_dir: &Path,
) -> Result<Condition, PipelineError> {
    let data = to_examples(
        &prepared.forged.accepted,
        format,
        &prepared.vocab,
        &cfg.frontend,
        cfg.train.mask_prompt_text,
    )?;
    let mut model = Model::new(cfg.model, cfg.frontend, prepared.vocab.clone(), cfg.seed)?;
    let outcome = trainer::run(&mut model, &data, &cfg.train, out_dir)?;
    let (report, responses) = evaluate(&model, &prepared.items, format, &cfg.eval)?;
    Ok(Condition {
        checkpoint: outcome.checkpoint,
        losses: outcome.losses,
        report,
        responses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::SynthSettings;

    #[test]
    fn examples_follow_layout() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            synth: SynthSettings {
                records: 12,
                ..SynthSettings::default()
            },
            ..RunConfig::default()
        };
        let p = prepare(&cfg, dir.path()).unwrap();
        assert_eq!(p.forged.accepted.len() + p.forged.quarantined.len(), 12);
        let k = cfg.frontend.audio_slot_count;
        for f in [Format::Interleaved, Format::NonInterleaved] {
            let ex = to_examples(&p.forged.accepted, f, &p.vocab, &cfg.frontend, false).unwrap();
            for (e, r) in ex.iter().zip(&p.forged.accepted) {
                let text = p.vocab.encode(layout(f).training_prompt(r)).len() + p.vocab.encode(&r.answer).len();
                let placeholders = usize::from(f == Format::Interleaved);
                assert_eq!(e.seq.len(), 2 + text - placeholders + k);
                assert_eq!(e.audio[0].shape(), &[k, cfg.frontend.d_audio]);
            }
        }
        let unk = p
            .items
            .iter()
            .filter_map(|i| i.candidate.as_deref())
            .flat_map(|c| p.vocab.encode(c))
            .filter(|&id| id == crate::tokenizer::UNK_ID)
            .count();
        assert_eq!(unk, 0);
    }
}
