//! Synonym/hypernym audio reasoning benchmark: fixture, queries, scoring.

pub mod decision;
mod eval;
pub mod lexicon;
pub mod metrics;

use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use decision::{extract_decision, score_identity, Decision, MatchedSpan, Parsed};
pub use eval::{evaluate, render_table, EvalSettings, MetricsReport, ResponseRecord};
pub use lexicon::{LexEntry, SoundClass, LEXICON};
pub use metrics::{compute_metrics, identity_metrics, IdentityMetrics, RelationMetrics};

use crate::audio::{AudioClipRef, AudioError, FeatureWorld};
use crate::layout::Format;
use crate::model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum ShardError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("fixture error: {0}")]
    Fixture(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Identity,
    Synonym,
    Hypernym,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truth {
    Yes,
    No,
    Label(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardItem {
    pub word: String,
    pub relation: Relation,
    pub candidate: Option<String>,
    pub audio: AudioClipRef,
    pub truth: Truth,
    pub sound_class: SoundClass,
}

pub const IDENTITY_NONINTERLEAVED: &str = "Can you list the labels based on this audio file?";
pub const IDENTITY_INTERLEAVED: &str = "Can you list the labels based on [AUDIO]?";
pub const SYNONYM_NONINTERLEAVED: &str = "Is the sound of the object in this audio signal similar to {synonym}?";
pub const SYNONYM_INTERLEAVED: &str = "Is [AUDIO] similar to {synonym}?";
pub const HYPERNYM_NONINTERLEAVED: &str = "Is the sound of the object in this audio signal a type of {hypernym}?";
pub const HYPERNYM_INTERLEAVED: &str = "Is [AUDIO] a type of {hypernym}?";

pub fn template(relation: Relation, format: Format) -> &'static str {
    match (relation, format) {
        (Relation::Identity, Format::NonInterleaved) => IDENTITY_NONINTERLEAVED,
        (Relation::Identity, Format::Interleaved) => IDENTITY_INTERLEAVED,
        (Relation::Synonym, Format::NonInterleaved) => SYNONYM_NONINTERLEAVED,
        (Relation::Synonym, Format::Interleaved) => SYNONYM_INTERLEAVED,
        (Relation::Hypernym, Format::NonInterleaved) => HYPERNYM_NONINTERLEAVED,
        (Relation::Hypernym, Format::Interleaved) => HYPERNYM_INTERLEAVED,
    }
}

pub fn query_prompt(relation: Relation, format: Format, candidate: Option<&str>) -> Result<String, ShardError> {
    let t = template(relation, format);
    match (relation, candidate) {
        (Relation::Identity, None) => Ok(t.to_string()),
        (Relation::Identity, Some(c)) => Err(ShardError::Schema(format!("identity item carries candidate {c:?}"))),
        (Relation::Synonym, Some(c)) => Ok(t.replace("{synonym}", c)),
        (Relation::Hypernym, Some(c)) => Ok(t.replace("{hypernym}", c)),
        (r, None) => Err(ShardError::Schema(format!("{r:?} item has no candidate"))),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub item: usize,
    pub repeat: usize,
    pub prompt: String,
}

/// Each item expanded `repeats` times, item-major.
pub fn build_queries(items: &[ShardItem], format: Format, repeats: usize) -> Result<Vec<Query>, ShardError> {
    if repeats == 0 {
        return Err(ShardError::Schema("repeats must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(items.len() * repeats);
    for (i, item) in items.iter().enumerate() {
        let prompt = query_prompt(item.relation, format, item.candidate.as_deref())?;
        out.extend((0..repeats).map(|repeat| Query {
            item: i,
            repeat,
            prompt: prompt.clone(),
        }));
    }
    Ok(out)
}

fn slug(label: &str) -> String {
    label.to_lowercase().replace(' ', "-")
}

/// Picks `n` cross-class terms that are unrelated to `entry`.
fn distractors(entry: &LexEntry, relation: Relation, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<String>, ShardError> {
    let mut pool: Vec<&str> = LEXICON
        .iter()
        .filter(|e| e.class != entry.class)
        .flat_map(|e| match relation {
            Relation::Synonym => e.synonyms,
            _ => e.hypernyms,
        })
        .filter(|t| !entry.relates_to(t))
        .collect();
    pool.sort_unstable();
    pool.dedup();
    if pool.len() < n {
        return Err(ShardError::Fixture(format!("not enough distractors for {}", entry.label)));
    }
    Ok(pool.choose_multiple(rng, n).map(|s| s.to_string()).collect())
}

/// Class-balanced round-robin over per-class shuffles of the lexicon.
fn pick_words(words: usize, rng: &mut ChaCha8Rng) -> Vec<&'static LexEntry> {
    let mut by_class: Vec<Vec<&LexEntry>> = SoundClass::ALL
        .iter()
        .map(|c| LEXICON.iter().filter(|e| e.class == *c).collect())
        .collect();
    for list in &mut by_class {
        list.shuffle(rng);
    }
    (0..words.min(LEXICON.len())).map(|i| by_class[i % 3][i / 3]).collect()
}

/// The words [`build_shard_fixture`] picks for `seed`, in fixture order.
pub fn select_words(seed: u64, words: usize) -> Vec<&'static LexEntry> {
    pick_words(words, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Seeded, class-balanced benchmark over the bundled lexicon. Each chosen word
/// gets `per_word_audio` clips written under `feature_dir`; every clip carries
/// one identity item plus two true and two distractor items per relation.
pub fn build_shard_fixture(
    seed: u64,
    words: usize,
    per_word_audio: usize,
    world: &FeatureWorld,
    feature_dir: &Path,
) -> Result<Vec<ShardItem>, ShardError> {
    if words == 0 || per_word_audio == 0 {
        return Err(ShardError::Fixture("words and per_word_audio must be at least 1".into()));
    }
    if words > LEXICON.len() {
        return Err(ShardError::Fixture(format!(
            "lexicon exhausted: {words} words requested, {} available",
            LEXICON.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = pick_words(words, &mut rng);
    let mut items = Vec::new();
    for entry in chosen {
        let syn_neg = distractors(entry, Relation::Synonym, 2, &mut rng)?;
        let hyp_neg = distractors(entry, Relation::Hypernym, 2, &mut rng)?;
        for c in 0..per_word_audio {
            let clip_id = format!("shard-{}-{c}", slug(entry.label));
            let audio = world.write_clip(feature_dir, entry.label, &clip_id)?;
            let item = |relation, candidate: Option<&str>, truth| ShardItem {
                word: entry.label.to_string(),
                relation,
                candidate: candidate.map(String::from),
                audio: audio.clone(),
                truth,
                sound_class: entry.class,
            };
            items.push(item(Relation::Identity, None, Truth::Label(entry.label.to_string())));
            for s in entry.synonyms {
                items.push(item(Relation::Synonym, Some(s), Truth::Yes));
            }
            for s in &syn_neg {
                items.push(item(Relation::Synonym, Some(s), Truth::No));
            }
            for h in entry.hypernyms {
                items.push(item(Relation::Hypernym, Some(h), Truth::Yes));
            }
            for h in &hyp_neg {
                items.push(item(Relation::Hypernym, Some(h), Truth::No));
            }
        }
    }
    Ok(items)
}
