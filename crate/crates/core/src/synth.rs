//! Synthetic prepended-audio QA records over the bundled lexicon.

use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{AudioError, FeatureWorld};
use crate::forge::{SourceRecord, TaskType};
use crate::shard::{select_words, LexEntry, LEXICON};

pub const LABEL_PROMPTS: [&str; 4] = [
    "Analyze audio events in clip given.",
    "What sound events can be heard in the audio clip?",
    "Classify the sounds in the recording.",
    "Which labels describe this audio?",
];

pub const ACOUSTIC_PROMPTS: [&str; 2] = [
    "Identify the noise in the audio clip? Analyze acoustic features first.",
    "Describe the acoustic features of the sounds in the recording and give their labels.",
];

pub const SIMILAR_PROMPTS: [&str; 4] = [
    "Is the sound in the audio clip similar to {c}?",
    "Does the recording sound similar to {c}?",
    "Would you say this audio is similar to {c}?",
    "Is this audio signal similar to {c}?",
];

pub const TYPE_PROMPTS: [&str; 4] = [
    "Is the source in the audio clip a type of {c}?",
    "Is what you hear in the recording a type of {c}?",
    "Would you call this audio a type of {c}?",
    "Is this audio signal a type of {c}?",
];

pub const YES_SIMILAR: &str = "Yes, it is similar.";
pub const YES_TYPE: &str = "Yes, it is a type of {c}.";
pub const NO_ANSWER: &str = "No, it is not.";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSettings {
    pub records: usize,
    /// Share of records that are yes/no relation questions; the rest split
    /// evenly between label and acoustic-feature classification.
    pub open_ended_share: f64,
    /// Restrict sources to the words the benchmark fixture picks for the same
    /// seed; 0 uses the whole lexicon.
    pub words: usize,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            records: 512,
            open_ended_share: 0.6,
            words: 0,
        }
    }
}

fn slug(label: &str) -> String {
    label.to_lowercase().replace(' ', "-")
}

fn related_or_not(entry: &LexEntry, similar: bool, positive: bool, rng: &mut ChaCha8Rng) -> String {
    if positive {
        let pool = if similar { entry.synonyms } else { entry.hypernyms };
        return pool.choose(rng).expect("two terms").to_string();
    }
    let pool: Vec<&str> = LEXICON
        .iter()
        .filter(|e| e.class != entry.class)
        .flat_map(|e| if similar { e.synonyms } else { e.hypernyms })
        .filter(|t| !entry.relates_to(t))
        .collect();
    pool.choose(rng).expect("cross-class pool").to_string()
}

/// `settings.records` seeded records cycling through the lexicon in shuffled
/// passes, each with its own clip written under `feature_dir`.
pub fn synth_sources(
    seed: u64,
    settings: &SynthSettings,
    world: &FeatureWorld,
    feature_dir: &Path,
) -> Result<Vec<SourceRecord>, AudioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool: Vec<&LexEntry> = if settings.words == 0 {
        LEXICON.iter().collect()
    } else {
        select_words(seed, settings.words)
    };
    let mut order: Vec<&LexEntry> = Vec::new();
    let mut out = Vec::with_capacity(settings.records);
    for n in 0..settings.records {
        if order.is_empty() {
            order = pool.clone();
            order.shuffle(&mut rng);
        }
        let entry = order.pop().expect("refilled");
        let id = format!("src-{n:05}");
        let audio = world.write_clip(feature_dir, entry.label, &format!("{id}-{}", slug(entry.label)))?;
        let roll: f64 = rng.random();
        let (task_type, prompt, answer) = if roll < settings.open_ended_share {
            let similar = rng.random_bool(0.5);
            let positive = rng.random_bool(0.5);
            let c = related_or_not(entry, similar, positive, &mut rng);
            let prompts = if similar { &SIMILAR_PROMPTS } else { &TYPE_PROMPTS };
            let prompt = prompts.choose(&mut rng).expect("non-empty").replace("{c}", &c);
            let answer = match (positive, similar) {
                (false, _) => NO_ANSWER.to_string(),
                (true, true) => YES_SIMILAR.to_string(),
                (true, false) => YES_TYPE.replace("{c}", &c),
            };
            (TaskType::OpenEnded, prompt, answer)
        } else if roll < settings.open_ended_share + (1.0 - settings.open_ended_share) / 2.0 {
            let prompt = LABEL_PROMPTS.choose(&mut rng).expect("non-empty").to_string();
            (TaskType::LabelClassification, prompt, format!("Labels: {}", entry.label))
        } else {
            let prompt = ACOUSTIC_PROMPTS.choose(&mut rng).expect("non-empty").to_string();
            let answer = format!("Labels with acoustic features: {} -> {}", entry.class.texture(), entry.label);
            (TaskType::AcousticFeature, prompt, answer)
        };
        out.push(SourceRecord {
            id,
            audio,
            prompt,
            answer,
            task_type,
        });
    }
    Ok(out)
}

/// Every string the synthetic task family can emit, for vocabulary building.
pub fn corpus() -> Vec<String> {
    let mut c: Vec<String> = LABEL_PROMPTS
        .iter()
        .chain(&ACOUSTIC_PROMPTS)
        .chain(&SIMILAR_PROMPTS)
        .chain(&TYPE_PROMPTS)
        .chain([&YES_SIMILAR, &YES_TYPE, &NO_ANSWER])
        .map(|s| s.to_string())
        .collect();
    c.push("Labels with acoustic features: ->".into());
    for e in LEXICON {
        c.push(e.label.to_string());
        c.extend(e.synonyms.iter().chain(&e.hypernyms).map(|s| s.to_string()));
        c.push(e.class.texture().to_string());
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_mix() {
        let dir = tempfile::tempdir().unwrap();
        let s = SynthSettings {
            records: 60,
            ..SynthSettings::default()
        };
        let a = synth_sources(4, &s, &FeatureWorld::default(), dir.path()).unwrap();
        let b = synth_sources(4, &s, &FeatureWorld::default(), dir.path()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 60);
        for t in TaskType::ALL {
            assert!(a.iter().any(|r| r.task_type == t), "{t:?}");
        }
        assert!(a.iter().all(|r| !r.prompt.contains("[AUDIO]") && r.audio.feature_path.exists()));
    }
}
