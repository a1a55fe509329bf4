//! Rewrites prepended-audio QA records into records whose prompts carry a
//! single inline `[AUDIO]` placeholder.

mod external;
pub mod templates;

use std::sync::LazyLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

pub use external::{
    forge_external, ExternalBackend, HttpRephraser, RephraseRequest, RephrasingClient, TemperatureRange,
};
pub use templates::{instantiate, system_prompt, user_prompt, TemplateBank, VARIETY_INSTRUCTIONS};

use crate::audio::AudioClipRef;
use crate::registry::Registry;
use crate::tokenizer::AUDIO_PLACEHOLDER;
use crate::util::stable_hash;

pub const BANNED_PHRASES: [&str; 3] = ["clip", "recording", "audio file"];

static BANNED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:audio\s+file|clip|recording)\b").expect("static regex"));

/// Modality cues replaced in open-ended questions; longer phrases first so a
/// shared start prefers the longer cue.
static CUES: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:the audio clip|this audio signal|this audio|the recording)\b").expect("static regex")
});

#[derive(Debug, thiserror::Error)]
pub enum ForgeError {
    #[error("record {id} rejected: {reason}")]
    Rejected { id: String, reason: String },
    #[error("rephrasing client failed: {0}")]
    Client(String),
    #[error("malformed rephrasing response: {0}")]
    Parse(String),
    #[error("temperature {value} outside [{min}, {max}]")]
    Temperature { value: f64, min: f64, max: f64 },
    #[error("invalid forge config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    LabelClassification,
    AcousticFeature,
    OpenEnded,
}

impl TaskType {
    pub const ALL: [TaskType; 3] = [Self::LabelClassification, Self::AcousticFeature, Self::OpenEnded];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Offline,
    External,
}

/// A source QA item whose prompt assumes the audio is prepended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub id: String,
    pub audio: AudioClipRef,
    pub prompt: String,
    pub answer: String,
    pub task_type: TaskType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgeRecord {
    pub id: String,
    pub audio: AudioClipRef,
    pub original_prompt: String,
    pub interleaved_prompt: String,
    pub answer: String,
    pub task_type: TaskType,
    pub backend: Backend,
    pub temperature_used: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarantineRecord {
    #[serde(flatten)]
    pub record: ForgeRecord,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    MissingPlaceholder,
    ExtraPlaceholder(usize),
    BannedWord(String),
    AnswerChanged,
    AudioChanged,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::MissingPlaceholder => write!(f, "no {AUDIO_PLACEHOLDER} placeholder"),
            Self::ExtraPlaceholder(n) => write!(f, "{n} {AUDIO_PLACEHOLDER} placeholders"),
            Self::BannedWord(w) => write!(f, "banned word {w:?}"),
            Self::AnswerChanged => write!(f, "answer differs from source"),
            Self::AudioChanged => write!(f, "audio reference differs from source"),
        }
    }
}

fn describe(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Placeholder-count and banned-word violations of one prompt string.
pub fn validate_prompt(prompt: &str) -> Vec<Violation> {
    let mut out = Vec::new();
    match prompt.matches(AUDIO_PLACEHOLDER).count() {
        0 => out.push(Violation::MissingPlaceholder),
        1 => {}
        n => out.push(Violation::ExtraPlaceholder(n)),
    }
    for m in BANNED.find_iter(prompt) {
        out.push(Violation::BannedWord(m.as_str().to_lowercase()));
    }
    out
}

pub fn validate_record(candidate: &ForgeRecord) -> Vec<Violation> {
    validate_prompt(&candidate.interleaved_prompt)
}

/// Full check including byte equality of answer and audio with the source.
pub fn validate_against(candidate: &ForgeRecord, source: &SourceRecord) -> Vec<Violation> {
    let mut out = validate_record(candidate);
    if candidate.answer != source.answer {
        out.push(Violation::AnswerChanged);
    }
    let bytes = |a: &AudioClipRef| serde_json::to_vec(a).expect("audio ref serializes");
    if bytes(&candidate.audio) != bytes(&source.audio) {
        out.push(Violation::AudioChanged);
    }
    out
}

/// Replaces the earliest modality cue with the placeholder, if any.
pub fn replace_cue(question: &str) -> Option<String> {
    let m = CUES.find(question)?;
    Some(format!("{}{AUDIO_PLACEHOLDER}{}", &question[..m.start()], &question[m.end()..]))
}

fn lower_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn record_rng(seed: u64, id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ stable_hash(&["forge", id]))
}

fn forged(source: &SourceRecord, prompt: String, backend: Backend, temperature: f64) -> ForgeRecord {
    ForgeRecord {
        id: source.id.clone(),
        audio: source.audio.clone(),
        original_prompt: source.prompt.clone(),
        interleaved_prompt: prompt,
        answer: source.answer.clone(),
        task_type: source.task_type,
        backend,
        temperature_used: temperature,
    }
}

/// Deterministic template rewrite. Classification prompts try the bank's
/// templates starting from a seeded index; open-ended questions swap their
/// first modality cue for the placeholder or fall back to a wrap template.
pub fn forge_offline(source: &SourceRecord, bank: &TemplateBank, seed: u64) -> Result<ForgeRecord, ForgeError> {
    let mut rng = record_rng(seed, &source.id);
    let mut candidates = Vec::new();
    if source.task_type == TaskType::OpenEnded {
        if let Some(c) = replace_cue(&source.prompt) {
            candidates.push(c);
        }
    }
    let templates = bank.templates(source.task_type);
    if candidates.is_empty() && !templates.is_empty() {
        let start = rng.random_range(0..templates.len());
        let payload = lower_first(&source.prompt);
        for i in 0..templates.len() {
            candidates.push(instantiate(&templates[(start + i) % templates.len()], &payload));
        }
    }
    let mut last = Vec::new();
    for c in candidates {
        let rec = forged(source, c, Backend::Offline, 0.0);
        let v = validate_against(&rec, source);
        if v.is_empty() {
            return Ok(rec);
        }
        last = v;
    }
    Err(ForgeError::Rejected {
        id: source.id.clone(),
        reason: if last.is_empty() {
            "no template for task".into()
        } else {
            describe(&last)
        },
    })
}

pub trait ForgeBackend: Send + Sync {
    fn kind(&self) -> Backend;
    fn forge(&self, source: &SourceRecord, seed: u64) -> Result<ForgeRecord, ForgeError>;
}

#[derive(Debug, Clone, Default)]
pub struct OfflineBackend {
    pub bank: TemplateBank,
}

impl ForgeBackend for OfflineBackend {
    fn kind(&self) -> Backend {
        Backend::Offline
    }

    fn forge(&self, source: &SourceRecord, seed: u64) -> Result<ForgeRecord, ForgeError> {
        forge_offline(source, &self.bank, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForgeSettings {
    pub temperature_min: f64,
    pub temperature_max: f64,
    pub max_retries: usize,
    pub max_in_flight: usize,
    pub timeout_s: u64,
    #[serde(skip)]
    pub endpoint: Option<String>,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub bank: TemplateBank,
}

impl Default for ForgeSettings {
    fn default() -> Self {
        Self {
            temperature_min: 0.7,
            temperature_max: 1.1,
            max_retries: 3,
            max_in_flight: 4,
            timeout_s: 30,
            endpoint: None,
            api_key: None,
            bank: TemplateBank::default(),
        }
    }
}

pub type BackendFactory = fn(&ForgeSettings) -> Result<Box<dyn ForgeBackend>, ForgeError>;

pub fn backends() -> Registry<BackendFactory> {
    let mut r: Registry<BackendFactory> = Registry::new("forge backend");
    r.register("offline", |s| Ok(Box::new(OfflineBackend { bank: s.bank.clone() })));
    r.register("external", |s| {
        let endpoint = s
            .endpoint
            .clone()
            .ok_or_else(|| ForgeError::Config("FORGE_ENDPOINT is not set".into()))?;
        let client = HttpRephraser::new(endpoint, s.api_key.clone(), s.timeout_s, s.max_in_flight)?;
        Ok(Box::new(ExternalBackend::new(Box::new(client), s)?))
    });
    r
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForgeOutcome {
    pub accepted: Vec<ForgeRecord>,
    pub quarantined: Vec<QuarantineRecord>,
}

/// Forges every record in parallel; each input lands in exactly one of the
/// two outputs, in input order.
pub fn forge_dataset(sources: &[SourceRecord], backend: &dyn ForgeBackend, seed: u64) -> ForgeOutcome {
    let results: Vec<_> = sources.par_iter().map(|s| (s, backend.forge(s, seed))).collect();
    let mut out = ForgeOutcome::default();
    for (s, r) in results {
        match r {
            Ok(rec) => out.accepted.push(rec),
            Err(e) => {
                let reason = match e {
                    ForgeError::Rejected { reason, .. } => reason,
                    other => other.to_string(),
                };
                out.quarantined.push(QuarantineRecord {
                    record: forged(s, String::new(), backend.kind(), 0.0),
                    reason,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    pub(crate) fn source(id: &str, task: TaskType, prompt: &str) -> SourceRecord {
        SourceRecord {
            id: id.into(),
            audio: AudioClipRef {
                id: format!("clip-{id}"),
                feature_path: PathBuf::from(format!("features/{id}.aftr")),
                duration_s: 10.0,
            },
            prompt: prompt.into(),
            answer: "Labels: Squeal".into(),
            task_type: task,
        }
    }

    #[test]
    fn validation_cases() {
        let s = source("a", TaskType::LabelClassification, "x");
        let mut r = forged(&s, "Consider [AUDIO].".into(), Backend::Offline, 0.0);
        assert!(validate_record(&r).is_empty());
        r.interleaved_prompt = "Consider it.".into();
        assert_eq!(validate_record(&r), vec![Violation::MissingPlaceholder]);
        r.interleaved_prompt = "Consider [AUDIO], the CLIP.".into();
        assert_eq!(validate_record(&r), vec![Violation::BannedWord("clip".into())]);
        r.interleaved_prompt = "[AUDIO] [AUDIO]".into();
        assert_eq!(validate_record(&r), vec![Violation::ExtraPlaceholder(2)]);
    }

    #[test]
    fn banned_words_are_whole_word() {
        assert!(validate_prompt("Eclipse near [AUDIO], recordings and clips").is_empty());
        assert_eq!(
            validate_prompt("[AUDIO] is an Audio  File"),
            vec![Violation::BannedWord("audio  file".into())]
        );
        // listening and hearing are fine
        assert!(validate_prompt("Listen to this: [AUDIO]. What do you hear?").is_empty());
    }

    #[test]
    fn open_ended_cue_replacement() {
        let s = source(
            "o",
            TaskType::OpenEnded,
            "What other sound events, if any, can be heard in the audio clip?",
        );
        let r = forge_offline(&s, &TemplateBank::default(), 1).unwrap();
        assert_eq!(r.interleaved_prompt, "What other sound events, if any, can be heard in [AUDIO]?");
        assert_eq!(
            replace_cue("Is this audio signal from this audio?").unwrap(),
            "Is [AUDIO] from this audio?"
        );
    }

    #[test]
    fn open_ended_wrap_fallback() {
        let s = source(
            "w",
            TaskType::OpenEnded,
            "What is the volume of the electric shaver sound compared to the music and singing?",
        );
        let r = forge_offline(&s, &TemplateBank::default(), 1).unwrap();
        assert_eq!(
            r.interleaved_prompt,
            "Based on [AUDIO], what is the volume of the electric shaver sound compared to the music and singing?"
        );
    }

    #[test]
    fn label_task_uses_bank() {
        let s = source("l", TaskType::LabelClassification, "Analyze audio events in clip given.");
        let bank = TemplateBank::default();
        let r = forge_offline(&s, &bank, 3).unwrap();
        assert!(bank.label.iter().any(|t| instantiate(t, "") == r.interleaved_prompt));
        assert_eq!(r.answer, s.answer);
        assert_eq!(r, forge_offline(&s, &bank, 3).unwrap());
    }

    #[test]
    fn banned_template_is_rejected() {
        let s = source("b", TaskType::LabelClassification, "Analyze audio events in clip given.");
        let bank = TemplateBank {
            label: vec!["Label the recording {AUDIO}.".into()],
            ..TemplateBank::default()
        };
        let err = forge_offline(&s, &bank, 0).unwrap_err();
        assert!(matches!(err, ForgeError::Rejected { ref reason, .. } if reason.contains("recording")), "{err}");
    }

    #[test]
    fn dataset_partition() {
        let bad_bank = TemplateBank {
            label: vec!["no placeholder".into()],
            ..TemplateBank::default()
        };
        let srcs = vec![
            source("1", TaskType::LabelClassification, "Classify."),
            source("2", TaskType::OpenEnded, "What is in the audio clip?"),
            source("3", TaskType::OpenEnded, "Is the recording of a clip?"),
        ];
        let out = forge_dataset(&srcs, &OfflineBackend { bank: bad_bank }, 0);
        let ids = |v: Vec<&str>| v.into_iter().map(String::from).collect::<Vec<_>>();
        assert_eq!(out.accepted.iter().map(|r| r.id.clone()).collect::<Vec<_>>(), ids(vec!["2"]));
        assert_eq!(
            out.quarantined.iter().map(|r| r.record.id.clone()).collect::<Vec<_>>(),
            ids(vec!["1", "3"])
        );
        let line = serde_json::to_string(&out.quarantined[1]).unwrap();
        assert!(line.contains("\"reason\":\"banned word \\\"clip\\\"\""), "{line}");
    }

    #[test]
    fn backend_registry() {
        let reg = backends();
        assert_eq!(reg.names(), ["offline", "external"]);
        let settings = ForgeSettings::default();
        assert_eq!((reg.get("offline").unwrap())(&settings).unwrap().kind(), Backend::Offline);
        assert!(matches!((reg.get("external").unwrap())(&settings), Err(ForgeError::Config(_))));
        assert!(reg.get("gpt").is_err());
    }
}
