//! Rephrasing-service prompt protocol and the offline rewrite bank.

use serde::{Deserialize, Serialize};

use super::TaskType;

pub const VARIETY_INSTRUCTIONS: [&str; 8] = [
    "Use creative and varied language.",
    "Employ different sentence structures and word choices.",
    "Be innovative in your phrasing while maintaining clarity.",
    "Use diverse vocabulary and avoid repetitive patterns.",
    "Create unique formulations while keeping the core meaning.",
    "Vary your word choice and sentence construction.",
    "Express the same concept using different linguistic approaches.",
    "Be original in your expression while preserving the instruction's purpose.",
];

const SYSTEM_OPENING: &str =
    "You are an expert AI assistant specializing in revising prompts for multimodal language models.";
const PLACEHOLDER_RULE: &str = "The new prompt must contain the exact placeholder [AUDIO] one and only one time.";
const MEDIA_RULE: &str = "The new prompt must avoid words that explicitly refer to a media file, such as \"clip,\" \"recording,\" or \"audio file.\"";
const ABSTRACT_RULE: &str =
    "You must take the user's 'Old Prompt' and rephrase it into an abstract, interleaved instruction.";
const GENERAL_RULE: &str = "The new prompt must be completely general and scenario-agnostic.";
const JSON_RULE: &str =
    "Your final output must be a single JSON object with one key: \"revised_prompt\". Do not include any other text.";
const IMPORTANT_TAIL: &str = "Make each instruction distinct and avoid formulaic responses. Use different words and sentence structures even when the meaning is similar.";

fn rules(task: TaskType) -> Vec<&'static str> {
    match task {
        TaskType::LabelClassification => vec![ABSTRACT_RULE, PLACEHOLDER_RULE, MEDIA_RULE, GENERAL_RULE, JSON_RULE],
        TaskType::AcousticFeature => vec![
            ABSTRACT_RULE,
            PLACEHOLDER_RULE,
            "The prompt must explicitly ask for both a label AND a description of its acoustic features.",
            MEDIA_RULE,
            GENERAL_RULE,
            "Your final output must be a single JSON object with one key: revised_prompt, e.g. {'revised_prompt': '...'}. Do not include any other text.",
        ],
        TaskType::OpenEnded => vec![
            "You must take the user's 'Old Prompt' and rephrase it by naturally integrating the [AUDIO] placeholder into the question.",
            "The new prompt must preserve the full intent and meaning of the original question.",
            PLACEHOLDER_RULE,
            MEDIA_RULE,
            "The resulting prompt should be a single, grammatically correct, and natural-sounding question.",
            JSON_RULE,
        ],
    }
}

pub fn system_prompt(task: TaskType, instruction: &str) -> String {
    let task_line = match task {
        TaskType::LabelClassification => "Your task is to rewrite a given prompt into a new, interleaved format.",
        TaskType::AcousticFeature => "Your task is to rewrite a given prompt into a new, interleaved format for a complex audio classification task that requires acoustic descriptions.",
        TaskType::OpenEnded => "Your task is to rewrite a given open-ended question into a new, interleaved format.",
    };
    let mut out = format!("{SYSTEM_OPENING}\n{task_line}\n\nYour Rules:\n");
    for (i, r) in rules(task).iter().enumerate() {
        out.push_str(&format!("{}. {r}\n", i + 1));
    }
    out.push_str(&format!("\nIMPORTANT: {instruction}  {IMPORTANT_TAIL}"));
    out
}

pub fn user_prompt(task: TaskType, old_prompt: &str) -> String {
    let (intro, examples, closing): (&str, &[&str], &str) = match task {
        TaskType::LabelClassification => (
            "I need to revise the following prompt for a simple audio classification task. The goal is to ask for a list of labels.",
            &[
                "\"After you hear [AUDIO], what are the appropriate classification labels?\"",
                "\"Listen to this: [AUDIO]. Now, list the corresponding tags.\"",
                "\"Consider [AUDIO]. What are its corresponding labels?\"",
            ],
            "Provide your output as a single JSON object with the key \"revised_prompt\".",
        ),
        TaskType::AcousticFeature => (
            "I need to revise the following prompt for a complex audio classification task. The goal is to ask for a list of labels, each with a description of its acoustic properties.",
            &[
                "\"Listen to this: [AUDIO]. For each component you identify, list its label and describe its acoustic features.\"",
                "\"Regarding [AUDIO], what labels are suitable, and what are their key sound properties?\"",
                "\"Analyze what you hear in [AUDIO]. Return a list of labels paired with their distinguishing acoustic qualities.\"",
            ],
            "Provide your output as a single JSON object with the key revised_prompt, e.g. {'revised_prompt': '...'}.",
        ),
        TaskType::OpenEnded => (
            "I need to revise the following prompt for an open-ended audio question-answering task. The goal is to rephrase the question to include an audio placeholder.",
            &[
                "Old: \"What other sound events, if any, can be heard in the audio clip?\" -> New: \"What other sound events, if any, can be heard in [AUDIO]?\"",
                "Old: \"Based on the acoustic features, can you tell the type of vacuum cleaner?\" -> New: \"Based on [AUDIO], can you tell the type of vacuum cleaner?\"",
                "Old: \"Describe the environment where this sound was likely recorded.\" -> New: \"Based on what you hear in [AUDIO], describe the environment where it was likely recorded.\"",
            ],
            "Provide your output as a single JSON object with the key \"revised_prompt\".",
        ),
    };
    let mut out = format!(
        "{intro}\n\nOld Prompt: \"{old_prompt}\"\n\nPlease revise it into a new, single-string interleaved prompt.\n\nGood Revision Examples:\n"
    );
    for e in examples {
        out.push_str(&format!("- {e}\n"));
    }
    out.push_str(&format!("\n{closing}"));
    out
}

/// Offline rewrite templates. `{AUDIO}` becomes the placeholder and
/// `{PAYLOAD}` the (lightly adapted) original prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemplateBank {
    pub label: Vec<String>,
    pub acoustic: Vec<String>,
    /// Used for open-ended questions that carry no modality cue to replace.
    pub open_ended_wrap: Vec<String>,
    pub variety_instructions: Vec<String>,
}

impl Default for TemplateBank {
    fn default() -> Self {
        let owned = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        Self {
            label: owned(&[
                "Reflect on the contents of {AUDIO} and enumerate the relevant categories it represents.",
                "After you hear {AUDIO}, what are the appropriate classification labels?",
                "Listen to this: {AUDIO}. Now, list the corresponding tags.",
                "Consider {AUDIO}. What are its corresponding labels?",
            ]),
            acoustic: owned(&[
                "Consider {AUDIO} and enumerate all discernible sound categories, specifying for each both an appropriate label and a detailed account of its auditory characteristics.",
                "Listen to this: {AUDIO}. For each component you identify, list its label and describe its acoustic features.",
                "Regarding {AUDIO}, what labels are suitable, and what are their key sound properties?",
                "Analyze what you hear in {AUDIO}. Return a list of labels paired with their distinguishing acoustic qualities.",
            ]),
            open_ended_wrap: owned(&["Based on {AUDIO}, {PAYLOAD}"]),
            variety_instructions: owned(&VARIETY_INSTRUCTIONS),
        }
    }
}

impl TemplateBank {
    pub fn templates(&self, task: TaskType) -> &[String] {
        match task {
            TaskType::LabelClassification => &self.label,
            TaskType::AcousticFeature => &self.acoustic,
            TaskType::OpenEnded => &self.open_ended_wrap,
        }
    }
}

pub fn instantiate(template: &str, payload: &str) -> String {
    template
        .replace("{AUDIO}", crate::tokenizer::AUDIO_PLACEHOLDER)
        .replace("{PAYLOAD}", payload)
}
