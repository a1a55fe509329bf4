//! Prompt layouts selectable by name: where the audio block sits and which
//! prompt text of a forged record feeds it.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::forge::ForgeRecord;
use crate::registry::{Registry, UnknownName};
use crate::sequence::{build_interleaved, build_noninterleaved, BuildOptions, SequenceError, TokenSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Interleaved,
    NonInterleaved,
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Self::Interleaved => "interleaved",
            Self::NonInterleaved => "noninterleaved",
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Format {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        layouts().get(s).map(|l| l.format())
    }
}

pub trait SequenceLayout: Send + Sync {
    fn format(&self) -> Format;
    fn build(&self, prompt_ids: &[u32], answer_ids: &[u32], opts: &BuildOptions) -> Result<TokenSequence, SequenceError>;
    fn training_prompt<'a>(&self, record: &'a ForgeRecord) -> &'a str;
}

pub struct InterleavedLayout;

impl SequenceLayout for InterleavedLayout {
    fn format(&self) -> Format {
        Format::Interleaved
    }

    fn build(&self, prompt_ids: &[u32], answer_ids: &[u32], opts: &BuildOptions) -> Result<TokenSequence, SequenceError> {
        build_interleaved(prompt_ids, answer_ids, opts)
    }

    fn training_prompt<'a>(&self, record: &'a ForgeRecord) -> &'a str {
        &record.interleaved_prompt
    }
}

pub struct NonInterleavedLayout;

impl SequenceLayout for NonInterleavedLayout {
    fn format(&self) -> Format {
        Format::NonInterleaved
    }

    fn build(&self, prompt_ids: &[u32], answer_ids: &[u32], opts: &BuildOptions) -> Result<TokenSequence, SequenceError> {
        build_noninterleaved(prompt_ids, answer_ids, opts)
    }

    fn training_prompt<'a>(&self, record: &'a ForgeRecord) -> &'a str {
        &record.original_prompt
    }
}

pub fn layouts() -> Registry<Arc<dyn SequenceLayout>> {
    let mut r: Registry<Arc<dyn SequenceLayout>> = Registry::new("format");
    r.register(Format::Interleaved.name(), Arc::new(InterleavedLayout));
    r.register(Format::NonInterleaved.name(), Arc::new(NonInterleavedLayout));
    r
}

pub fn layout(format: Format) -> Arc<dyn SequenceLayout> {
    layouts().get(format.name()).expect("every format is registered").clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for f in [Format::Interleaved, Format::NonInterleaved] {
            assert_eq!(f.name().parse::<Format>().unwrap(), f);
            assert_eq!(layout(f).format(), f);
        }
        assert!("both".parse::<Format>().is_err());
    }
}
