//! Whitespace-and-punctuation tokenizer with a reserved `[AUDIO]` placeholder.

use std::collections::HashMap;
use std::sync::LazyLock;

use regex::Regex;

/// Literal that marks where the audio embedding block is spliced into a prompt.
pub const AUDIO_PLACEHOLDER: &str = "[AUDIO]";
pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";
pub const UNK_TOKEN: &str = "<unk>";

pub const BOS_ID: u32 = 0;
pub const EOS_ID: u32 = 1;
pub const UNK_ID: u32 = 2;
pub const AUDIO_ID: u32 = 3;
const SPECIALS: [&str; 4] = [BOS_TOKEN, EOS_TOKEN, UNK_TOKEN, AUDIO_PLACEHOLDER];

static SPLITTER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\[AUDIO\]|[\p{L}\p{N}]+(?:'[\p{L}\p{N}]+)*|\S").expect("static regex")
});

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TokenizerError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("max_size {0} leaves no room beyond the 4 special tokens (need at least 5)")]
    MaxSizeTooSmall(usize),
    #[error("token id {id} out of range for vocabulary of {len}")]
    UnknownId { id: u32, len: usize },
    #[error("vocabulary line {line}: expected special token {expected:?}, found {found:?}")]
    MissingSpecial {
        line: usize,
        expected: &'static str,
        found: String,
    },
    #[error("vocabulary token {0:?} appears more than once")]
    DuplicateToken(String),
}

/// One unit produced by the splitter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Piece {
    Placeholder,
    Word(String),
}

/// Splits text into lowercased words and single punctuation marks. The exact,
/// case-sensitive `[AUDIO]` literal comes out as [`Piece::Placeholder`].
pub fn split(text: &str) -> Vec<Piece> {
    SPLITTER
        .find_iter(text)
        .map(|m| match m.as_str() {
            AUDIO_PLACEHOLDER => Piece::Placeholder,
            s => Piece::Word(s.to_lowercase()),
        })
        .collect()
}

/// The canonical form `decode(encode(s))` reproduces for in-vocabulary text.
pub fn normalize(text: &str) -> String {
    split(text)
        .into_iter()
        .map(|p| match p {
            Piece::Placeholder => AUDIO_PLACEHOLDER.to_string(),
            Piece::Word(w) => w,
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, u32>,
}

impl Vocabulary {
    /// Keeps the `max_size - 4` most frequent words, ties broken lexicographically.
    pub fn build<S: AsRef<str>>(corpus: &[S], max_size: usize) -> Result<Self, TokenizerError> {
        if max_size < SPECIALS.len() + 1 {
            return Err(TokenizerError::MaxSizeTooSmall(max_size));
        }
        if corpus.is_empty() {
            return Err(TokenizerError::EmptyCorpus);
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in corpus {
            for piece in split(text.as_ref()) {
                if let Piece::Word(w) = piece {
                    *counts.entry(w).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(w, _)| !SPECIALS.contains(&w.as_str()))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(ranked.into_iter().take(max_size - SPECIALS.len()).map(|(w, _)| w));
        Self::from_tokens(tokens)
    }

    /// Rebuilds a vocabulary from its id-ordered token list.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, TokenizerError> {
        for (line, expected) in SPECIALS.iter().enumerate() {
            let found = tokens.get(line).cloned().unwrap_or_default();
            if found != *expected {
                return Err(TokenizerError::MissingSpecial {
                    line,
                    expected,
                    found,
                });
            }
        }
        let mut token_to_id = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if token_to_id.insert(tok.clone(), id as u32).is_some() {
                return Err(TokenizerError::DuplicateToken(tok.clone()));
            }
        }
        Ok(Self {
            id_to_token: tokens,
            token_to_id,
        })
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn contains_word(&self, word: &str) -> bool {
        self.id(word).is_some_and(|id| id > AUDIO_ID)
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        split(text)
            .into_iter()
            .map(|p| match p {
                Piece::Placeholder => AUDIO_ID,
                Piece::Word(w) => match self.token_to_id.get(&w) {
                    Some(&id) if id > AUDIO_ID => id,
                    _ => UNK_ID,
                },
            })
            .collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        let words = ids
            .iter()
            .map(|&id| {
                self.id_to_token
                    .get(id as usize)
                    .map(String::as_str)
                    .ok_or(TokenizerError::UnknownId {
                        id,
                        len: self.id_to_token.len(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(words.join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab(corpus: &[&str]) -> Vocabulary {
        Vocabulary::build(corpus, 64).unwrap()
    }

    #[test]
    fn build_keeps_frequency_order() {
        let v = Vocabulary::build(&["a b", "a"], 6).unwrap();
        assert_eq!(v.tokens(), &["<bos>", "<eos>", "<unk>", "[AUDIO]", "a", "b"]);
    }

    #[test]
    fn build_breaks_ties_lexicographically_and_truncates() {
        let v = Vocabulary::build(&["c b a", "z"], 6).unwrap();
        assert_eq!(&v.tokens()[4..], &["a", "b"]);
    }

    #[test]
    fn build_at_minimum_size() {
        let v = Vocabulary::build(&["x"], 5).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("x"), Some(4));
    }

    #[test]
    fn build_errors() {
        assert_eq!(Vocabulary::build::<&str>(&[], 10), Err(TokenizerError::EmptyCorpus));
        assert_eq!(Vocabulary::build(&["a"], 4), Err(TokenizerError::MaxSizeTooSmall(4)));
    }

    #[test]
    fn placeholder_in_corpus_is_not_learned() {
        // split("see [AUDIO] now") = [see, <placeholder>, now]
        let v = vocab(&["see [AUDIO] now"]);
        assert_eq!(v.len(), 6);
        assert_eq!(v.encode("see [AUDIO] now"), vec![v.id("see").unwrap(), AUDIO_ID, v.id("now").unwrap()]);
    }

    #[test]
    fn encode_table_prompt() {
        let v = vocab(&["Is [AUDIO] similar to car?"]);
        let ids = v.encode("Is [AUDIO] similar to car?");
        let expected: Vec<u32> = ["is", "[AUDIO]", "similar", "to", "car", "?"]
            .iter()
            .map(|t| v.id(t).unwrap())
            .collect();
        assert_eq!(ids, expected);
    }

    #[test]
    fn encode_edge_cases() {
        let v = vocab(&["hello"]);
        assert!(v.encode("").is_empty());
        assert_eq!(v.encode("zzz"), vec![UNK_ID]);
        // lowercase or spaced variants are prose, not the placeholder
        assert!(!v.encode("[audio] audio [ AUDIO ]").contains(&AUDIO_ID));
        // special token spellings in text never map to specials
        assert!(!v.encode("<unk> <bos>").contains(&BOS_ID));
    }

    #[test]
    fn decode_specials_and_errors() {
        let v = vocab(&["hello"]);
        assert_eq!(v.decode(&[AUDIO_ID]).unwrap(), "[AUDIO]");
        assert_eq!(v.decode(&[UNK_ID]).unwrap(), "<unk>");
        assert_eq!(v.decode(&[99]), Err(TokenizerError::UnknownId { id: 99, len: 5 }));
    }

    #[test]
    fn apostrophes_stay_inside_words() {
        assert_eq!(normalize("It ISN'T, really."), "it isn't , really .");
    }

    #[test]
    fn from_tokens_requires_specials() {
        let err = Vocabulary::from_tokens(vec!["a".into()]).unwrap_err();
        assert!(matches!(err, TokenizerError::MissingSpecial { line: 0, .. }));
    }

    proptest! {
        #[test]
        fn round_trip_on_covered_text(words in proptest::collection::vec("[a-z]{1,6}|[?,.!]|\\[AUDIO\\]", 0..12)) {
            let text = words.join(" ");
            let v = Vocabulary::build(&[text.as_str(), "pad"], 256).unwrap();
            prop_assert_eq!(v.decode(&v.encode(&text)).unwrap(), normalize(&text));
        }

        #[test]
        fn placeholder_only_from_literal(text in "[a-zA-Z \\[\\]]{0,40}") {
            let v = Vocabulary::build(&[text.as_str(), "pad"], 256).unwrap();
            let n_ids = v.encode(&text).iter().filter(|&&id| id == AUDIO_ID).count();
            prop_assert_eq!(n_ids, text.matches(AUDIO_PLACEHOLDER).count());
        }
    }
}
