use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Alternatives at one start position are tried in order, so multi-word
/// phrases come before the single words they begin with.
static DECISION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(?:does\s+not|doesn['’]t|is\s+not|isn['’]t|is\s+similar|is\s+a\s+type|yes|no|not|does)\b",
    )
    .expect("static regex")
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parsed {
    Yes,
    No,
    Unparsed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedSpan {
    /// Byte offset into the response.
    pub start: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub raw_response: String,
    pub parsed: Parsed,
    pub matched_span: Option<MatchedSpan>,
}

fn polarity(phrase: &str) -> Parsed {
    let p = phrase.to_lowercase();
    let words: Vec<&str> = p.split_whitespace().collect();
    match words.as_slice() {
        ["yes"] | ["does"] | ["is", "similar"] | ["is", "a", "type"] => Parsed::Yes,
        _ => Parsed::No,
    }
}

/// The earliest whole-word polarity phrase decides; no phrase means Unparsed.
pub fn extract_decision(response: &str) -> Decision {
    let m = DECISION.find(response);
    Decision {
        raw_response: response.to_string(),
        parsed: m.map_or(Parsed::Unparsed, |m| polarity(m.as_str())),
        matched_span: m.map(|m| MatchedSpan {
            start: m.start(),
            text: m.as_str().to_string(),
        }),
    }
}

/// Exact, case-insensitive, whole-phrase match of any label in `response`.
pub fn score_identity(response: &str, canonical_labels: &[&str]) -> bool {
    canonical_labels.iter().any(|label| {
        let words: Vec<String> = label.split_whitespace().map(regex::escape).collect();
        if words.is_empty() {
            return false;
        }
        let pattern = format!(r"(?i)(?:^|\W){}(?:$|\W)", words.join(r"\s+"));
        Regex::new(&pattern).expect("escaped pattern").is_match(response)
    })
}
