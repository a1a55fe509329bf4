use std::collections::HashMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    build_queries, compute_metrics, extract_decision, identity_metrics, score_identity, IdentityMetrics, Parsed,
    Relation, RelationMetrics, ShardError, ShardItem, Truth,
};
use crate::audio::encode_audio;
use crate::layout::{layout, Format};
use crate::model::{Example, Model};
use crate::numerics::Tensor;
use crate::sequence::BuildOptions;
use crate::util::stable_hash;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub repeats: usize,
    /// 0 decodes greedily, which makes every repeat identical.
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            repeats: 4,
            temperature: 0.0,
            max_new_tokens: 12,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub item: usize,
    pub repeat: usize,
    pub relation: Relation,
    pub candidate: Option<String>,
    pub truth: Truth,
    pub prompt: String,
    pub response: String,
    pub decision: Option<Parsed>,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub format: Format,
    pub repeats: usize,
    pub items: usize,
    pub identity: IdentityMetrics,
    pub synonym: RelationMetrics,
    pub hypernym: RelationMetrics,
}

/// Runs every query through the model and scores the responses. Each repeat
/// is an independent trial.
pub fn evaluate(
    model: &Model,
    items: &[ShardItem],
    format: Format,
    settings: &EvalSettings,
) -> Result<(MetricsReport, Vec<ResponseRecord>), ShardError> {
    let queries = build_queries(items, format, settings.repeats)?;
    let mut clips: Vec<&PathBuf> = items.iter().map(|i| &i.audio.feature_path).collect();
    clips.sort();
    clips.dedup();
    let features: HashMap<&PathBuf, Tensor> = clips
        .par_iter()
        .map(|p| {
            let item = items.iter().find(|i| &i.audio.feature_path == *p).expect("clip from items");
            encode_audio(&item.audio, model.frontend()).map(|t| (*p, t))
        })
        .collect::<Result<_, _>>()?;
    let lay = layout(format);
    let k = model.frontend().audio_slot_count;
    let vocab = model.vocab();
    let responses: Vec<String> = queries
        .par_iter()
        .map(|q| {
            let item = &items[q.item];
            // greedy decoding is repeat-invariant, so later repeats reuse repeat 0
            let repeat = if settings.temperature == 0.0 { 0 } else { q.repeat };
            let seq = lay.build(&vocab.encode(&q.prompt), &[], &BuildOptions::for_generation(k))
                .map_err(crate::model::ModelError::from)?;
            let ex = Example {
                seq,
                audio: vec![features[&item.audio.feature_path].clone()],
            };
            let seed = settings.seed ^ stable_hash(&[&q.item.to_string(), &repeat.to_string()]);
            Ok(model.generate(&ex, settings.max_new_tokens, settings.temperature, seed)?)
        })
        .collect::<Result<_, ShardError>>()?;
    let mut records = Vec::with_capacity(queries.len());
    let (mut ident, mut syn, mut hyp) = (Vec::new(), Vec::new(), Vec::new());
    for (q, response) in queries.into_iter().zip(responses) {
        let item = &items[q.item];
        let (decision, correct) = match &item.truth {
            Truth::Label(label) => {
                let hit = score_identity(&response, &[label.as_str()]);
                ident.push(hit);
                (None, hit)
            }
            t => {
                let parsed = extract_decision(&response).parsed;
                let truth = *t == Truth::Yes;
                let bucket = if item.relation == Relation::Synonym { &mut syn } else { &mut hyp };
                bucket.push((parsed, truth));
                (Some(parsed), (parsed == Parsed::Yes) == truth)
            }
        };
        records.push(ResponseRecord {
            item: q.item,
            repeat: q.repeat,
            relation: item.relation,
            candidate: item.candidate.clone(),
            truth: item.truth.clone(),
            prompt: q.prompt,
            response,
            decision,
            correct,
        });
    }
    let report = MetricsReport {
        format,
        repeats: settings.repeats,
        items: items.len(),
        identity: identity_metrics(&ident),
        synonym: compute_metrics(&syn),
        hypernym: compute_metrics(&hyp),
    };
    Ok((report, records))
}

/// Plain-text table in percent: accuracy (identity, synonym, hypernym), then
/// precision, recall and F1 for synonym and hypernym.
pub fn render_table(rows: &[(String, &MetricsReport)]) -> String {
    let name_w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("Model".len());
    let groups = format!(
        "{:name_w$}  {:^26}  {:^16}  {:^16}  {:^16}\n",
        "", "Accuracy (%)", "Precision (%)", "Recall (%)", "F1 (%)"
    );
    let heads = ["Identity", "Syno.", "Hyper.", "Syno.", "Hyper.", "Syno.", "Hyper.", "Syno.", "Hyper."];
    let mut out = groups;
    out.push_str(&format!("{:name_w$}", "Model"));
    for (i, h) in heads.iter().enumerate() {
        let sep = if i == 0 || i % 2 == 1 { "  " } else { " " };
        out.push_str(&format!("{sep}{h:>8}"));
    }
    out.push('\n');
    for (name, r) in rows {
        let vals = [
            r.identity.accuracy,
            r.synonym.accuracy,
            r.hypernym.accuracy,
            r.synonym.precision,
            r.hypernym.precision,
            r.synonym.recall,
            r.hypernym.recall,
            r.synonym.f1,
            r.hypernym.f1,
        ];
        out.push_str(&format!("{name:name_w$}"));
        for (i, v) in vals.iter().enumerate() {
            let sep = if i == 0 || i % 2 == 1 { "  " } else { " " };
            out.push_str(&format!("{sep}{:>8.2}", v * 100.0));
        }
        out.push('\n');
    }
    for (name, r) in rows {
        out.push_str(&format!(
            "{name}: unparsed synonym {} / hypernym {}\n",
            r.synonym.unparsed, r.hypernym.unparsed
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_has_all_columns() {
        let r = MetricsReport {
            format: Format::Interleaved,
            repeats: 4,
            items: 0,
            identity: IdentityMetrics {
                correct: 1,
                total: 2,
                accuracy: 0.5,
            },
            synonym: compute_metrics(&[(Parsed::Yes, true)]),
            hypernym: compute_metrics(&[(Parsed::Unparsed, true)]),
        };
        let t = render_table(&[("toy (interleaved)".into(), &r)]);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[1].starts_with("Model"));
        assert!(lines[2].contains("   50.00"));
        assert_eq!(lines[2].split_whitespace().count(), 2 + 9);
        assert!(lines[3].ends_with("unparsed synonym 0 / hypernym 1"));
    }
}
