use serde::{Deserialize, Serialize};

use super::decision::Parsed;

/// Confusion counts and derived scores for one yes/no relation. Unparsed
/// responses count as No and are also tallied in `unparsed`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RelationMetrics {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub unparsed: u64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Metrics whose denominator was zero and were reported as 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<String>,
}

impl RelationMetrics {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn ratio(num: f64, den: f64, name: &str, undefined: &mut Vec<String>) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        undefined.push(name.to_string());
        0.0
    }
}

pub fn compute_metrics(decisions: &[(Parsed, bool)]) -> RelationMetrics {
    let mut m = RelationMetrics::default();
    for &(parsed, truth) in decisions {
        if parsed == Parsed::Unparsed {
            m.unparsed += 1;
        }
        match (parsed == Parsed::Yes, truth) {
            (true, true) => m.tp += 1,
            (true, false) => m.fp += 1,
            (false, false) => m.tn += 1,
            (false, true) => m.fn_ += 1,
        }
    }
    let (tp, fp, tn, fn_) = (m.tp as f64, m.fp as f64, m.tn as f64, m.fn_ as f64);
    let mut undefined = Vec::new();
    m.accuracy = ratio(tp + tn, tp + fp + tn + fn_, "accuracy", &mut undefined);
    m.precision = ratio(tp, tp + fp, "precision", &mut undefined);
    m.recall = ratio(tp, tp + fn_, "recall", &mut undefined);
    m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall, "f1", &mut undefined);
    m.undefined = undefined;
    m
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IdentityMetrics {
    pub correct: u64,
    pub total: u64,
    pub accuracy: f64,
}

pub fn identity_metrics(hits: &[bool]) -> IdentityMetrics {
    let correct = hits.iter().filter(|&&h| h).count() as u64;
    let total = hits.len() as u64;
    IdentityMetrics {
        correct,
        total,
        accuracy: if total > 0 { correct as f64 / total as f64 } else { 0.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(tp: usize, fp: usize, fn_: usize, tn: usize) -> Vec<(Parsed, bool)> {
        let mut v = vec![(Parsed::Yes, true); tp];
        v.extend(vec![(Parsed::Yes, false); fp]);
        v.extend(vec![(Parsed::No, true); fn_]);
        v.extend(vec![(Parsed::No, false); tn]);
        v
    }

    #[test]
    fn hand_cases() {
        let m = compute_metrics(&pairs(2, 1, 1, 4));
        let third = 2.0 / 3.0;
        assert!((m.precision - third).abs() < 1e-12);
        assert!((m.recall - third).abs() < 1e-12);
        assert!((m.f1 - third).abs() < 1e-12);
        assert!((m.accuracy - 0.75).abs() < 1e-12);
        assert!(m.undefined.is_empty());
        let m = compute_metrics(&pairs(2, 1, 2, 4));
        assert!((m.recall - 0.5).abs() < 1e-12);
        assert!((m.f1 - 4.0 / 7.0).abs() < 1e-12);
        assert!((m.accuracy - third).abs() < 1e-12);
    }

    #[test]
    fn all_correct() {
        let m = compute_metrics(&pairs(3, 0, 0, 2));
        assert_eq!((m.accuracy, m.f1), (1.0, 1.0));
    }

    #[test]
    fn degenerate_denominators() {
        let m = compute_metrics(&pairs(0, 0, 0, 5));
        assert_eq!(m.accuracy, 1.0);
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert_eq!(m.undefined, ["precision", "recall", "f1"]);
        assert_eq!(compute_metrics(&[]).undefined.len(), 4);
    }

    #[test]
    fn unparsed_is_a_no_and_counted() {
        let m = compute_metrics(&[(Parsed::Unparsed, true), (Parsed::Unparsed, false)]);
        assert_eq!((m.fn_, m.tn, m.unparsed), (1, 1, 2));
    }
}
