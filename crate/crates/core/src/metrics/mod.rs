//! Evaluation: edit distance, phone error rates, posterior peak statistics,
//! output delay, and mispronunciation detection scores.

mod edit;
mod peaks;
mod report;

pub use edit::{edit_distance, EditDistance};
pub use peaks::{delay_relative, frames_to_ms, peak_stats, DelayReport, Peak, PeakStats, FRAME_THRESHOLD, PEAK_THRESHOLD};
pub use report::{write_report_csv, write_report_json, MddReport, ReportRow};

use serde::{Deserialize, Serialize};

use crate::ctc::PhonemeSeq;
use crate::data::QualityLabel;
use crate::error::{Error, Result};

/// Decoded hypothesis against the canonical transcript of one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub hyp: PhonemeSeq,
    pub reference: PhonemeSeq,
    pub label: QualityLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    All,
    Correct,
    Incorrect,
}

impl Subset {
    fn admits(self, label: QualityLabel) -> bool {
        match self {
            Subset::All => true,
            Subset::Correct => label.is_correct(),
            Subset::Incorrect => !label.is_correct(),
        }
    }
}

/// Phone error rate in percent: total edits over total reference length.
pub fn per(pairs: &[ScoredPair], subset: Subset) -> Result<f64> {
    let mut edits = 0usize;
    let mut ref_len = 0usize;
    let mut seen = false;
    for p in pairs.iter().filter(|p| subset.admits(p.label)) {
        if p.reference.is_empty() {
            return Err(Error::InvalidArgument("empty reference transcript".into()));
        }
        seen = true;
        edits += edit_distance(&p.hyp, &p.reference).distance;
        ref_len += p.reference.len();
    }
    if !seen {
        return Err(Error::Empty("PER subset"));
    }
    Ok(100.0 * edits as f64 / ref_len as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Correct,
    Mispronounced,
}

/// Mispronounced iff the edit distance to the canonical sequence exceeds `threshold`.
pub fn mdd_classify(hyp: &PhonemeSeq, canonical: &PhonemeSeq, threshold: usize) -> Verdict {
    if edit_distance(hyp, canonical).distance > threshold {
        Verdict::Mispronounced
    } else {
        Verdict::Correct
    }
}

pub const MDD_THRESHOLD: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub predicted_positives: usize,
    pub actual_positives: usize,
    /// Precision was undefined and reported as 0.
    pub no_predicted_positives: bool,
    /// Recall was undefined and reported as 0.
    pub no_actual_positives: bool,
}

/// Harmonic mean; 0 when both inputs are 0. Works on fractions or percentages.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Precision, recall and F1 with "mispronounced" as the positive class.
/// Quality labels 2–4 are ground-truth positives.
pub fn prf1(predictions: &[Verdict], labels: &[QualityLabel]) -> Result<Prf1> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!("{} predictions for {} labels", predictions.len(), labels.len())));
    }
    let mut tp = 0;
    let mut pp = 0;
    let mut ap = 0;
    for (v, l) in predictions.iter().zip(labels) {
        let pred = *v == Verdict::Mispronounced;
        let actual = !l.is_correct();
        pp += usize::from(pred);
        ap += usize::from(actual);
        tp += usize::from(pred && actual);
    }
    let precision = if pp > 0 { tp as f64 / pp as f64 } else { 0.0 };
    let recall = if ap > 0 { tp as f64 / ap as f64 } else { 0.0 };
    Ok(Prf1 {
        precision,
        recall,
        f1: f1_score(precision, recall),
        true_positives: tp,
        predicted_positives: pp,
        actual_positives: ap,
        no_predicted_positives: pp == 0,
        no_actual_positives: ap == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(hyp: &[usize], r: &[usize], label: u8) -> ScoredPair {
        ScoredPair {
            hyp: PhonemeSeq::new(hyp.to_vec()),
            reference: PhonemeSeq::new(r.to_vec()),
            label: QualityLabel::try_from(label).unwrap(),
        }
    }

    #[test]
    fn per_arithmetic() {
        assert_eq!(per(&[pair(&[1, 2], &[1, 2], 1)], Subset::All).unwrap(), 0.0);
        assert_eq!(per(&[pair(&[1, 9, 9, 4], &[1, 2, 3, 4], 1)], Subset::All).unwrap(), 50.0);
        assert!(per(&[pair(&[1], &[1], 1)], Subset::Incorrect).is_err());
        assert!(per(&[pair(&[1], &[], 1)], Subset::All).is_err());
    }

    #[test]
    fn threshold_rule_is_strict() {
        let c = PhonemeSeq::new(vec![1, 2, 3, 4]);
        assert_eq!(mdd_classify(&c, &c, 1), Verdict::Correct);
        assert_eq!(mdd_classify(&PhonemeSeq::new(vec![1, 2, 3, 5]), &c, 1), Verdict::Correct);
        assert_eq!(mdd_classify(&PhonemeSeq::new(vec![1, 2, 6, 5]), &c, 1), Verdict::Mispronounced);
    }

    #[test]
    fn prf1_degenerate_and_basic() {
        let labels = vec![QualityLabel::Clean; 3];
        let r = prf1(&[Verdict::Correct; 3], &labels).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        assert!(r.no_predicted_positives && r.no_actual_positives);

        let labels = [QualityLabel::Clean, QualityLabel::Absent, QualityLabel::Noisy, QualityLabel::AirPuff];
        let preds = [Verdict::Mispronounced, Verdict::Mispronounced, Verdict::Correct, Verdict::Mispronounced];
        let r = prf1(&preds, &labels).unwrap();
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!(prf1(&preds[..2], &labels).is_err());
    }

    #[test]
    fn f1_from_table_rows() {
        assert!((f1_score(56.0, 64.0) - 59.7).abs() < 0.05);
        assert!((f1_score(42.5, 76.8) - 54.7).abs() < 0.05);
        assert_eq!(f1_score(0.0, 0.0), 0.0);
    }
}
