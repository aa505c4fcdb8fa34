use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ctc::{greedy_decode, PhonemeSeq, Posteriorgram};
use crate::data::{Utterance, PHONEMES};
use crate::error::{Error, Result};
use crate::losses::silence_mask;
use crate::metrics::{
    delay_relative, mdd_classify, peak_stats, per, prf1, DelayReport, MddReport, PeakStats, ReportRow, ScoredPair,
    Subset, Verdict, FRAME_THRESHOLD, MDD_THRESHOLD, PEAK_THRESHOLD,
};
use crate::model::{infer, Checkpoint};
use crate::numerics::softmax_rows;

/// Inference-mode output for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub posteriors: Posteriorgram,
    pub hyp: PhonemeSeq,
    pub stats: PeakStats,
}

pub fn decode_utterance(ckpt: &Checkpoint, utt: &Utterance) -> Result<Decoded> {
    let logits = infer(ckpt, &utt.features.frames)?;
    let posteriors = Posteriorgram::new(softmax_rows(&logits)?)?;
    let hyp = greedy_decode(&posteriors);
    let stats = peak_stats(&posteriors, FRAME_THRESHOLD, PEAK_THRESHOLD)?;
    Ok(Decoded { posteriors, hyp, stats })
}

pub fn decode_all(ckpt: &Checkpoint, utts: &[Utterance]) -> Result<Vec<Decoded>> {
    utts.par_iter().map(|u| decode_utterance(ckpt, u)).collect()
}

fn scored(utts: &[Utterance], hyps: impl Iterator<Item = PhonemeSeq>) -> Vec<ScoredPair> {
    utts.iter()
        .zip(hyps)
        .map(|(u, hyp)| ScoredPair { hyp, reference: u.canonical.clone(), label: u.quality_label })
        .collect()
}

/// PER (percent) of greedy hypotheses against canonical transcripts.
pub fn dev_per(ckpt: &Checkpoint, utts: &[Utterance]) -> Result<f64> {
    let hyps: Vec<PhonemeSeq> = utts
        .par_iter()
        .map(|u| {
            let logits = infer(ckpt, &u.features.frames)?;
            Ok(greedy_decode(&Posteriorgram::new(softmax_rows(&logits)?)?))
        })
        .collect::<Result<_>>()?;
    per(&scored(utts, hyps.into_iter()), Subset::All)
}

/// Mean over utterances of |mean peak onset − mean ground-truth phoneme onset|,
/// skipping utterances without peaks.
pub fn onset_error(stats: &[PeakStats], utts: &[Utterance]) -> Option<f64> {
    let errs: Vec<f64> = stats
        .iter()
        .zip(utts)
        .filter_map(|(s, u)| Some((s.mean_onset? - u.mean_true_onset()?).abs()))
        .collect();
    (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: MddReport,
    pub row: ReportRow,
    pub delay: Option<DelayReport>,
    /// Delay was requested but no usable reference was available.
    pub delay_omitted: bool,
    pub onset_error: Option<f64>,
    #[serde(skip)]
    pub stats: Vec<PeakStats>,
    #[serde(skip)]
    pub hyps: Vec<PhonemeSeq>,
}

pub fn model_name(ckpt: &Checkpoint) -> &'static str {
    if ckpt.config.bidirectional {
        "BiGRU"
    } else {
        "UniGRU"
    }
}

/// Inference, greedy decoding and every metric for one split. Delay is
/// measured against `reference` when given.
pub fn evaluate(ckpt: &Checkpoint, utts: &[Utterance], reference: Option<&Checkpoint>) -> Result<Evaluation> {
    if utts.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let decoded = decode_all(ckpt, utts)?;
    let stats: Vec<PeakStats> = decoded.iter().map(|d| d.stats.clone()).collect();
    let hyps: Vec<PhonemeSeq> = decoded.iter().map(|d| d.hyp.clone()).collect();
    let pairs = scored(utts, hyps.iter().cloned());
    let subset = |s| per(&pairs, s).ok();
    let verdicts: Vec<Verdict> =
        utts.iter().zip(&hyps).map(|(u, h)| mdd_classify(h, &u.canonical, MDD_THRESHOLD)).collect();
    let labels: Vec<_> = utts.iter().map(|u| u.quality_label).collect();
    let scores = prf1(&verdicts, &labels)?;

    let delay = match reference {
        Some(r) => {
            let ref_stats: Vec<PeakStats> = decode_all(r, utts)?.into_iter().map(|d| d.stats).collect();
            delay_relative(&stats, &ref_stats).ok()
        }
        None => None,
    };
    let report = MddReport {
        precision: 100.0 * scores.precision,
        recall: 100.0 * scores.recall,
        f1: 100.0 * scores.f1,
        per: per(&pairs, Subset::All)?,
        cper: subset(Subset::Correct),
        iper: subset(Subset::Incorrect),
        mean_delay_frames: delay.map(|d| d.mean_delay_frames),
        mean_delay_ms: delay.map(|d| d.mean_delay_ms),
    };
    let n = utts.len() as f64;
    let row = ReportRow {
        model: model_name(ckpt).to_string(),
        recipe: ckpt.metadata.recipe.clone(),
        frames: stats.iter().map(|s| s.frames_above_threshold as f64).sum::<f64>() / n,
        peaks: stats.iter().map(|s| s.peaks.len() as f64).sum::<f64>() / n,
        delay_frames: report.mean_delay_frames,
        delay_ms: report.mean_delay_ms,
        per: report.per,
        cper: report.cper,
        iper: report.iper,
        precision: report.precision,
        recall: report.recall,
        f1: report.f1,
    };
    Ok(Evaluation {
        onset_error: onset_error(&stats, utts),
        delay_omitted: delay.is_none(),
        report,
        row,
        delay,
        stats,
        hyps,
    })
}

/// Per-frame posteriorgrams as CSV, plus a sibling `<stem>.peaks.csv` with
/// per-utterance peak statistics.
pub fn write_stats(path: &Path, ckpt: &Checkpoint, utts: &[Utterance]) -> Result<()> {
    let decoded = decode_all(ckpt, utts)?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> =
        ["id", "frame", "energy", "silence_mask", "silence_truth", "greedy"].iter().map(|s| s.to_string()).collect();
    header.extend(PHONEMES.iter().map(|p| format!("p_{p}")));
    header.push("p_blank".into());
    w.write_record(&header)?;
    for (u, d) in utts.iter().zip(&decoded) {
        let mask = silence_mask(&u.features);
        for t in 0..u.frames() {
            let row = d.posteriors.probs.row(t);
            let best = crate::ctc::argmax(row);
            let sym = PHONEMES.get(best).copied().unwrap_or("-");
            let mut rec = vec![
                u.id.clone(),
                t.to_string(),
                u.features.energies[t].to_string(),
                u8::from(mask.is_silence[t]).to_string(),
                u8::from(u.silence_truth[t]).to_string(),
                sym.to_string(),
            ];
            rec.extend(row.iter().map(|p| p.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;

    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("stats");
    let mut w = csv::Writer::from_path(path.with_file_name(format!("{stem}.peaks.csv")))?;
    w.write_record(["id", "label", "frames", "peaks", "mean_onset", "true_onset", "hyp"])?;
    for (u, d) in utts.iter().zip(&decoded) {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([
            u.id.clone(),
            u8::from(u.quality_label).to_string(),
            d.stats.frames_above_threshold.to_string(),
            d.stats.peaks.len().to_string(),
            opt(d.stats.mean_onset),
            opt(u.mean_true_onset()),
            crate::data::format_phonemes(&d.hyp),
        ])?;
    }
    w.flush()?;
    Ok(())
}
