use serde::{Deserialize, Serialize};

use crate::ctc::{argmax, Posteriorgram};
use crate::error::{Error, Result};
use crate::model::STACKED_FRAME_MS;

pub const FRAME_THRESHOLD: f64 = 0.1;
pub const PEAK_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Peak {
    pub onset: usize,
    /// Last frame of the run (inclusive).
    pub offset: usize,
    pub phoneme: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakStats {
    pub frames_above_threshold: usize,
    pub peaks: Vec<Peak>,
    /// Mean onset frame over peaks; `None` when there are no peaks.
    pub mean_onset: Option<f64>,
}

/// Counts confident frames and finds posterior peaks.
///
/// A frame is above threshold when its largest non-blank posterior exceeds
/// `frame_threshold`. A peak is a maximal run of consecutive frames whose
/// largest non-blank posterior exceeds `peak_threshold` and whose non-blank
/// argmax stays the same phoneme; a change of phoneme starts a new peak.
pub fn peak_stats(post: &Posteriorgram, frame_threshold: f64, peak_threshold: f64) -> Result<PeakStats> {
    for th in [frame_threshold, peak_threshold] {
        if !(th > 0.0 && th < 1.0) {
            return Err(Error::InvalidArgument(format!("threshold {th} outside (0, 1)")));
        }
    }
    let blank = post.blank();
    let mut frames_above = 0;
    let mut peaks: Vec<Peak> = Vec::new();
    let mut open: Option<Peak> = None;
    for (t, row) in post.probs.row_iter().enumerate() {
        let nb = &row[..blank];
        let k = argmax(nb);
        let top = nb[k];
        if top > frame_threshold {
            frames_above += 1;
        }
        let hot = top > peak_threshold;
        match open.as_mut() {
            Some(p) if hot && p.phoneme == k => p.offset = t,
            _ => {
                if let Some(p) = open.take() {
                    peaks.push(p);
                }
                if hot {
                    open = Some(Peak { onset: t, offset: t, phoneme: k });
                }
            }
        }
    }
    peaks.extend(open);
    let mean_onset =
        (!peaks.is_empty()).then(|| peaks.iter().map(|p| p.onset as f64).sum::<f64>() / peaks.len() as f64);
    Ok(PeakStats { frames_above_threshold: frames_above, peaks, mean_onset })
}

pub fn frames_to_ms(frames: f64) -> f64 {
    frames * STACKED_FRAME_MS
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayReport {
    pub mean_delay_frames: f64,
    pub mean_delay_ms: f64,
    pub utterances_used: usize,
    /// Utterances without peaks in either model.
    pub utterances_excluded: usize,
}

/// Mean over utterances of `mean_onset(model) - mean_onset(reference)`.
pub fn delay_relative(model: &[PeakStats], reference: &[PeakStats]) -> Result<DelayReport> {
    if model.len() != reference.len() {
        return Err(Error::Shape(format!("{} model vs {} reference utterances", model.len(), reference.len())));
    }
    let mut sum = 0.0;
    let mut used = 0;
    for (m, r) in model.iter().zip(reference) {
        if let (Some(a), Some(b)) = (m.mean_onset, r.mean_onset) {
            sum += a - b;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::InvalidArgument("no utterance has peaks in both models".into()));
    }
    let frames = sum / used as f64;
    Ok(DelayReport {
        mean_delay_frames: frames,
        mean_delay_ms: frames_to_ms(frames),
        utterances_used: used,
        utterances_excluded: model.len() - used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn two_bumps() -> Posteriorgram {
        let mut rows = Vec::new();
        for t in 0..10 {
            let hot = (2..=4).contains(&t) || (7..=8).contains(&t);
            rows.push(if hot { vec![0.9, 0.0, 0.1] } else { vec![0.0, 0.0, 1.0] });
        }
        Posteriorgram::new(Tensor::from_rows(&rows).unwrap()).unwrap()
    }

    #[test]
    fn all_blank_has_no_peaks() {
        let p = Posteriorgram::new(Tensor::from_rows(&vec![vec![0.0, 0.0, 1.0]; 5]).unwrap()).unwrap();
        let s = peak_stats(&p, FRAME_THRESHOLD, PEAK_THRESHOLD).unwrap();
        assert_eq!((s.frames_above_threshold, s.peaks.len(), s.mean_onset), (0, 0, None));
    }

    #[test]
    fn rectangular_bumps() {
        let s = peak_stats(&two_bumps(), FRAME_THRESHOLD, PEAK_THRESHOLD).unwrap();
        assert_eq!(s.frames_above_threshold, 5);
        assert_eq!(s.peaks.iter().map(|p| p.onset).collect::<Vec<_>>(), vec![2, 7]);
        assert_eq!(s.peaks[0].offset, 4);
        assert_eq!(s.mean_onset, Some(4.5));
    }

    #[test]
    fn phoneme_change_splits_a_run() {
        let rows = vec![vec![0.9, 0.05, 0.05], vec![0.9, 0.05, 0.05], vec![0.05, 0.9, 0.05]];
        let p = Posteriorgram::new(Tensor::from_rows(&rows).unwrap()).unwrap();
        let s = peak_stats(&p, FRAME_THRESHOLD, PEAK_THRESHOLD).unwrap();
        assert_eq!(s.peaks, vec![Peak { onset: 0, offset: 1, phoneme: 0 }, Peak { onset: 2, offset: 2, phoneme: 1 }]);
    }

    #[test]
    fn thresholds_validated() {
        assert!(peak_stats(&two_bumps(), 0.0, 0.5).is_err());
        assert!(peak_stats(&two_bumps(), 0.1, 1.0).is_err());
    }

    #[test]
    fn delay_conversions() {
        assert_eq!(frames_to_ms(7.9), 7.9 * 30.0);
        assert!((frames_to_ms(7.9) - 237.0).abs() < 1e-9);
        assert!((frames_to_ms(-0.3) + 9.0).abs() < 1e-9);
        let s = peak_stats(&two_bumps(), FRAME_THRESHOLD, PEAK_THRESHOLD).unwrap();
        let d = delay_relative(&[s.clone()], &[s]).unwrap();
        assert_eq!((d.mean_delay_frames, d.mean_delay_ms), (0.0, 0.0));
    }

    #[test]
    fn delay_excludes_peakless_utterances() {
        let none = PeakStats { frames_above_threshold: 0, peaks: vec![], mean_onset: None };
        let a = PeakStats { frames_above_threshold: 1, peaks: vec![], mean_onset: Some(3.0) };
        let b = PeakStats { frames_above_threshold: 1, peaks: vec![], mean_onset: Some(1.0) };
        let d = delay_relative(&[a, none.clone()], &[b, none.clone()]).unwrap();
        assert_eq!((d.mean_delay_frames, d.utterances_used, d.utterances_excluded), (2.0, 1, 1));
        assert!(delay_relative(&[none.clone()], &[none]).is_err());
    }
}
