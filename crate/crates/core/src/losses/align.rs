use serde::{Deserialize, Serialize};

use crate::ctc::Posteriorgram;
use crate::error::{Error, Result};
use crate::model::FeatureSequence;
use crate::numerics::Tensor;

pub const DEFAULT_ALIGN_CLAMP: f64 = 1e-8;

/// Frames quieter than the utterance's mean energy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SilenceMask {
    pub is_silence: Vec<bool>,
}

impl SilenceMask {
    pub fn from_energies(energies: &[f64]) -> Self {
        let mean = energies.iter().sum::<f64>() / energies.len().max(1) as f64;
        Self { is_silence: energies.iter().map(|&e| e < mean).collect() }
    }

    pub fn len(&self) -> usize {
        self.is_silence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.is_silence.is_empty()
    }
}

pub fn silence_mask(features: &FeatureSequence) -> SilenceMask {
    SilenceMask::from_energies(&features.energies)
}

/// Mean log of the "wrong" mass per frame, and its gradient wrt the probabilities.
///
/// On silence frames the scored mass is the total non-blank probability; on
/// speech frames it is the blank probability. Each score is floored at `clamp`
/// (zero gradient below the floor).
pub fn alignment_penalty(post: &Posteriorgram, mask: &SilenceMask, clamp: f64) -> Result<(f64, Tensor)> {
    if !(clamp > 0.0 && clamp < 1.0) {
        return Err(Error::InvalidArgument(format!("alignment clamp {clamp} outside (0, 1)")));
    }
    let t_len = post.frames();
    if mask.len() != t_len {
        return Err(Error::Shape(format!("mask of {} frames for posteriorgram of {t_len}", mask.len())));
    }
    let blank = post.blank();
    let k = post.probs.cols();
    let mut grad = Tensor::zeros(&[t_len, k]);
    let mut total = 0.0;
    let inv_t = 1.0 / t_len as f64;
    for t in 0..t_len {
        let row = post.probs.row(t);
        let silent = mask.is_silence[t];
        let f = if silent { row[..blank].iter().sum::<f64>() } else { row[blank] };
        if f < clamp {
            total += clamp.ln();
            continue;
        }
        total += f.ln();
        let g = inv_t / f;
        let grow = grad.row_mut(t);
        if silent {
            grow[..blank].iter_mut().for_each(|x| *x = g);
        } else {
            grow[blank] = g;
        }
    }
    Ok((total * inv_t, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post(rows: &[Vec<f64>]) -> Posteriorgram {
        Posteriorgram::new(Tensor::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn mask_strict_less_than_mean() {
        assert_eq!(SilenceMask::from_energies(&[1.0, 3.0]).is_silence, vec![true, false]);
        assert_eq!(SilenceMask::from_energies(&[2.0, 2.0, 2.0]).is_silence, vec![false; 3]);
    }

    #[test]
    fn half_and_half_gives_ln_half() {
        let p = post(&[vec![0.25, 0.25, 0.5], vec![0.3, 0.2, 0.5]]);
        let mask = SilenceMask { is_silence: vec![true, false] };
        let (v, _) = alignment_penalty(&p, &mask, 1e-8).unwrap();
        assert!((v - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn perfect_alignment_hits_the_floor() {
        let p = post(&[vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]);
        let mask = SilenceMask { is_silence: vec![true, false] };
        let (v, g) = alignment_penalty(&p, &mask, 1e-8).unwrap();
        assert!((v - 1e-8f64.ln()).abs() < 1e-12);
        assert!(g.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn clamp_must_be_a_probability() {
        let p = post(&[vec![0.5, 0.5]]);
        let mask = SilenceMask { is_silence: vec![false] };
        for c in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(alignment_penalty(&p, &mask, c).is_err());
        }
    }
}
