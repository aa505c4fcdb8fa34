use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lexicon::VOCAB_SIZE;
use crate::ctc::PhonemeSeq;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditRates {
    pub substitute: f64,
    pub delete: f64,
    pub insert: f64,
}

impl Default for EditRates {
    fn default() -> Self {
        Self { substitute: 0.25, delete: 0.1, insert: 0.1 }
    }
}

impl EditRates {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("substitute", self.substitute), ("delete", self.delete), ("insert", self.insert)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidArgument(format!("{name} rate {r} outside [0, 1]")));
            }
        }
        if self.substitute + self.delete > 1.0 {
            return Err(Error::InvalidArgument("substitute + delete rates exceed 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditKind {
    Substitute,
    Delete,
    Insert,
}

/// One edit against the original sequence. For insertions `position` is the
/// gap index (0 = before the first phoneme); otherwise it is the phoneme index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub kind: EditKind,
    pub position: usize,
    pub phoneme: usize,
}

fn other_phoneme<R: Rng + ?Sized>(rng: &mut R, not: usize) -> usize {
    let p = rng.random_range(0..VOCAB_SIZE - 1);
    if p >= not {
        p + 1
    } else {
        p
    }
}

/// Independent per-position substitute/delete events and per-gap insertions.
///
/// A deletion that would leave the sequence empty is skipped.
pub fn inject_mispronunciation<R: Rng + ?Sized>(
    phonemes: &PhonemeSeq,
    rng: &mut R,
    rates: &EditRates,
) -> Result<(PhonemeSeq, Vec<Edit>)> {
    rates.validate()?;
    if phonemes.is_empty() {
        return Err(Error::Empty("phoneme sequence"));
    }
    let src = phonemes.ids();
    let mut edits = Vec::new();
    let mut out = Vec::with_capacity(src.len() + 2);
    for gap in 0..=src.len() {
        if rng.random::<f64>() < rates.insert {
            let phoneme = rng.random_range(0..VOCAB_SIZE);
            edits.push(Edit { kind: EditKind::Insert, position: gap, phoneme });
            out.push(phoneme);
        }
        let Some(&p) = src.get(gap) else { break };
        let u: f64 = rng.random();
        let last_chance = gap + 1 == src.len() && out.is_empty();
        if u < rates.substitute {
            let q = other_phoneme(rng, p);
            edits.push(Edit { kind: EditKind::Substitute, position: gap, phoneme: q });
            out.push(q);
        } else if u < rates.substitute + rates.delete && !last_chance {
            edits.push(Edit { kind: EditKind::Delete, position: gap, phoneme: p });
        } else {
            out.push(p);
        }
    }
    Ok((PhonemeSeq::new(out), edits))
}

/// Replays an edit list onto the original sequence.
pub fn apply_edits(original: &PhonemeSeq, edits: &[Edit]) -> PhonemeSeq {
    let src = original.ids();
    let mut out = Vec::with_capacity(src.len() + edits.len());
    for gap in 0..=src.len() {
        for e in edits.iter().filter(|e| e.kind == EditKind::Insert && e.position == gap) {
            out.push(e.phoneme);
        }
        let Some(&p) = src.get(gap) else { break };
        match edits.iter().find(|e| e.kind != EditKind::Insert && e.position == gap) {
            Some(Edit { kind: EditKind::Substitute, phoneme, .. }) => out.push(*phoneme),
            Some(Edit { kind: EditKind::Delete, .. }) => {}
            _ => out.push(p),
        }
    }
    PhonemeSeq::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::edit_distance;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seq() -> PhonemeSeq {
        PhonemeSeq::new(vec![31, 27, 24, 11])
    }

    #[test]
    fn zero_rates_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rates = EditRates { substitute: 0.0, delete: 0.0, insert: 0.0 };
        let (out, edits) = inject_mispronunciation(&seq(), &mut rng, &rates).unwrap();
        assert_eq!(out, seq());
        assert!(edits.is_empty());
    }

    #[test]
    fn full_substitution_changes_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rates = EditRates { substitute: 1.0, delete: 0.0, insert: 0.0 };
        let (out, _) = inject_mispronunciation(&seq(), &mut rng, &rates).unwrap();
        assert_eq!(edit_distance(&out, &seq()).distance, seq().len());
    }

    #[test]
    fn full_deletion_keeps_one_phoneme() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rates = EditRates { substitute: 0.0, delete: 1.0, insert: 0.0 };
        let (out, edits) = inject_mispronunciation(&seq(), &mut rng, &rates).unwrap();
        assert_eq!(out.0, vec![11]);
        assert_eq!(apply_edits(&seq(), &edits), out);
    }

    #[test]
    fn invalid_rates_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for r in [
            EditRates { substitute: -0.1, delete: 0.0, insert: 0.0 },
            EditRates { substitute: 0.0, delete: 0.0, insert: 1.5 },
        ] {
            assert!(inject_mispronunciation(&seq(), &mut rng, &r).is_err());
        }
        assert!(inject_mispronunciation(&PhonemeSeq::default(), &mut rng, &EditRates::default()).is_err());
    }

    #[test]
    fn edits_bound_distance_and_replay() {
        let rates = EditRates { substitute: 0.3, delete: 0.2, insert: 0.25 };
        for s in 0..1000 {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let (out, edits) = inject_mispronunciation(&seq(), &mut rng, &rates).unwrap();
            assert!(edit_distance(&out, &seq()).distance <= edits.len());
            assert_eq!(apply_edits(&seq(), &edits), out);
        }
    }
}
