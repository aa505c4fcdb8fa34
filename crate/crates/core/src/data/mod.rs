//! Seeded synthetic corpus of scripted single-word prompts.
//!
//! Each phoneme emits a run of frames around a fixed prototype vector, framed
//! by low-energy silence. Quality labels follow the four recording categories
//! (1 clean, 2 extra noise, 3 wrong word, 4 air puff); only label-1
//! utterances are kept for acoustic-model training.

mod corpus;
mod inject;
mod lexicon;
mod synth;

pub use corpus::{generate_corpus, read_corpus, write_corpus, Corpus, Split};
pub use inject::{apply_edits, inject_mispronunciation, Edit, EditKind, EditRates};
pub use lexicon::{format_phonemes, parse_phonemes, phoneme_id, Lexicon, PHONEMES, VOCAB_SIZE};
pub use synth::{synthesize_utterance, Synthesizer, Utterance};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum QualityLabel {
    /// Only the target word is said.
    Clean = 1,
    /// Target word may be present, with additional noise.
    Noisy = 2,
    /// Target word is not present.
    Absent = 3,
    /// Target word is present with an air puff.
    AirPuff = 4,
}

impl QualityLabel {
    pub const ALL: [QualityLabel; 4] = [Self::Clean, Self::Noisy, Self::Absent, Self::AirPuff];

    /// Only label 1 counts as a correct pronunciation.
    pub fn is_correct(self) -> bool {
        self == Self::Clean
    }
}

impl TryFrom<u8> for QualityLabel {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Self::Clean),
            2 => Ok(Self::Noisy),
            3 => Ok(Self::Absent),
            4 => Ok(Self::AirPuff),
            _ => Err(Error::InvalidArgument(format!("quality label {v} outside 1..=4"))),
        }
    }
}

impl From<QualityLabel> for u8 {
    fn from(l: QualityLabel) -> u8 {
        l as u8
    }
}

fn default_train() -> usize {
    300
}
fn default_eval() -> usize {
    100
}
fn default_labels() -> [f64; 4] {
    [0.80, 0.08, 0.06, 0.06]
}
fn default_durations() -> [usize; 2] {
    [3, 6]
}
fn default_pads() -> [usize; 2] {
    [3, 6]
}
fn default_noise() -> f64 {
    1.0
}
fn default_base_dim() -> usize {
    40
}
fn default_prototype_seed() -> u64 {
    0x5eed_0001
}
fn default_speakers() -> usize {
    12
}
fn default_jitter() -> f64 {
    0.2
}

/// Corpus generation parameters. Durations and pads are in stacked frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    #[serde(default)]
    pub lexicon: Lexicon,
    #[serde(default = "default_train")]
    pub train_count: usize,
    #[serde(default = "default_eval")]
    pub dev_count: usize,
    #[serde(default = "default_eval")]
    pub test_count: usize,
    #[serde(default = "default_labels")]
    pub label_distribution: [f64; 4],
    #[serde(default)]
    pub mispronunciation_edit_rates: EditRates,
    #[serde(default = "default_durations")]
    pub phoneme_duration_range: [usize; 2],
    #[serde(default = "default_pads")]
    pub silence_pad_range: [usize; 2],
    /// Gaussian noise on phoneme frames.
    #[serde(default = "default_noise")]
    pub noise_std: f64,
    /// Gaussian noise on silence frames.
    #[serde(default)]
    pub silence_noise_std: f64,
    /// Dimension of one unstacked frame; stacked input is three times this.
    #[serde(default = "default_base_dim")]
    pub base_dim: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_prototype_seed")]
    pub prototype_seed: u64,
    #[serde(default = "default_speakers")]
    pub speakers_per_split: usize,
    #[serde(default = "default_jitter")]
    pub speaker_jitter: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            lexicon: Lexicon::builtin(),
            train_count: default_train(),
            dev_count: default_eval(),
            test_count: default_eval(),
            label_distribution: default_labels(),
            mispronunciation_edit_rates: EditRates::default(),
            phoneme_duration_range: default_durations(),
            silence_pad_range: default_pads(),
            noise_std: default_noise(),
            silence_noise_std: 0.0,
            base_dim: default_base_dim(),
            seed: 0,
            prototype_seed: default_prototype_seed(),
            speakers_per_split: default_speakers(),
            speaker_jitter: default_jitter(),
        }
    }
}

impl CorpusConfig {
    /// Stacked input dimension seen by the model.
    pub fn input_dim(&self) -> usize {
        self.base_dim * crate::model::STACK
    }

    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.label_distribution.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.label_distribution.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::Config(format!("label distribution {:?} must sum to 1", self.label_distribution)));
        }
        self.mispronunciation_edit_rates.validate()?;
        let [dlo, dhi] = self.phoneme_duration_range;
        let [plo, phi] = self.silence_pad_range;
        if dlo == 0 || dlo > dhi || plo == 0 || plo > phi {
            return Err(Error::Config("duration and pad ranges must be positive and ordered".into()));
        }
        if !(self.noise_std >= 0.0) || !(self.silence_noise_std >= 0.0) || !(self.speaker_jitter >= 0.0) {
            return Err(Error::Config("noise levels and speaker_jitter must be non-negative".into()));
        }
        if self.base_dim == 0 || self.speakers_per_split == 0 {
            return Err(Error::Config("base_dim and speakers_per_split must be positive".into()));
        }
        if self.lexicon.len() < 2 {
            return Err(Error::Config("lexicon needs at least two words".into()));
        }
        Ok(())
    }
}
