use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::inject::inject_mispronunciation;
use super::lexicon::VOCAB_SIZE;
use super::{CorpusConfig, QualityLabel};
use crate::ctc::PhonemeSeq;
use crate::error::{Error, Result};
use crate::model::{stack_frames, FeatureSequence, ROTATIONS, STACK};
use crate::numerics::Tensor;

/// Mean feature value (energy) range of phoneme prototypes.
const SPEECH_ENERGY: (f64, f64) = (0.4, 0.7);
/// Feature value of every silence dimension.
const SILENCE_LEVEL: f64 = -1.3;
const BURST_OFFSET: f64 = 1.0;
const BURST_STD: f64 = 1.5;
const PUFF_OFFSET: f64 = 3.0;
const PUFF_STD: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub word: String,
    pub speaker: String,
    pub canonical: PhonemeSeq,
    pub spoken: PhonemeSeq,
    pub quality_label: QualityLabel,
    /// Unstacked frames (3T × base_dim).
    pub base_frames: Tensor,
    /// Stacked frames in the identity ordering.
    pub features: FeatureSequence,
    /// Per spoken phoneme, half-open stacked-frame span `[onset, offset)`.
    pub boundaries: Vec<(usize, usize)>,
    /// True where no phoneme is being spoken.
    pub silence_truth: Vec<bool>,
}

impl Utterance {
    pub fn frames(&self) -> usize {
        self.features.len()
    }

    /// Stacked features under one of the three within-stack rotations.
    pub fn features_for(&self, rotation: usize) -> Result<FeatureSequence> {
        if rotation == 0 {
            return Ok(self.features.clone());
        }
        let order = *ROTATIONS
            .get(rotation)
            .ok_or_else(|| Error::InvalidArgument(format!("rotation {rotation}")))?;
        FeatureSequence::from_frames(stack_frames(&self.base_frames, order)?)
    }

    /// Mean ground-truth onset frame of the spoken phonemes.
    pub fn mean_true_onset(&self) -> Option<f64> {
        (!self.boundaries.is_empty())
            .then(|| self.boundaries.iter().map(|b| b.0 as f64).sum::<f64>() / self.boundaries.len() as f64)
    }
}

/// Phoneme prototypes plus the noise model of one corpus configuration.
#[derive(Debug, Clone)]
pub struct Synthesizer<'c> {
    config: &'c CorpusConfig,
    prototypes: Vec<Vec<f64>>,
}

impl<'c> Synthesizer<'c> {
    /// Draws one prototype per phoneme with pairwise distance at least
    /// `sqrt(base_dim / 2)`, each with mean value inside the speech energy band.
    pub fn new(config: &'c CorpusConfig) -> Result<Self> {
        config.validate()?;
        let d = config.base_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(config.prototype_seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let min_dist = (d as f64 / 2.0).sqrt();
        let mut prototypes: Vec<Vec<f64>> = Vec::with_capacity(VOCAB_SIZE);
        let mut attempts = 0;
        while prototypes.len() < VOCAB_SIZE {
            attempts += 1;
            if attempts > 100_000 {
                return Err(Error::Config(format!("cannot place {VOCAB_SIZE} separated prototypes in {d} dims")));
            }
            let mut v: Vec<f64> = (0..d).map(|_| normal.sample(&mut rng)).collect();
            let mean = v.iter().sum::<f64>() / d as f64;
            let level = rng.random_range(SPEECH_ENERGY.0..SPEECH_ENERGY.1);
            v.iter_mut().for_each(|x| *x += level - mean);
            let far = prototypes
                .iter()
                .all(|p| p.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= min_dist);
            if far {
                prototypes.push(v);
            }
        }
        Ok(Self { config, prototypes })
    }

    pub fn config(&self) -> &CorpusConfig {
        self.config
    }

    pub fn prototype(&self, phoneme: usize) -> &[f64] {
        &self.prototypes[phoneme]
    }

    /// Zero-mean per-speaker offset added to every phoneme prototype.
    pub fn speaker_jitter(&self, speaker_seed: u64) -> Vec<f64> {
        let d = self.config.base_dim;
        if self.config.speaker_jitter == 0.0 {
            return vec![0.0; d];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.prototype_seed ^ speaker_seed.rotate_left(17));
        let normal = Normal::new(0.0, self.config.speaker_jitter).expect("jitter std");
        let mut v: Vec<f64> = (0..d).map(|_| normal.sample(&mut rng)).collect();
        let mean = v.iter().sum::<f64>() / d as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        v
    }

    /// Renders one prompt. `jitter` is the speaker offset (see [`Self::speaker_jitter`]).
    pub fn synthesize<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        word: &str,
        label: QualityLabel,
        jitter: &[f64],
    ) -> Result<Utterance> {
        let cfg = self.config;
        let canonical = cfg.lexicon.get(word)?.clone();
        let d = cfg.base_dim;
        if jitter.len() != d {
            return Err(Error::Shape(format!("speaker jitter of {} for base_dim {d}", jitter.len())));
        }
        let spoken = match label {
            QualityLabel::Clean | QualityLabel::AirPuff => canonical.clone(),
            QualityLabel::Noisy => inject_mispronunciation(&canonical, rng, &cfg.mispronunciation_edit_rates)?.0,
            QualityLabel::Absent => {
                let others: Vec<&PhonemeSeq> =
                    cfg.lexicon.words().map(|(_, s)| s).filter(|s| **s != canonical).collect();
                if others.is_empty() {
                    return Err(Error::Config("lexicon has no distinct word to substitute".into()));
                }
                others[rng.random_range(0..others.len())].clone()
            }
        };

        let [dlo, dhi] = cfg.phoneme_duration_range;
        let [plo, phi] = cfg.silence_pad_range;
        let lead = rng.random_range(plo..=phi);
        let trail = rng.random_range(plo..=phi);
        let durations: Vec<usize> = spoken.ids().iter().map(|_| rng.random_range(dlo..=dhi)).collect();
        let puff = (label == QualityLabel::AirPuff).then(|| rng.random_range(2..=4usize));

        // segment plan in stacked frames: None = silence, Some(p) = phoneme p
        let mut plan: Vec<Option<usize>> = Vec::new();
        let mut puff_span = None;
        match puff {
            Some(len) => {
                let before = rng.random_range(0..lead);
                plan.extend(std::iter::repeat_n(None, before));
                puff_span = Some((plan.len(), plan.len() + len));
                plan.extend(std::iter::repeat_n(None, len + lead - before));
            }
            None => plan.extend(std::iter::repeat_n(None, lead)),
        }
        let mut boundaries = Vec::with_capacity(spoken.len());
        for (&p, &dur) in spoken.ids().iter().zip(&durations) {
            boundaries.push((plan.len(), plan.len() + dur));
            plan.extend(std::iter::repeat_n(Some(p), dur));
        }
        plan.extend(std::iter::repeat_n(None, trail));
        let t_len = plan.len();

        let burst_span = (label == QualityLabel::Noisy).then(|| {
            let len = rng.random_range(2..=5usize).min(t_len);
            let start = rng.random_range(0..=t_len - len);
            (start, start + len)
        });

        let noise = Normal::new(0.0, 1.0).expect("unit normal");
        let burst = Normal::new(0.0, BURST_STD).expect("burst std");
        let puff_noise = Normal::new(0.0, PUFF_STD).expect("puff std");
        let within = |span: Option<(usize, usize)>, t: usize| span.is_some_and(|(a, b)| t >= a && t < b);

        let mut base = Vec::with_capacity(t_len * STACK * d);
        for (t, seg) in plan.iter().enumerate() {
            for _ in 0..STACK {
                for k in 0..d {
                    let (mut v, std) = match seg {
                        Some(p) => (self.prototypes[*p][k] + jitter[k], cfg.noise_std),
                        None => (SILENCE_LEVEL, cfg.silence_noise_std),
                    };
                    if std > 0.0 {
                        v += std * noise.sample(rng);
                    }
                    if within(burst_span, t) {
                        v += BURST_OFFSET + burst.sample(rng);
                    }
                    if within(puff_span, t) {
                        v += PUFF_OFFSET + puff_noise.sample(rng);
                    }
                    base.push(v);
                }
            }
        }
        let base_frames = Tensor::matrix(t_len * STACK, d, base)?;
        let features = FeatureSequence::from_frames(stack_frames(&base_frames, ROTATIONS[0])?)?;
        Ok(Utterance {
            id: String::new(),
            word: word.to_string(),
            speaker: String::new(),
            canonical,
            spoken,
            quality_label: label,
            base_frames,
            features,
            boundaries,
            silence_truth: plan.iter().map(Option::is_none).collect(),
        })
    }
}

/// One utterance with no speaker offset.
pub fn synthesize_utterance<R: Rng + ?Sized>(
    rng: &mut R,
    word: &str,
    label: QualityLabel,
    config: &CorpusConfig,
) -> Result<Utterance> {
    let synth = Synthesizer::new(config)?;
    synth.synthesize(rng, word, label, &vec![0.0; config.base_dim])
}
