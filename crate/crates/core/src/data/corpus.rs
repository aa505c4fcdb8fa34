use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::synth::{Synthesizer, Utterance};
use super::{CorpusConfig, QualityLabel};
use crate::binio;
use crate::ctc::PhonemeSeq;
use crate::error::{Error, Result};
use crate::model::{stack_frames, FeatureSequence, ROTATIONS};

const MANIFEST: &str = "manifest.json";
const FEATURE_DIR: &str = "features";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Self::Train, Self::Dev, Self::Test];

    fn stream(self) -> u64 {
        match self {
            Self::Train => 1,
            Self::Dev => 2,
            Self::Test => 3,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Train => "train",
            Self::Dev => "dev",
            Self::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "dev" => Ok(Self::Dev),
            "test" => Ok(Self::Test),
            _ => Err(Error::InvalidArgument(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub config: CorpusConfig,
    /// Label-1 utterances only.
    pub train: Vec<Utterance>,
    pub dev: Vec<Utterance>,
    pub test: Vec<Utterance>,
}

impl Corpus {
    pub fn split(&self, split: Split) -> &[Utterance] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.dev.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn draw_label<R: Rng + ?Sized>(rng: &mut R, dist: &[f64; 4]) -> QualityLabel {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (p, label) in dist.iter().zip(QualityLabel::ALL) {
        acc += p;
        if u < acc {
            return label;
        }
    }
    *QualityLabel::ALL.iter().rev().find(|l| dist[**l as usize - 1] > 0.0).unwrap_or(&QualityLabel::Clean)
}

fn utterance_rng(seed: u64, split: Split, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((split.stream() << 40) | index as u64);
    rng
}

fn generate_split(synth: &Synthesizer<'_>, split: Split, count: usize) -> Result<Vec<Utterance>> {
    let cfg = synth.config();
    let jitters: Vec<Vec<f64>> =
        (0..cfg.speakers_per_split).map(|k| synth.speaker_jitter((split.stream() << 32) | k as u64)).collect();
    let all: Vec<Utterance> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = utterance_rng(cfg.seed, split, i);
            let word = cfg.lexicon.word_at(rng.random_range(0..cfg.lexicon.len())).0.clone();
            let label = draw_label(&mut rng, &cfg.label_distribution);
            let speaker = rng.random_range(0..cfg.speakers_per_split);
            let mut u = synth.synthesize(&mut rng, &word, label, &jitters[speaker])?;
            u.id = format!("{split}-{i:05}");
            u.speaker = format!("{split}-spk{speaker:02}");
            Ok(u)
        })
        .collect::<Result<_>>()?;
    Ok(match split {
        Split::Train => all.into_iter().filter(|u| u.quality_label == QualityLabel::Clean).collect(),
        _ => all,
    })
}

/// Generates all three splits. Each utterance draws from its own RNG stream keyed
/// by (seed, split, index), so the result does not depend on thread scheduling.
pub fn generate_corpus(config: &CorpusConfig) -> Result<Corpus> {
    let synth = Synthesizer::new(config)?;
    Ok(Corpus {
        config: config.clone(),
        train: generate_split(&synth, Split::Train, config.train_count)?,
        dev: generate_split(&synth, Split::Dev, config.dev_count)?,
        test: generate_split(&synth, Split::Test, config.test_count)?,
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    id: String,
    word: String,
    speaker: String,
    split: Split,
    label: QualityLabel,
    canonical: PhonemeSeq,
    spoken: PhonemeSeq,
    boundaries: Vec<(usize, usize)>,
    silence_truth: Vec<bool>,
    path: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    config: CorpusConfig,
    utterances: Vec<ManifestEntry>,
}

/// Writes `manifest.json` plus one binary feature file per utterance under `features/`.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir.join(FEATURE_DIR))?;
    let mut utterances = Vec::with_capacity(corpus.len());
    for split in Split::ALL {
        for u in corpus.split(split) {
            let path = PathBuf::from(FEATURE_DIR).join(format!("{}.bin", u.id));
            binio::write(&dir.join(&path), &json!({ "id": u.id }), &[("base_frames", &u.base_frames)])?;
            utterances.push(ManifestEntry {
                id: u.id.clone(),
                word: u.word.clone(),
                speaker: u.speaker.clone(),
                split,
                label: u.quality_label,
                canonical: u.canonical.clone(),
                spoken: u.spoken.clone(),
                boundaries: u.boundaries.clone(),
                silence_truth: u.silence_truth.clone(),
                path,
            });
        }
    }
    let manifest = Manifest { config: corpus.config.clone(), utterances };
    std::fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn read_corpus(dir: &Path) -> Result<Corpus> {
    let manifest_path = dir.join(MANIFEST);
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(&manifest_path)?)?;
    manifest.config.validate()?;
    let mut corpus =
        Corpus { config: manifest.config, train: Vec::new(), dev: Vec::new(), test: Vec::new() };
    for e in manifest.utterances {
        let path = dir.join(&e.path);
        let (_, arrays) = binio::read(&path)?;
        let base_frames = arrays
            .into_iter()
            .find(|(n, _)| n == "base_frames")
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Corrupt { path: path.clone(), reason: "no base_frames array".into() })?;
        let features = FeatureSequence::from_frames(stack_frames(&base_frames, ROTATIONS[0])?)?;
        if features.len() != e.silence_truth.len() {
            return Err(Error::Corrupt { path, reason: "frame count disagrees with manifest".into() });
        }
        let u = Utterance {
            id: e.id,
            word: e.word,
            speaker: e.speaker,
            canonical: e.canonical,
            spoken: e.spoken,
            quality_label: e.label,
            base_frames,
            features,
            boundaries: e.boundaries,
            silence_truth: e.silence_truth,
        };
        match e.split {
            Split::Train => corpus.train.push(u),
            Split::Dev => corpus.dev.push(u),
            Split::Test => corpus.test.push(u),
        }
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CorpusConfig {
        CorpusConfig { train_count: 40, dev_count: 20, test_count: 20, base_dim: 8, seed: 3, ..Default::default() }
    }

    #[test]
    fn train_is_label_one_only() {
        let c = generate_corpus(&small()).unwrap();
        assert!(!c.train.is_empty());
        assert!(c.train.iter().all(|u| u.quality_label == QualityLabel::Clean));
        assert_eq!(c.dev.len(), 20);
    }

    #[test]
    fn same_seed_same_corpus() {
        assert_eq!(generate_corpus(&small()).unwrap(), generate_corpus(&small()).unwrap());
        let other = CorpusConfig { seed: 4, ..small() };
        assert_ne!(generate_corpus(&small()).unwrap().dev, generate_corpus(&other).unwrap().dev);
    }

    #[test]
    fn ids_are_disjoint_and_speakers_split_local() {
        let c = generate_corpus(&small()).unwrap();
        let mut ids: Vec<&str> = Split::ALL.iter().flat_map(|s| c.split(*s)).map(|u| u.id.as_str()).collect();
        let n = ids.len();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), n);
        for s in Split::ALL {
            assert!(c.split(s).iter().all(|u| u.speaker.starts_with(&s.to_string())));
        }
    }

    #[test]
    fn split_parse_round_trip() {
        for s in Split::ALL {
            assert_eq!(s.to_string().parse::<Split>().unwrap(), s);
        }
        assert!("eval".parse::<Split>().is_err());
    }
}
