use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ctc::PhonemeSeq;
use crate::error::{Error, Result};

/// The 39-symbol ARPAbet inventory (stress markers dropped).
pub const PHONEMES: [&str; 39] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "B", "CH", "D", "DH", "EH", "ER", "EY", "F", "G", "HH", "IH", "IY", "JH",
    "K", "L", "M", "N", "NG", "OW", "OY", "P", "R", "S", "SH", "T", "TH", "UH", "UW", "V", "W", "Y", "Z", "ZH",
];

pub const VOCAB_SIZE: usize = PHONEMES.len();

const BUILTIN: &[(&str, &str)] = &[
    ("apple", "AE P AH L"),
    ("bird", "B ER D"),
    ("book", "B UH K"),
    ("boy", "B OY"),
    ("bridge", "B R IH JH"),
    ("cat", "K AE T"),
    ("chair", "CH EH R"),
    ("church", "CH ER CH"),
    ("dog", "D AO G"),
    ("feather", "F EH DH ER"),
    ("fish", "F IH SH"),
    ("garden", "G AA R D AH N"),
    ("hat", "HH AE T"),
    ("hello", "HH AH L OW"),
    ("house", "HH AW S"),
    ("judge", "JH AH JH"),
    ("kite", "K AY T"),
    ("lizard", "L IH Z ER D"),
    ("lunch", "L AH N CH"),
    ("measure", "M EH ZH ER"),
    ("monkey", "M AH NG K IY"),
    ("moon", "M UW N"),
    ("mouth", "M AW TH"),
    ("orange", "AO R AH N JH"),
    ("pencil", "P EH N S AH L"),
    ("pizza", "P IY T S AH"),
    ("purple", "P ER P AH L"),
    ("rabbit", "R AE B AH T"),
    ("ring", "R IH NG"),
    ("ship", "SH IH P"),
    ("shoe", "SH UW"),
    ("sugar", "SH UH G ER"),
    ("that", "DH AE T"),
    ("thing", "TH IH NG"),
    ("three", "TH R IY"),
    ("thrower", "TH R OW ER"),
    ("toy", "T OY"),
    ("tree", "T R IY"),
    ("umbrella", "AH M B R EH L AH"),
    ("vase", "V EY S"),
    ("voice", "V OY S"),
    ("water", "W AO T ER"),
    ("window", "W IH N D OW"),
    ("yard", "Y AA R D"),
    ("yellow", "Y EH L OW"),
    ("zebra", "Z IY B R AH"),
    ("zoo", "Z UW"),
];

pub fn phoneme_id(symbol: &str) -> Option<usize> {
    PHONEMES.iter().position(|&p| p == symbol)
}

/// Parses a space-separated ARPAbet string.
pub fn parse_phonemes(s: &str) -> Result<PhonemeSeq> {
    s.split_whitespace()
        .map(|p| phoneme_id(p).ok_or_else(|| Error::InvalidArgument(format!("unknown phoneme {p:?}"))))
        .collect::<Result<Vec<_>>>()
        .map(PhonemeSeq::new)
}

pub fn format_phonemes(seq: &PhonemeSeq) -> String {
    seq.ids().iter().map(|&i| PHONEMES.get(i).copied().unwrap_or("?")).collect::<Vec<_>>().join(" ")
}

/// Word → canonical phoneme sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, String>", into = "BTreeMap<String, String>")]
pub struct Lexicon {
    words: BTreeMap<String, PhonemeSeq>,
}

impl Lexicon {
    pub fn builtin() -> Self {
        let words = BUILTIN
            .iter()
            .map(|(w, p)| (w.to_string(), parse_phonemes(p).expect("builtin lexicon")))
            .collect();
        Self { words }
    }

    pub fn new(words: BTreeMap<String, PhonemeSeq>) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::Config("empty lexicon".into()));
        }
        for (w, seq) in &words {
            if seq.is_empty() {
                return Err(Error::Config(format!("word {w:?} has no phonemes")));
            }
            seq.validate(VOCAB_SIZE)?;
        }
        Ok(Self { words })
    }

    pub fn get(&self, word: &str) -> Result<&PhonemeSeq> {
        self.words.get(word).ok_or_else(|| Error::UnknownWord(word.to_string()))
    }

    pub fn words(&self) -> impl Iterator<Item = (&String, &PhonemeSeq)> {
        self.words.iter()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word_at(&self, i: usize) -> (&String, &PhonemeSeq) {
        self.words.iter().nth(i).expect("word index in range")
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TryFrom<BTreeMap<String, String>> for Lexicon {
    type Error = Error;

    fn try_from(raw: BTreeMap<String, String>) -> Result<Self> {
        let words = raw
            .into_iter()
            .map(|(w, p)| parse_phonemes(&p).map(|s| (w, s)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Self::new(words)
    }
}

impl From<Lexicon> for BTreeMap<String, String> {
    fn from(l: Lexicon) -> Self {
        l.words.into_iter().map(|(w, s)| (w, format_phonemes(&s))).collect()
    }
}
