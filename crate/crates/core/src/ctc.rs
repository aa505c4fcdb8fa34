//! CTC loss, path collapsing, greedy decoding, and a brute-force oracle.
//!
//! The blank symbol is always the last column (`V` for a `V+1`-wide output).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::STACKED_FRAME_MS;
use crate::numerics::{log_add, Tensor};

/// A phoneme label sequence; never contains the blank.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhonemeSeq(pub Vec<usize>);

impl PhonemeSeq {
    pub fn new(ids: Vec<usize>) -> Self {
        Self(ids)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    /// Checks every id is a non-blank symbol of a `vocab`-sized inventory.
    pub fn validate(&self, vocab: usize) -> Result<()> {
        match self.0.iter().find(|&&id| id >= vocab) {
            Some(id) => Err(Error::InvalidArgument(format!("phoneme id {id} outside vocabulary of {vocab}"))),
            None => Ok(()),
        }
    }
}

impl From<Vec<usize>> for PhonemeSeq {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

/// Per-frame output distributions, blank included as the last column.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriorgram {
    pub probs: Tensor,
    pub frame_duration_ms: f64,
}

impl Posteriorgram {
    pub fn new(probs: Tensor) -> Result<Self> {
        if probs.cols() < 2 {
            return Err(Error::Shape("posteriorgram needs at least one phoneme and the blank".into()));
        }
        for (row, r) in probs.row_iter().enumerate() {
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > 1e-9 || r.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidArgument(format!("row {row} is not a distribution (sum {s})")));
            }
        }
        Ok(Self { probs, frame_duration_ms: STACKED_FRAME_MS })
    }

    pub fn frames(&self) -> usize {
        self.probs.rows()
    }

    pub fn blank(&self) -> usize {
        self.probs.cols() - 1
    }
}

/// Smallest frame count that can emit `labels`: one frame per label plus one
/// blank between each adjacent repeat.
pub fn min_frames(labels: &[usize]) -> usize {
    labels.len() + labels.windows(2).filter(|w| w[0] == w[1]).count()
}

fn extended(labels: &[usize], blank: usize) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * labels.len() + 1);
    ext.push(blank);
    for &l in labels {
        ext.push(l);
        ext.push(blank);
    }
    ext
}

/// Negative log-likelihood of `labels` and its gradient with respect to `log_probs`.
///
/// `log_probs` is `T × (V+1)`. The rows need not be normalised; the recursion
/// treats each entry as a free log-score, so the gradient is exactly the
/// negated state occupancy.
pub fn ctc_loss(log_probs: &Tensor, labels: &PhonemeSeq) -> Result<(f64, Tensor)> {
    let t_len = log_probs.rows();
    let k = log_probs.cols();
    if k < 2 {
        return Err(Error::Shape("log_probs needs at least two columns".into()));
    }
    if labels.is_empty() {
        return Err(Error::Empty("CTC labels"));
    }
    let blank = k - 1;
    labels.validate(blank)?;
    let required = min_frames(labels.ids());
    if t_len < required {
        return Err(Error::CtcInfeasible { frames: t_len, required });
    }
    let ext = extended(labels.ids(), blank);
    let s_len = ext.len();
    let lp = |t: usize, s: usize| log_probs.get(t, ext[s]);
    let ninf = f64::NEG_INFINITY;
    // skip transition s-2 -> s allowed for non-blank labels differing from ext[s-2]
    let can_skip: Vec<bool> = (0..s_len).map(|s| s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]).collect();

    let mut alpha = vec![ninf; t_len * s_len];
    alpha[0] = lp(0, 0);
    alpha[1] = lp(0, 1);
    for t in 1..t_len {
        let (prev, cur) = alpha.split_at_mut(t * s_len);
        let prev = &prev[(t - 1) * s_len..];
        for s in 0..s_len {
            let mut a = prev[s];
            if s >= 1 {
                a = log_add(a, prev[s - 1]);
            }
            if can_skip[s] {
                a = log_add(a, prev[s - 2]);
            }
            cur[s] = if a == ninf { ninf } else { a + lp(t, s) };
        }
    }
    let mut beta = vec![ninf; t_len * s_len];
    let last = (t_len - 1) * s_len;
    beta[last + s_len - 1] = lp(t_len - 1, s_len - 1);
    beta[last + s_len - 2] = lp(t_len - 1, s_len - 2);
    for t in (0..t_len - 1).rev() {
        let (cur, next) = beta.split_at_mut((t + 1) * s_len);
        let cur = &mut cur[t * s_len..];
        let next = &next[..s_len];
        for s in 0..s_len {
            let mut b = next[s];
            if s + 1 < s_len {
                b = log_add(b, next[s + 1]);
            }
            if s + 2 < s_len && can_skip[s + 2] {
                b = log_add(b, next[s + 2]);
            }
            cur[s] = if b == ninf { ninf } else { b + lp(t, s) };
        }
    }
    let log_p = log_add(alpha[last + s_len - 1], alpha[last + s_len - 2]);
    if !log_p.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    let mut grad = Tensor::zeros(&[t_len, k]);
    for t in 0..t_len {
        let row = grad.row_mut(t);
        for s in 0..s_len {
            let a = alpha[t * s_len + s];
            let b = beta[t * s_len + s];
            if a == ninf || b == ninf {
                continue;
            }
            row[ext[s]] -= (a + b - lp(t, s) - log_p).exp();
        }
    }
    Ok((-log_p, grad))
}

/// Removes adjacent duplicates, then blanks.
pub fn collapse(path: &[usize], blank: usize) -> PhonemeSeq {
    let mut out = Vec::new();
    let mut prev = None;
    for &p in path {
        if Some(p) != prev && p != blank {
            out.push(p);
        }
        prev = Some(p);
    }
    PhonemeSeq(out)
}

pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;

/// Enumerates every length-T path; test oracle for [`ctc_loss`].
pub fn ctc_brute_force(probs: &Tensor, labels: &PhonemeSeq) -> Result<f64> {
    let t_len = probs.rows();
    let k = probs.cols();
    let paths = (k as u128).checked_pow(t_len as u32).unwrap_or(u128::MAX);
    if paths > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge { paths, limit: BRUTE_FORCE_LIMIT });
    }
    let blank = k - 1;
    let mut path = vec![0usize; t_len];
    let mut total = 0.0;
    let mut any = false;
    for mut code in 0..paths {
        for slot in path.iter_mut() {
            *slot = (code % k as u128) as usize;
            code /= k as u128;
        }
        if collapse(&path, blank) == *labels {
            any = true;
            total += path.iter().enumerate().map(|(t, &s)| probs.get(t, s)).product::<f64>();
        }
    }
    if !any {
        return Err(Error::NoValidPath);
    }
    Ok(-total.ln())
}

/// Best-path decoding: per-frame argmax, then collapse.
pub fn greedy_decode(post: &Posteriorgram) -> PhonemeSeq {
    let path: Vec<usize> = post.probs.row_iter().map(argmax).collect();
    collapse(&path, post.blank())
}

/// Index of the largest entry; the first one on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
