use serde::{Deserialize, Serialize};

use crate::ctc::PhonemeSeq;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditDistance {
    pub distance: usize,
    pub substitutions: usize,
    /// Hypothesis symbols absent from the reference.
    pub insertions: usize,
    /// Reference symbols missing from the hypothesis.
    pub deletions: usize,
}

/// Unit-cost Levenshtein distance with the operation counts of one optimal
/// alignment. Backtrace ties prefer substitution, then deletion, then insertion.
pub fn edit_distance(hyp: &PhonemeSeq, reference: &PhonemeSeq) -> EditDistance {
    let (h, r) = (hyp.ids(), reference.ids());
    let (n, m) = (h.len(), r.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        d[i * w] = i;
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(h[i - 1] != r[j - 1]);
            let ins = d[(i - 1) * w + j] + 1;
            let del = d[i * w + j - 1] + 1;
            d[i * w + j] = sub.min(ins).min(del);
        }
    }
    let mut out = EditDistance { distance: d[n * w + m], ..Default::default() };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let cost = usize::from(h[i - 1] != r[j - 1]);
            if d[(i - 1) * w + j - 1] + cost == here {
                out.substitutions += cost;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && d[i * w + j - 1] + 1 == here {
            out.deletions += 1;
            j -= 1;
        } else {
            out.insertions += 1;
            i -= 1;
        }
    }
    out
}
