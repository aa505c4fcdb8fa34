use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Base frames per stacked frame.
pub const STACK: usize = 3;
pub const BASE_FRAME_MS: f64 = 10.0;
pub const STACKED_FRAME_MS: f64 = BASE_FRAME_MS * STACK as f64;

/// The three cyclic within-stack orderings used for augmentation.
pub const ROTATIONS: [[usize; 3]; 3] = [[0, 1, 2], [1, 2, 0], [2, 0, 1]];

/// Stacked input frames for one utterance with their per-frame energies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSequence {
    pub frames: Tensor,
    pub energies: Vec<f64>,
    pub frame_duration_ms: f64,
}

impl FeatureSequence {
    /// Energy of a stacked frame is the mean of all its values.
    pub fn from_frames(frames: Tensor) -> Result<Self> {
        if frames.rows() == 0 || frames.cols() == 0 {
            return Err(Error::Empty("feature frames"));
        }
        let energies: Vec<f64> = frames.row_iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
        if let Some(row) = energies.iter().position(|e| !e.is_finite()) {
            return Err(Error::NonFinite { row });
        }
        Ok(Self { frames, energies, frame_duration_ms: STACKED_FRAME_MS })
    }

    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.cols()
    }

    /// First `t` frames; used for streaming/causality checks.
    pub fn prefix(&self, t: usize) -> Result<Self> {
        if t == 0 || t > self.len() {
            return Err(Error::InvalidArgument(format!("prefix {t} of {}", self.len())));
        }
        Self::from_frames(self.frames.head_rows(t))
    }
}

/// Concatenates each run of three base frames in `ordering`.
///
/// A base frame count that is not a multiple of three is padded by repeating
/// the final frame.
pub fn stack_frames(base: &Tensor, ordering: [usize; 3]) -> Result<Tensor> {
    let n = base.rows();
    let d = base.cols();
    if base.is_empty() || n == 0 {
        return Err(Error::Empty("base frames"));
    }
    let mut seen = [false; 3];
    for &o in &ordering {
        if o >= STACK || seen[o] {
            return Err(Error::InvalidArgument(format!("{ordering:?} is not a permutation of 0..3")));
        }
        seen[o] = true;
    }
    let t = n.div_ceil(STACK);
    let mut out = Vec::with_capacity(t * STACK * d);
    for i in 0..t {
        for &o in &ordering {
            let src = (i * STACK + o).min(n - 1);
            out.extend_from_slice(base.row(src));
        }
    }
    Tensor::matrix(t, STACK * d, out)
}
