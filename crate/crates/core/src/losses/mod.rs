//! Training objectives: CTC, the energy-based alignment penalty, frame-level
//! and windowed teacher-student logit matching, and their composition.

mod align;
mod ts;

pub use align::{alignment_penalty, silence_mask, SilenceMask, DEFAULT_ALIGN_CLAMP};
pub use ts::{ts_frame_loss, ts_window_loss, WindowMode, WindowSpec};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ctc::{ctc_loss, PhonemeSeq, Posteriorgram};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// What the student's logits are matched against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TsTarget {
    Frame,
    Window(WindowSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsConfig {
    pub teacher_checkpoint: Option<String>,
    pub target: TsTarget,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub ctc: f64,
    pub align: f64,
    pub ts: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { ctc: 1.0, align: 1.0, ts: 1.0 }
    }
}

/// Which terms make up the objective.
///
/// The combined teacher recipe `ts+align` is one CTC term plus the alignment
/// penalty plus the frame-level teacher-student term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub use_ctc: bool,
    pub use_align: bool,
    pub align_clamp: f64,
    pub ts: Option<TsConfig>,
    pub weights: LossWeights,
}

impl LossConfig {
    pub fn ctc() -> Self {
        Self { use_ctc: true, use_align: false, align_clamp: DEFAULT_ALIGN_CLAMP, ts: None, weights: LossWeights::default() }
    }

    pub fn from_recipe(recipe: &str) -> Result<Self> {
        let ts = |target| Some(TsConfig { teacher_checkpoint: None, target });
        let base = Self::ctc();
        let cfg = match recipe {
            "ctc" => base,
            "align" => Self { use_align: true, ..base },
            "ts" => Self { ts: ts(TsTarget::Frame), ..base },
            "ts+align" => Self { use_align: true, ts: ts(TsTarget::Frame), ..base },
            other if other.starts_with("ts-") => Self { ts: ts(TsTarget::Window(other.parse()?)), ..base },
            other => return Err(Error::Recipe(other.to_string())),
        };
        Ok(cfg)
    }

    pub fn recipe_name(&self) -> String {
        let mut parts = Vec::new();
        match &self.ts {
            Some(TsConfig { target: TsTarget::Frame, .. }) => parts.push("ts".to_string()),
            Some(TsConfig { target: TsTarget::Window(w), .. }) => parts.push(w.to_string()),
            None => {}
        }
        if self.use_align {
            parts.push("align".into());
        }
        if parts.is_empty() && self.use_ctc {
            parts.push("ctc".into());
        }
        let mut name = parts.join("+");
        if !self.use_ctc {
            name.push_str("-noctc");
        }
        name
    }

    pub fn needs_teacher(&self) -> bool {
        self.ts.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.use_ctc && !self.use_align && self.ts.is_none() {
            return Err(Error::Config("loss has no enabled terms".into()));
        }
        if !(self.align_clamp > 0.0 && self.align_clamp < 1.0) {
            return Err(Error::Config(format!("align_clamp {} outside (0, 1)", self.align_clamp)));
        }
        if let Some(TsConfig { target: TsTarget::Window(w), .. }) = &self.ts {
            WindowSpec::new(w.lo, w.hi, w.mode)?;
        }
        Ok(())
    }
}

impl fmt::Display for LossConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.recipe_name())
    }
}

impl FromStr for LossConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_recipe(s)
    }
}

/// Inputs for one utterance. `log_probs`, `posteriors` and `logits` are views
/// of the same model output.
#[derive(Debug, Clone, Copy)]
pub struct LossContext<'a> {
    pub log_probs: &'a Tensor,
    pub posteriors: &'a Posteriorgram,
    pub logits: &'a Tensor,
    pub silence: &'a SilenceMask,
    pub labels: &'a PhonemeSeq,
    pub teacher_logits: Option<&'a Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub total: f64,
    pub ctc: Option<f64>,
    pub align: Option<f64>,
    pub ts: Option<f64>,
    pub grad_log_probs: Option<Tensor>,
    pub grad_posteriors: Option<Tensor>,
    pub grad_logits: Option<Tensor>,
}

fn scaled(mut t: Tensor, w: f64) -> Tensor {
    if w != 1.0 {
        t.values_mut().iter_mut().for_each(|x| *x *= w);
    }
    t
}

/// Weighted sum of the enabled terms, with gradients routed to the view each
/// term reads (log-probabilities, probabilities, or logits).
pub fn compose_loss(config: &LossConfig, ctx: &LossContext<'_>) -> Result<LossOutput> {
    config.validate()?;
    let w = config.weights;
    let mut out = LossOutput {
        total: 0.0,
        ctc: None,
        align: None,
        ts: None,
        grad_log_probs: None,
        grad_posteriors: None,
        grad_logits: None,
    };
    if config.use_ctc {
        let (v, g) = ctc_loss(ctx.log_probs, ctx.labels)?;
        out.total += w.ctc * v;
        out.ctc = Some(v);
        out.grad_log_probs = Some(scaled(g, w.ctc));
    }
    if config.use_align {
        let (v, g) = alignment_penalty(ctx.posteriors, ctx.silence, config.align_clamp)?;
        out.total += w.align * v;
        out.align = Some(v);
        out.grad_posteriors = Some(scaled(g, w.align));
    }
    if let Some(ts) = &config.ts {
        let teacher = ctx.teacher_logits.ok_or(Error::MissingTeacher)?;
        let (v, g) = match &ts.target {
            TsTarget::Frame => ts_frame_loss(ctx.logits, teacher)?,
            TsTarget::Window(win) => ts_window_loss(ctx.logits, teacher, win)?,
        };
        out.total += w.ts * v;
        out.ts = Some(v);
        out.grad_logits = Some(scaled(g, w.ts));
    }
    Ok(out)
}
