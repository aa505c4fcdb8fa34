use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{LrCompare, TrainConfig};
use super::eval::dev_per;
use crate::binio;
use crate::ctc::{PhonemeSeq, Posteriorgram};
use crate::data::{Corpus, Utterance};
use crate::error::{Error, Result};
use crate::losses::{compose_loss, silence_mask, LossConfig, LossContext, LossOutput};
use crate::model::{forward_on_tape, infer, Checkpoint, FeatureSequence};
use crate::numerics::{adam_step, log_softmax_rows, AdamState, Tape, Tensor};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean objective over the utterances that contributed gradients.
    pub train_loss: f64,
    pub dev_per: Option<f64>,
    /// Learning rate used during this epoch.
    pub lr: f64,
    /// Items skipped because CTC was infeasible for their length.
    pub skipped: usize,
    /// Not serialized and ignored by equality, so logs stay reproducible.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl PartialEq for EpochRecord {
    fn eq(&self, other: &Self) -> bool {
        self.epoch == other.epoch
            && self.train_loss.to_bits() == other.train_loss.to_bits()
            && self.dev_per.map(f64::to_bits) == other.dev_per.map(f64::to_bits)
            && self.lr.to_bits() == other.lr.to_bits()
            && self.skipped == other.skipped
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub config: TrainConfig,
    pub recipe: String,
    pub train_utterances: usize,
    pub epochs: Vec<EpochRecord>,
    pub final_checkpoint: Option<PathBuf>,
}

impl RunLog {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn lr_trace(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.lr).collect()
    }
}

/// Halves the learning rate after an epoch `e >= start` whose dev PER rose.
#[derive(Debug, Clone)]
pub struct LrSchedule {
    lr: f64,
    start: usize,
    compare: LrCompare,
    previous: Option<f64>,
    best: Option<f64>,
}

impl LrSchedule {
    pub fn new(lr: f64, start: usize, compare: LrCompare) -> Self {
        Self { lr, start, compare, previous: None, best: None }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Records the dev PER of `epoch` and returns true if the rate was halved.
    pub fn observe(&mut self, epoch: usize, dev_per: f64) -> bool {
        let baseline = match self.compare {
            LrCompare::Previous => self.previous,
            LrCompare::Best => self.best,
        };
        let halve = epoch >= self.start && baseline.is_some_and(|b| dev_per > b);
        if halve {
            self.lr *= 0.5;
        }
        self.previous = Some(dev_per);
        self.best = Some(self.best.map_or(dev_per, |b| b.min(dev_per)));
        halve
    }
}

/// Where teacher logits come from during distillation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum TeacherCache {
    /// Computed once before the first epoch and kept in memory.
    #[default]
    Memory,
    /// Written once per (utterance, ordering) under this directory and read back.
    Disk(PathBuf),
    /// Recomputed for every use.
    Recompute,
}

struct TeacherSource<'a> {
    ckpt: &'a Checkpoint,
    cache: TeacherCache,
    memory: HashMap<(usize, usize), Tensor>,
}

fn cache_file(dir: &Path, utt: &Utterance, rotation: usize) -> PathBuf {
    dir.join(format!("{}.r{rotation}.bin", utt.id))
}

impl<'a> TeacherSource<'a> {
    fn prepare(ckpt: &'a Checkpoint, cache: TeacherCache, train: &[&Utterance], items: &[(usize, usize)]) -> Result<Self> {
        let mut memory = HashMap::new();
        match &cache {
            TeacherCache::Memory => {
                let logits: Vec<Tensor> = items
                    .par_iter()
                    .map(|&(u, r)| infer(ckpt, &train[u].features_for(r)?.frames))
                    .collect::<Result<_>>()?;
                memory = items.iter().copied().zip(logits).collect();
            }
            TeacherCache::Disk(dir) => {
                std::fs::create_dir_all(dir)?;
                for &(u, r) in items {
                    let path = cache_file(dir, &train[u], r);
                    if !path.exists() {
                        let logits = infer(ckpt, &train[u].features_for(r)?.frames)?;
                        binio::write(&path, &json!({ "id": train[u].id, "rotation": r }), &[("logits", &logits)])?;
                    }
                }
            }
            TeacherCache::Recompute => {}
        }
        Ok(Self { ckpt, cache, memory })
    }

    fn logits(&self, utt: &Utterance, index: usize, rotation: usize, features: &FeatureSequence) -> Result<Tensor> {
        match &self.cache {
            TeacherCache::Memory => Ok(self.memory[&(index, rotation)].clone()),
            TeacherCache::Disk(dir) => {
                let path = cache_file(dir, utt, rotation);
                let (_, arrays) = binio::read(&path)?;
                arrays
                    .into_iter()
                    .find(|(n, _)| n == "logits")
                    .map(|(_, t)| t)
                    .ok_or_else(|| Error::Corrupt { path, reason: "no logits array".into() })
            }
            TeacherCache::Recompute => infer(self.ckpt, &features.frames),
        }
    }
}

/// Gradient with respect to the logits from the per-view gradients of a loss.
pub fn logit_gradient(out: &LossOutput, post: &Posteriorgram) -> Result<Tensor> {
    let p = &post.probs;
    let mut g = Tensor::zeros(&[p.rows(), p.cols()]);
    for t in 0..p.rows() {
        let pr = p.row(t);
        let gr = g.row_mut(t);
        if let Some(gl) = &out.grad_log_probs {
            let row = gl.row(t);
            let s: f64 = row.iter().sum();
            for j in 0..pr.len() {
                gr[j] += row[j] - pr[j] * s;
            }
        }
        if let Some(gq) = &out.grad_posteriors {
            let row = gq.row(t);
            let d: f64 = pr.iter().zip(row).map(|(a, b)| a * b).sum();
            for j in 0..pr.len() {
                gr[j] += pr[j] * (row[j] - d);
            }
        }
        if let Some(gz) = &out.grad_logits {
            for (a, b) in gr.iter_mut().zip(gz.row(t)) {
                *a += b;
            }
        }
    }
    Ok(g)
}

/// Loss and per-weight gradients (checkpoint name order) for one utterance.
/// Dropout is active iff `rng` is given.
pub fn utterance_objective<R: Rng + ?Sized>(
    ckpt: &Checkpoint,
    features: &FeatureSequence,
    labels: &PhonemeSeq,
    teacher_logits: Option<&Tensor>,
    loss: &LossConfig,
    rng: Option<&mut R>,
) -> Result<(LossOutput, Vec<Vec<f64>>)> {
    let mut tape = Tape::new();
    let graph = forward_on_tape(&mut tape, ckpt, &features.frames, rng)?;
    let (rows, cols) = tape.shape(graph.logits);
    let logits = Tensor::matrix(rows, cols, tape.value(graph.logits).to_vec())?;
    if let Some(t) = teacher_logits {
        if t.shape() != logits.shape() {
            return Err(Error::Shape(format!("teacher logits {:?} vs student {:?}", t.shape(), logits.shape())));
        }
    }
    let log_probs = log_softmax_rows(&logits)?;
    let probs = Tensor::matrix(rows, cols, log_probs.values().iter().map(|x| x.exp()).collect())?;
    let post = Posteriorgram::new(probs)?;
    let silence = silence_mask(features);
    let ctx = LossContext {
        log_probs: &log_probs,
        posteriors: &post,
        logits: &logits,
        silence: &silence,
        labels,
        teacher_logits,
    };
    let out = compose_loss(loss, &ctx)?;
    if !out.total.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    let g = logit_gradient(&out, &post)?;
    let root = tape.external(out.total, vec![(graph.logits, g.into_values())])?;
    let mut grads = tape.backward(root)?;
    let param_grads = graph.param_grads(&mut grads, ckpt);
    Ok((out, param_grads))
}

fn derived_rng(seed: u64, tag: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream((a << 32) ^ b);
    rng
}

const SHUFFLE_TAG: u64 = 1;
const DROPOUT_TAG: u64 = 2;

/// Trains a freshly initialized model. `teacher` is required iff the loss has a
/// teacher-student term.
pub fn train(
    config: &TrainConfig,
    corpus: &Corpus,
    teacher: Option<&Checkpoint>,
    cache: TeacherCache,
) -> Result<(Checkpoint, RunLog)> {
    config.validate()?;
    let init = Checkpoint::init(config.model.clone(), config.seed)?;
    train_from(init, config, corpus, teacher, cache)
}

/// Trains a student against a teacher; the loss must contain a teacher-student term.
pub fn distill(
    teacher: &Checkpoint,
    config: &TrainConfig,
    corpus: &Corpus,
    cache: TeacherCache,
) -> Result<(Checkpoint, RunLog)> {
    if teacher.config.vocab_size != config.model.vocab_size {
        return Err(Error::VocabularyMismatch { teacher: teacher.config.vocab_size, student: config.model.vocab_size });
    }
    if !config.loss.to_loss_config()?.needs_teacher() {
        return Err(Error::Config(format!("recipe {:?} has no teacher-student term", config.loss.recipe)));
    }
    train(config, corpus, Some(teacher), cache)
}

/// Trains starting from `init` instead of a fresh initialization.
pub fn train_from(
    init: Checkpoint,
    config: &TrainConfig,
    corpus: &Corpus,
    teacher: Option<&Checkpoint>,
    cache: TeacherCache,
) -> Result<(Checkpoint, RunLog)> {
    config.validate()?;
    if init.config != config.model {
        return Err(Error::Config("initial checkpoint does not match the model config".into()));
    }
    let loss = config.loss.to_loss_config()?;
    if corpus.config.input_dim() != config.model.input_dim {
        return Err(Error::Shape(format!(
            "corpus input dim {} but model expects {}",
            corpus.config.input_dim(),
            config.model.input_dim
        )));
    }
    let teacher = match (loss.needs_teacher(), teacher) {
        (true, None) => return Err(Error::MissingTeacher),
        (true, Some(t)) => {
            if t.config.vocab_size != config.model.vocab_size {
                return Err(Error::VocabularyMismatch { teacher: t.config.vocab_size, student: config.model.vocab_size });
            }
            if t.config.input_dim != config.model.input_dim {
                return Err(Error::Shape("teacher and student input dims differ".into()));
            }
            Some(t)
        }
        (false, _) => None,
    };

    let train_owned: Vec<&Utterance> = corpus.train.iter().filter(|u| u.quality_label.is_correct()).collect();
    let rotations: &[usize] = if config.augmentation { &[0, 1, 2] } else { &[0] };
    let items: Vec<(usize, usize)> =
        (0..train_owned.len()).flat_map(|u| rotations.iter().map(move |&r| (u, r))).collect();

    let mut ckpt = init;
    ckpt.metadata.recipe = loss.recipe_name();
    ckpt.metadata.seed = config.seed;
    let mut log = RunLog {
        config: config.clone(),
        recipe: loss.recipe_name(),
        train_utterances: train_owned.len(),
        epochs: Vec::new(),
        final_checkpoint: None,
    };
    if config.epochs == 0 || items.is_empty() {
        return Ok((ckpt, log));
    }

    let source = teacher.map(|t| TeacherSource::prepare(t, cache, &train_owned, &items)).transpose()?;
    let mut adam: Vec<AdamState> = ckpt.weights.values().map(|w| AdamState::new(w.len(), config.lr)).collect();
    let mut schedule = LrSchedule::new(config.lr, config.lr_halving_start_epoch, config.lr_compare);

    for epoch in 1..=config.epochs {
        let clock = Instant::now();
        let lr = schedule.lr();
        adam.iter_mut().for_each(|s| s.lr = lr);
        let mut order = items.clone();
        order.shuffle(&mut derived_rng(config.seed, SHUFFLE_TAG, epoch as u64, 0));

        let mut loss_sum = 0.0;
        let mut used = 0usize;
        let mut skipped = 0usize;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let snapshot = &ckpt;
            let results: Vec<Result<Option<(f64, Vec<Vec<f64>>)>>> = batch
                .par_iter()
                .enumerate()
                .map(|(k, &(u, r))| {
                    let utt = train_owned[u];
                    let features = utt.features_for(r)?;
                    let teacher_logits = source.as_ref().map(|s| s.logits(utt, u, r, &features)).transpose()?;
                    let position = (b * config.batch_size + k) as u64;
                    let mut rng = derived_rng(config.seed, DROPOUT_TAG, epoch as u64, position);
                    match utterance_objective(
                        snapshot,
                        &features,
                        &utt.spoken,
                        teacher_logits.as_ref(),
                        &loss,
                        Some(&mut rng),
                    ) {
                        Ok((out, grads)) => Ok(Some((out.total, grads))),
                        Err(Error::CtcInfeasible { .. }) => Ok(None),
                        Err(e) => Err(e),
                    }
                })
                .collect();

            let mut acc: Option<Vec<Vec<f64>>> = None;
            let mut n = 0usize;
            for res in results {
                let Some((value, grads)) = res? else {
                    skipped += 1;
                    continue;
                };
                loss_sum += value;
                n += 1;
                match acc.as_mut() {
                    None => acc = Some(grads),
                    Some(a) => {
                        for (dst, src) in a.iter_mut().zip(&grads) {
                            dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
                        }
                    }
                }
            }
            let Some(acc) = acc else { continue };
            used += n;
            let scale = 1.0 / n as f64;
            for ((w, state), mut g) in ckpt.weights.values_mut().zip(adam.iter_mut()).zip(acc) {
                g.iter_mut().for_each(|x| *x *= scale);
                w.set_grad(g)?;
                adam_step(w, state)?;
            }
        }

        let per = if corpus.dev.is_empty() { None } else { Some(dev_per(&ckpt, &corpus.dev)?) };
        if let Some(p) = per {
            schedule.observe(epoch, p);
        }
        ckpt.metadata.epoch = epoch;
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: if used > 0 { loss_sum / used as f64 } else { f64::NAN },
            dev_per: per,
            lr,
            skipped,
            wall_time_s: clock.elapsed().as_secs_f64(),
        });
    }
    ckpt.weights.values_mut().for_each(Tensor::clear_grad);
    Ok((ckpt, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halving_rule_trace() {
        let mut s = LrSchedule::new(1.0, 2, LrCompare::Previous);
        let halved: Vec<bool> = [20.0, 19.0, 21.0].iter().enumerate().map(|(i, &p)| s.observe(i + 1, p)).collect();
        assert_eq!(halved, vec![false, false, true]);
        assert_eq!(s.lr(), 0.5);
    }

    #[test]
    fn no_halving_before_start_epoch() {
        let mut s = LrSchedule::new(1.0, 8, LrCompare::Previous);
        for (i, p) in [10.0, 11.0, 12.0, 13.0].iter().enumerate() {
            assert!(!s.observe(i + 1, *p));
        }
        assert_eq!(s.lr(), 1.0);
    }

    #[test]
    fn best_mode_compares_against_best_so_far() {
        let mut prev = LrSchedule::new(1.0, 1, LrCompare::Previous);
        let mut best = LrSchedule::new(1.0, 1, LrCompare::Best);
        for (i, p) in [10.0, 15.0, 14.0].iter().enumerate() {
            prev.observe(i + 1, *p);
            best.observe(i + 1, *p);
        }
        assert_eq!(prev.lr(), 0.5);
        assert_eq!(best.lr(), 0.25);
    }
}
