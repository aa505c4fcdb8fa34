//! Uni- and bi-directional GRU stacks with projections, dropout, and frame stacking.

mod checkpoint;
mod config;
mod gru;
mod stack;

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use config::ModelConfig;
pub use gru::{gru_layer_forward, Direction, GruWeights};
pub use stack::{stack_frames, FeatureSequence, BASE_FRAME_MS, ROTATIONS, STACK, STACKED_FRAME_MS};

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Gradients, Tape, Tensor, Var};
use gru::{gru_on_tape, GruVars};

/// Handles into a tape holding one model forward pass.
#[derive(Debug)]
pub struct ModelGraph {
    pub logits: Var,
    /// Parameter leaves in checkpoint weight-name order.
    pub params: Vec<Var>,
}

impl ModelGraph {
    /// Per-weight gradients in checkpoint name order (zeros for unused weights).
    pub fn param_grads(&self, grads: &mut Gradients, ckpt: &Checkpoint) -> Vec<Vec<f64>> {
        self.params
            .iter()
            .zip(ckpt.weights.values())
            .map(|(&v, t)| grads.take(v).unwrap_or_else(|| vec![0.0; t.len()]))
            .collect()
    }
}

fn dropout<R: Rng + ?Sized>(tape: &mut Tape<'_>, x: Var, rate: f64, rng: Option<&mut R>) -> Result<Var> {
    let Some(rng) = rng else { return Ok(x) };
    if rate == 0.0 {
        return Ok(x);
    }
    let (r, c) = tape.shape(x);
    let keep = 1.0 - rate;
    let mask = (0..r * c).map(|_| if rng.random::<f64>() < rate { 0.0 } else { 1.0 / keep }).collect();
    let m = tape.constant(r, c, mask)?;
    tape.mul(x, m)
}

/// Records the forward pass on `tape`. Dropout is active iff `rng` is given.
pub fn forward_on_tape<'p, R: Rng + ?Sized>(
    tape: &mut Tape<'p>,
    ckpt: &'p Checkpoint,
    frames: &Tensor,
    mut rng: Option<&mut R>,
) -> Result<ModelGraph> {
    let cfg = &ckpt.config;
    if frames.cols() != cfg.input_dim {
        return Err(Error::Shape(format!("feature dim {} but model expects {}", frames.cols(), cfg.input_dim)));
    }
    if frames.rows() == 0 {
        return Err(Error::Empty("features"));
    }
    let mut params = Vec::with_capacity(ckpt.weights.len());
    let mut by_name = std::collections::HashMap::new();
    for (name, t) in &ckpt.weights {
        let v = tape.param(t.rows(), t.cols(), t.values())?;
        params.push(v);
        by_name.insert(name.as_str(), v);
    }
    let get = |n: &str| by_name.get(n).copied().ok_or_else(|| Error::Shape(format!("missing weight {n}")));

    let mut x = tape.constant(frames.rows(), frames.cols(), frames.values().to_vec())?;
    for l in 0..cfg.layers {
        let mut dirs = Vec::with_capacity(cfg.directions());
        for d in 0..cfg.directions() {
            let tag = checkpoint::dir_tag(d);
            let vars = GruVars {
                w_ih: get(&format!("layer{l}.{tag}.w_ih"))?,
                w_hh: get(&format!("layer{l}.{tag}.w_hh"))?,
                b_ih: get(&format!("layer{l}.{tag}.b_ih"))?,
                b_hh: get(&format!("layer{l}.{tag}.b_hh"))?,
                hidden: cfg.hidden_per_direction,
            };
            let dir = if d == 0 { Direction::Forward } else { Direction::Backward };
            dirs.push(gru_on_tape(tape, vars, x, dir)?);
        }
        let h = if dirs.len() == 1 { dirs[0] } else { tape.concat_cols(&dirs)? };
        let h = dropout(tape, h, cfg.dropout, rng.as_deref_mut())?;
        let p = tape.matmul(h, get(&format!("layer{l}.proj.w"))?)?;
        let p = tape.add_row(p, get(&format!("layer{l}.proj.b"))?)?;
        x = dropout(tape, p, cfg.dropout, rng.as_deref_mut())?;
    }
    let logits = tape.matmul(x, get("out.w")?)?;
    let logits = tape.add_row(logits, get("out.b")?)?;
    Ok(ModelGraph { logits, params })
}

/// Logits (T × (V+1)) for one utterance. `train_mode` enables dropout drawn from `rng`.
pub fn model_forward<R: Rng + ?Sized>(
    ckpt: &Checkpoint,
    features: &FeatureSequence,
    train_mode: bool,
    rng: &mut R,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let graph = forward_on_tape(&mut tape, ckpt, &features.frames, if train_mode { Some(rng) } else { None })?;
    let (r, c) = tape.shape(graph.logits);
    Tensor::matrix(r, c, tape.value(graph.logits).to_vec())
}

/// Deterministic inference-mode logits.
pub fn infer(ckpt: &Checkpoint, frames: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let graph = forward_on_tape::<rand_chacha::ChaCha8Rng>(&mut tape, ckpt, frames, None)?;
    let (r, c) = tape.shape(graph.logits);
    Tensor::matrix(r, c, tape.value(graph.logits).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(bidirectional: bool) -> Checkpoint {
        let cfg = ModelConfig {
            layers: 2,
            hidden_per_direction: 5,
            projection: 4,
            dropout: 0.2,
            bidirectional,
            input_dim: 6,
            vocab_size: 3,
        };
        Checkpoint::init(cfg, 3).unwrap()
    }

    fn features(t: usize, seed: u64) -> FeatureSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..t * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
        FeatureSequence::from_frames(Tensor::matrix(t, 6, v).unwrap()).unwrap()
    }

    #[test]
    fn output_has_blank_column() {
        let ck = tiny(true);
        let out = infer(&ck, &features(4, 1).frames).unwrap();
        assert_eq!(out.shape(), &[4, 4]);
        assert_eq!(ck.config.blank(), 3);
    }

    #[test]
    fn inference_is_deterministic() {
        let ck = tiny(true);
        let f = features(7, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = model_forward(&ck, &f, false, &mut rng).unwrap();
        let b = model_forward(&ck, &f, false, &mut rng).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unidirectional_is_causal() {
        let ck = tiny(false);
        let f = features(9, 4);
        let full = infer(&ck, &f.frames).unwrap();
        for t in 1..=9 {
            let part = infer(&ck, &f.prefix(t).unwrap().frames).unwrap();
            assert_eq!(part.values(), &full.values()[..part.len()]);
        }
    }

    #[test]
    fn bidirectional_sees_the_future() {
        let ck = tiny(true);
        let f = features(6, 5);
        let mut g = f.frames.clone();
        g.row_mut(5).iter_mut().for_each(|x| *x += 1.0);
        let a = infer(&ck, &f.frames).unwrap();
        let b = infer(&ck, &g).unwrap();
        assert_ne!(a.row(2), b.row(2));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let ck = tiny(false);
        let bad = Tensor::matrix(3, 5, vec![0.0; 15]).unwrap();
        assert!(infer(&ck, &bad).is_err());
    }

    #[test]
    fn dropout_zeroes_about_the_rate() {
        let mut tape = Tape::new();
        let n = 200 * 100;
        let x = tape.constant(200, 100, vec![1.0; n]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y = dropout(&mut tape, x, 0.2, Some(&mut rng)).unwrap();
        let vals = tape.value(y);
        let zeros = vals.iter().filter(|&&v| v == 0.0).count() as f64;
        // 5 binomial standard deviations
        let sd = (n as f64 * 0.2 * 0.8).sqrt();
        assert!((zeros - 0.2 * n as f64).abs() < 5.0 * sd, "{zeros} zeros");
        assert!(vals.iter().all(|&v| v == 0.0 || (v - 1.25).abs() < 1e-12));
        let z = dropout::<ChaCha8Rng>(&mut tape, x, 0.2, None).unwrap();
        assert_eq!(z, x);
    }

    #[test]
    fn checkpoint_round_trip_keeps_outputs_bit_exact() {
        let ck = tiny(true);
        let dir = std::env::temp_dir().join(format!("phonalign-ck-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("tiny.ckpt");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        std::fs::remove_dir_all(&dir).unwrap();
        let f = features(5, 9);
        let a = infer(&ck, &f.frames).unwrap();
        let b = infer(&back, &f.frames).unwrap();
        let bits = |t: &Tensor| t.values().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }
}
