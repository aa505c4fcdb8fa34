#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use phonalign::ctc::{ctc_loss, PhonemeSeq, Posteriorgram};
use phonalign::losses::{
    alignment_penalty, ts_frame_loss, ts_window_loss, LossConfig, SilenceMask, WindowMode, WindowSpec,
    DEFAULT_ALIGN_CLAMP,
};
use phonalign::model::{Checkpoint, FeatureSequence, ModelConfig};
use phonalign::numerics::{gradient_check, Tensor};
use phonalign::pipeline::utterance_objective;

pub const H: f64 = 1e-5;
pub const PROBES: usize = 50;
pub const TOL: f64 = 1e-4;

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

fn softmax(z: &Tensor) -> Tensor {
    let mut out = z.clone();
    for r in 0..z.rows() {
        let row = out.row_mut(r);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = row.iter().map(|x| (x - m).exp()).sum();
        row.iter_mut().for_each(|x| *x = (*x - m).exp() / s);
    }
    out
}

fn log_softmax(z: &Tensor) -> Tensor {
    let mut out = softmax(z);
    out.values_mut().iter_mut().for_each(|x| *x = x.ln());
    out
}

/// Chain rule through row-wise softmax for a gradient given w.r.t. probabilities.
fn through_softmax(p: &Tensor, gq: &Tensor) -> Vec<f64> {
    let mut out = Vec::with_capacity(p.len());
    for r in 0..p.rows() {
        let (pr, gr) = (p.row(r), gq.row(r));
        let d: f64 = pr.iter().zip(gr).map(|(a, b)| a * b).sum();
        out.extend(pr.iter().zip(gr).map(|(a, b)| a * (b - d)));
    }
    out
}

/// Chain rule through row-wise log-softmax.
fn through_log_softmax(p: &Tensor, gl: &Tensor) -> Vec<f64> {
    let mut out = Vec::with_capacity(p.len());
    for r in 0..p.rows() {
        let s: f64 = gl.row(r).iter().sum();
        out.extend(gl.row(r).iter().zip(p.row(r)).map(|(g, q)| g - q * s));
    }
    out
}

pub fn ctc_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = random_tensor(&mut rng, 9, 6, 2.0);
    let labels = PhonemeSeq::new(vec![1, 3, 3, 0]);
    gradient_check(
        |z| {
            let (v, g) = ctc_loss(&log_softmax(z), &labels)?;
            Ok((v, through_log_softmax(&softmax(z), &g)))
        },
        &z,
        PROBES,
        H,
        seed,
    )
    .unwrap()
}

pub fn align_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = random_tensor(&mut rng, 10, 5, 2.0);
    let mask = SilenceMask { is_silence: (0..10).map(|t| t < 3 || t > 7).collect() };
    gradient_check(
        |z| {
            let p = softmax(z);
            let (v, g) = alignment_penalty(&Posteriorgram::new(p.clone())?, &mask, DEFAULT_ALIGN_CLAMP)?;
            Ok((v, through_softmax(&p, &g)))
        },
        &z,
        PROBES,
        H,
        seed,
    )
    .unwrap()
}

pub fn ts_frame_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = random_tensor(&mut rng, 8, 5, 3.0);
    let t = random_tensor(&mut rng, 8, 5, 3.0);
    gradient_check(|s| ts_frame_loss(s, &t).map(|(v, g)| (v, g.into_values())), &s, PROBES, H, seed).unwrap()
}

pub fn ts_window_check(seed: u64, mode: WindowMode) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = random_tensor(&mut rng, 12, 5, 3.0);
    let t = random_tensor(&mut rng, 12, 5, 3.0);
    let mut worst = 0.0_f64;
    for n in [-3, 2] {
        let w = WindowSpec::signed(n, mode);
        let e = gradient_check(|s| ts_window_loss(s, &t, &w).map(|(v, g)| (v, g.into_values())), &s, PROBES, H, seed)
            .unwrap();
        worst = worst.max(e);
    }
    worst
}

/// Full model parameters under CTC + alignment + windowed teacher-student terms,
/// for both a unidirectional and a bidirectional stack.
pub fn model_check(seed: u64) -> f64 {
    let mut worst = 0.0_f64;
    for bidirectional in [false, true] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = ModelConfig {
            layers: 2,
            hidden_per_direction: 5,
            projection: 4,
            dropout: 0.2,
            bidirectional,
            input_dim: 6,
            vocab_size: 4,
        };
        let ckpt = Checkpoint::init(cfg, seed).unwrap();
        let frames = random_tensor(&mut rng, 9, 6, 1.5);
        let features = FeatureSequence::from_frames(frames).unwrap();
        let teacher = random_tensor(&mut rng, 9, 5, 2.0);
        let labels = PhonemeSeq::new(vec![0, 2, 1]);
        let loss = LossConfig { use_align: true, ..LossConfig::from_recipe("ts-avg:-2").unwrap() };
        let e = gradient_check(
            |flat| {
                let c = ckpt.with_flat_params(flat)?;
                let (out, grads) =
                    utterance_objective::<ChaCha8Rng>(&c, &features, &labels, Some(&teacher), &loss, None)?;
                Ok((out.total, grads.concat()))
            },
            &ckpt.flat_params(),
            PROBES,
            H,
            seed,
        )
        .unwrap();
        worst = worst.max(e);
    }
    worst
}
