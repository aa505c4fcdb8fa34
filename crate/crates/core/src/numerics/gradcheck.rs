use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// Compares analytic gradients against central finite differences.
///
/// `loss_fn` maps a parameter tensor to `(loss, gradient)`. `probe_count`
/// coordinates are drawn with a seeded RNG; the returned value is the maximum
/// of `|a - n| / max(|a|, |n|, 1e-8)` over the probes.
pub fn gradient_check<F>(mut loss_fn: F, params: &Tensor, probe_count: usize, h: f64, seed: u64) -> Result<f64>
where
    F: FnMut(&Tensor) -> Result<(f64, Vec<f64>)>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step {h} must be positive")));
    }
    if params.is_empty() {
        return Err(Error::Empty("gradient_check params"));
    }
    let (base, analytic) = loss_fn(params)?;
    if !base.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    if analytic.len() != params.len() {
        return Err(Error::Shape("gradient length differs from parameter count".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = params.clone();
    let mut worst = 0.0_f64;
    for _ in 0..probe_count {
        let i = rng.random_range(0..params.len());
        let x = params.values()[i];
        probe.values_mut()[i] = x + h;
        let (up, _) = loss_fn(&probe)?;
        probe.values_mut()[i] = x - h;
        let (down, _) = loss_fn(&probe)?;
        probe.values_mut()[i] = x;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
