//! Dense-array math, reverse-mode differentiation, and the Adam optimizer.

mod adam;
mod gradcheck;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use gradcheck::gradient_check;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// Numerically stable `log Σ exp(v)`.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    let max = values
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or(Error::Empty("log_sum_exp"))?;
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    if values.len() == 1 {
        return Ok(max);
    }
    Ok(max + values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln())
}

/// Two-term `log(exp(a) + exp(b))`, used in the CTC recursions.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

fn check_rows_finite(logits: &Tensor) -> Result<()> {
    for (row, values) in logits.row_iter().enumerate() {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row });
        }
    }
    Ok(())
}

/// Row-wise softmax via max subtraction.
pub fn softmax_rows(logits: &Tensor) -> Result<Tensor> {
    check_rows_finite(logits)?;
    let mut out = logits.clone();
    let cols = out.cols();
    for row in out.values_mut().chunks_mut(cols.max(1)) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.iter_mut().for_each(|x| *x = (*x - m).exp());
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= s);
    }
    Ok(out)
}

pub fn log_softmax_rows(logits: &Tensor) -> Result<Tensor> {
    check_rows_finite(logits)?;
    let mut out = logits.clone();
    let cols = out.cols();
    for row in out.values_mut().chunks_mut(cols.max(1)) {
        let lse = log_sum_exp(row)?;
        row.iter_mut().for_each(|x| *x -= lse);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_symmetric_row() {
        let t = Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap();
        assert_eq!(softmax_rows(&t).unwrap().values(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_large_logits_do_not_overflow() {
        let t = Tensor::matrix(1, 2, vec![1000.0, 0.0]).unwrap();
        let s = softmax_rows(&t).unwrap();
        assert!((s.get(0, 0) - 1.0).abs() < 1e-15);
        assert!(s.get(0, 1) >= 0.0 && s.get(0, 1) < 1e-300);
    }

    #[test]
    fn softmax_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let vals: Vec<f64> = (0..35).map(|_| rng.random_range(-3.0..3.0)).collect();
        let t = Tensor::matrix(5, 7, vals.clone()).unwrap();
        let s = softmax_rows(&t).unwrap();
        for r in 0..5 {
            let row = &vals[r * 7..(r + 1) * 7];
            let denom: f64 = row.iter().map(|x| x.exp()).sum();
            for c in 0..7 {
                assert!((s.get(r, c) - row[c].exp() / denom).abs() < 1e-12);
            }
            let total: f64 = s.row(r).iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rejects_non_finite_and_names_row() {
        let t = Tensor::matrix(3, 2, vec![0.0, 1.0, 2.0, 3.0, f64::NAN, 0.0]).unwrap();
        match softmax_rows(&t) {
            Err(Error::NonFinite { row }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn softmax_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let vals: Vec<f64> = (0..6).map(|_| rng.random_range(-5.0..5.0)).collect();
            let c: f64 = rng.random_range(-100.0..100.0);
            let a = softmax_rows(&Tensor::matrix(1, 6, vals.clone()).unwrap()).unwrap();
            let b = softmax_rows(&Tensor::matrix(1, 6, vals.iter().map(|v| v + c).collect()).unwrap())
                .unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn log_sum_exp_cases() {
        assert_eq!(log_sum_exp(&[3.25]).unwrap(), 3.25);
        assert!((log_sum_exp(&[0.0, 0.0]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(log_sum_exp(&[-1e9, 0.0]).unwrap().abs() < 1e-12);
        assert!(log_sum_exp(&[1e300, 1e300]).unwrap().is_finite());
        assert!(log_sum_exp(&[]).is_err());
    }

    #[test]
    fn log_add_matches_log_sum_exp() {
        for (a, b) in [(0.0, 0.0), (-3.0, 2.0), (f64::NEG_INFINITY, -1.0), (700.0, 699.0)] {
            assert!((log_add(a, b) - log_sum_exp(&[a, b]).unwrap()).abs() < 1e-12);
        }
    }
}
