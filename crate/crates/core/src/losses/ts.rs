use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowMode {
    Best,
    Avg,
}

/// Teacher frames `i+lo ..= i+hi` are candidate targets for student frame `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub lo: i64,
    pub hi: i64,
    pub mode: WindowMode,
}

impl WindowSpec {
    pub fn new(lo: i64, hi: i64, mode: WindowMode) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidArgument(format!("window lo {lo} > hi {hi}")));
        }
        Ok(Self { lo, hi, mode })
    }

    /// `-N` reaches N frames into the past, `+N` N frames into the future.
    pub fn signed(n: i64, mode: WindowMode) -> Self {
        if n < 0 {
            Self { lo: n, hi: 0, mode }
        } else {
            Self { lo: 0, hi: n, mode }
        }
    }

    pub fn center(&self) -> f64 {
        (self.lo + self.hi) as f64 / 2.0
    }

    /// Clipped teacher frame range for student frame `i` of `t_len`.
    fn range(&self, i: usize, t_len: usize) -> Option<(usize, usize)> {
        let a = (i as i64 + self.lo).max(0);
        let b = (i as i64 + self.hi).min(t_len as i64 - 1);
        (a <= b).then_some((a as usize, b as usize))
    }
}

impl fmt::Display for WindowSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.mode {
            WindowMode::Best => "best",
            WindowMode::Avg => "avg",
        };
        match (self.lo, self.hi) {
            (0, 0) => write!(f, "ts-{mode}:0"),
            (lo, 0) if lo < 0 => write!(f, "ts-{mode}:{lo}"),
            (0, hi) => write!(f, "ts-{mode}:+{hi}"),
            (lo, hi) => write!(f, "ts-{mode}:[{lo},{hi}]"),
        }
    }
}

impl FromStr for WindowSpec {
    type Err = Error;

    /// Parses `ts-best:-6`, `ts-avg:+3`, `ts-avg:0`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Recipe(s.to_string());
        let rest = s.strip_prefix("ts-").ok_or_else(bad)?;
        let (mode, n) = rest.split_once(':').ok_or_else(bad)?;
        let mode = match mode {
            "best" => WindowMode::Best,
            "avg" => WindowMode::Avg,
            _ => return Err(bad()),
        };
        let n: i64 = n.trim_start_matches('+').parse().map_err(|_| bad())?;
        Ok(Self::signed(n, mode))
    }
}

fn check_pair(student: &Tensor, teacher: &Tensor) -> Result<()> {
    if student.shape() != teacher.shape() {
        return Err(Error::Shape(format!(
            "student logits {:?} vs teacher logits {:?}",
            student.shape(),
            teacher.shape()
        )));
    }
    if student.rows() == 0 {
        return Err(Error::Empty("logits"));
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Frame-level logit MSE: squared error summed over outputs, averaged over frames.
/// The teacher is a constant; the gradient is with respect to the student.
pub fn ts_frame_loss(student: &Tensor, teacher: &Tensor) -> Result<(f64, Tensor)> {
    check_pair(student, teacher)?;
    let t_len = student.rows();
    let inv_t = 1.0 / t_len as f64;
    let mut total = 0.0;
    let mut grad = Tensor::zeros(student.shape());
    for t in 0..t_len {
        let (s, tr) = (student.row(t), teacher.row(t));
        total += sq_dist(s, tr);
        for ((g, a), b) in grad.row_mut(t).iter_mut().zip(s).zip(tr) {
            *g = 2.0 * (a - b) * inv_t;
        }
    }
    Ok((total * inv_t, grad))
}

/// Windowed logit MSE: each student frame is compared against a window of
/// teacher frames, scoring either the closest one or the mean over the window.
pub fn ts_window_loss(student: &Tensor, teacher: &Tensor, window: &WindowSpec) -> Result<(f64, Tensor)> {
    if window.lo > window.hi {
        return Err(Error::InvalidArgument(format!("window lo {} > hi {}", window.lo, window.hi)));
    }
    check_pair(student, teacher)?;
    let t_len = student.rows();
    let inv_t = 1.0 / t_len as f64;
    let mut total = 0.0;
    let mut grad = Tensor::zeros(student.shape());
    for i in 0..t_len {
        let Some((a, b)) = window.range(i, t_len) else { continue };
        let s = student.row(i);
        match window.mode {
            WindowMode::Best => {
                let mut best = a;
                let mut best_d = sq_dist(s, teacher.row(a));
                for j in a + 1..=b {
                    let d = sq_dist(s, teacher.row(j));
                    if d < best_d {
                        best = j;
                        best_d = d;
                    }
                }
                total += best_d;
                for ((g, x), y) in grad.row_mut(i).iter_mut().zip(s).zip(teacher.row(best)) {
                    *g = 2.0 * (x - y) * inv_t;
                }
            }
            WindowMode::Avg => {
                let n = (b - a + 1) as f64;
                let mut sum = 0.0;
                let grow = grad.row_mut(i);
                for j in a..=b {
                    let tr = teacher.row(j);
                    sum += sq_dist(s, tr);
                    for ((g, x), y) in grow.iter_mut().zip(s).zip(tr) {
                        *g += 2.0 * (x - y) * inv_t / n;
                    }
                }
                total += sum / n;
            }
        }
    }
    Ok((total * inv_t, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_loss_arithmetic() {
        let s = Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap();
        let t = Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap();
        assert_eq!(ts_frame_loss(&s, &t).unwrap().0, 5.0);
        assert_eq!(ts_frame_loss(&t, &t).unwrap().0, 0.0);
    }

    #[test]
    fn best_window_arithmetic() {
        let teacher = Tensor::matrix(2, 1, vec![0.0, 10.0]).unwrap();
        let student = Tensor::matrix(2, 1, vec![10.0, 1.0]).unwrap();
        let w = WindowSpec::signed(-1, WindowMode::Best);
        // frame 0: only teacher 0 -> 100; frame 1: min(1, 81) = 1
        let (v, _) = ts_window_loss(&student, &teacher, &w).unwrap();
        assert_eq!(v, (100.0 + 1.0) / 2.0);
    }

    #[test]
    fn window_outside_sequence_contributes_zero() {
        let teacher = Tensor::matrix(2, 1, vec![0.0, 10.0]).unwrap();
        let student = Tensor::matrix(2, 1, vec![3.0, 1.0]).unwrap();
        let w = WindowSpec::new(5, 6, WindowMode::Avg).unwrap();
        assert_eq!(ts_window_loss(&student, &teacher, &w).unwrap().0, 0.0);
    }

    #[test]
    fn parse_and_display() {
        let w: WindowSpec = "ts-avg:-6".parse().unwrap();
        assert_eq!((w.lo, w.hi, w.mode), (-6, 0, WindowMode::Avg));
        let w: WindowSpec = "ts-best:+3".parse().unwrap();
        assert_eq!((w.lo, w.hi, w.mode), (0, 3, WindowMode::Best));
        assert_eq!(w.to_string(), "ts-best:+3");
        assert_eq!("ts-avg:-3".parse::<WindowSpec>().unwrap().to_string(), "ts-avg:-3");
        assert!("ts-mid:3".parse::<WindowSpec>().is_err());
        assert!(WindowSpec::new(2, 1, WindowMode::Avg).is_err());
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let a = Tensor::matrix(2, 3, vec![0.0; 6]).unwrap();
        let b = Tensor::matrix(3, 3, vec![0.0; 9]).unwrap();
        assert!(ts_frame_loss(&a, &b).is_err());
        assert!(ts_window_loss(&a, &b, &WindowSpec::signed(0, WindowMode::Avg)).is_err());
    }
}
