//! Rollouts, prediction-error metrics, LQR tracking and timing benchmarks.

mod bench;
mod lqr;

pub use bench::{
    bench_clip, bench_clip_with_probe, log_log_slope, BenchRecord, BenchReport, MemoryProbe,
};
pub use lqr::{figure_eight, lqr_gain, track_reference, RICCATI_ITERS, RICCATI_TOL};

use crate::error::{Error, Result};
use crate::matrix::{RealMatrix, RealVector};

/// Default divergence cutoff on the state 2-norm.
pub const DIVERGENCE_BOUND: f64 = 1e12;

/// Default threshold of the moving-ratio statistic.
pub const MOVING_THRESHOLD: f64 = 9.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    pub states: Vec<RealVector>,
    /// First step whose state norm exceeded the bound; the rollout stops there.
    pub diverged_at: Option<usize>,
    pub max_norm: f64,
}

impl RolloutResult {
    fn start(x0: &RealVector, horizon: usize) -> Self {
        let mut states = Vec::with_capacity(horizon + 1);
        states.push(x0.clone());
        Self {
            states,
            diverged_at: None,
            max_norm: x0.norm(),
        }
    }

    /// Records `x` at `step`; returns false once the bound is exceeded.
    fn push(&mut self, step: usize, x: RealVector, bound: f64) -> bool {
        let norm = x.norm();
        self.max_norm = self.max_norm.max(norm);
        self.states.push(x);
        if !(norm <= bound) {
            self.diverged_at = Some(step);
            return false;
        }
        true
    }
}

/// `states[k] = Aᵏ x₀` for `k = 0..=horizon`, stopping early past `bound`.
pub fn rollout(
    a: &RealMatrix,
    x0: &RealVector,
    horizon: usize,
    bound: f64,
) -> Result<RolloutResult> {
    if a.nrows() != a.ncols() || a.ncols() != x0.len() {
        return Err(Error::dims(format!(
            "A is {}x{}, x0 has dimension {}",
            a.nrows(),
            a.ncols(),
            x0.len()
        )));
    }
    let mut out = RolloutResult::start(x0, horizon);
    if !(x0.norm() <= bound) {
        out.diverged_at = Some(0);
        return Ok(out);
    }
    let mut x = x0.clone();
    for step in 1..=horizon {
        x = a * x;
        if !out.push(step, x.clone(), bound) {
            break;
        }
    }
    Ok(out)
}

/// `x_{k+1} = A x_k + B u_k` over the given inputs.
pub fn rollout_controlled(
    a: &RealMatrix,
    b: &RealMatrix,
    x0: &RealVector,
    inputs: &[RealVector],
) -> Result<RolloutResult> {
    let n = x0.len();
    if a.nrows() != n || a.ncols() != n || b.nrows() != n {
        return Err(Error::dims(format!(
            "A is {}x{}, B is {}x{}, x0 has dimension {n}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if let Some(k) = inputs.iter().position(|u| u.len() != b.ncols()) {
        return Err(Error::dims(format!(
            "input {k} has dimension {}, B has {} columns",
            inputs[k].len(),
            b.ncols()
        )));
    }
    let mut out = RolloutResult::start(x0, inputs.len());
    let mut x = x0.clone();
    for (k, u) in inputs.iter().enumerate() {
        x = a * x + b * u;
        if !out.push(k + 1, x.clone(), DIVERGENCE_BOUND) {
            break;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorMetric {
    /// Mean absolute error over coordinates.
    #[default]
    Mae,
    /// Mean squared error over coordinates.
    Mse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    pub per_step: Vec<f64>,
    pub summary_mean: f64,
}

impl ErrorCurve {
    pub fn from_steps(per_step: Vec<f64>) -> Self {
        let summary_mean = if per_step.is_empty() {
            0.0
        } else {
            per_step.iter().sum::<f64>() / per_step.len() as f64
        };
        Self {
            per_step,
            summary_mean,
        }
    }

    /// Step-wise average of several curves over their common prefix.
    pub fn average(curves: &[ErrorCurve]) -> Result<Self> {
        let len = curves
            .iter()
            .map(|c| c.per_step.len())
            .min()
            .ok_or_else(|| Error::EmptyData("no error curves to average".into()))?;
        let per_step = (0..len)
            .map(|k| curves.iter().map(|c| c.per_step[k]).sum::<f64>() / curves.len() as f64)
            .collect();
        Ok(Self::from_steps(per_step))
    }
}

pub fn reconstruction_error(predicted: &[RealVector], truth: &[RealVector]) -> Result<ErrorCurve> {
    reconstruction_error_with(predicted, truth, ErrorMetric::Mae)
}

pub fn reconstruction_error_with(
    predicted: &[RealVector],
    truth: &[RealVector],
    metric: ErrorMetric,
) -> Result<ErrorCurve> {
    if predicted.len() != truth.len() {
        return Err(Error::dims(format!(
            "predicted has {} steps, truth has {}",
            predicted.len(),
            truth.len()
        )));
    }
    let per_step = predicted
        .iter()
        .zip(truth)
        .enumerate()
        .map(|(k, (p, t))| {
            if p.len() != t.len() || p.is_empty() {
                return Err(Error::dims(format!(
                    "step {k}: predicted dimension {}, truth dimension {}",
                    p.len(),
                    t.len()
                )));
            }
            let d = p.len() as f64;
            Ok(match metric {
                ErrorMetric::Mae => {
                    p.iter()
                        .zip(t.iter())
                        .map(|(a, b)| (a - b).abs())
                        .sum::<f64>()
                        / d
                }
                ErrorMetric::Mse => {
                    p.iter()
                        .zip(t.iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        / d
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorCurve::from_steps(per_step))
}

/// Fraction of sequences whose last frame differs from the frame two steps
/// earlier by more than `threshold` in L1 norm.
pub fn moving_ratio(sequences: &[Vec<RealVector>], threshold: f64) -> Result<f64> {
    if sequences.is_empty() {
        return Err(Error::EmptyData("no sequences".into()));
    }
    let mut moving = 0usize;
    for (index, seq) in sequences.iter().enumerate() {
        let len = seq.len();
        if len < 3 {
            return Err(Error::TooShort { index, len, min: 3 });
        }
        let (last, prev) = (&seq[len - 1], &seq[len - 3]);
        if last.len() != prev.len() {
            return Err(Error::dims(format!(
                "sequence {index} has frames of different sizes"
            )));
        }
        let gap: f64 = last
            .iter()
            .zip(prev.iter())
            .map(|(a, b)| (a - b).abs())
            .sum();
        if gap > threshold {
            moving += 1;
        }
    }
    Ok(moving as f64 / sequences.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(xs: &[f64]) -> RealVector {
        RealVector::from_column_slice(xs)
    }

    #[test]
    fn zero_matrix_rollout() {
        let r = rollout(
            &RealMatrix::zeros(2, 2),
            &v(&[1.0, 2.0]),
            3,
            DIVERGENCE_BOUND,
        )
        .unwrap();
        assert_eq!(
            r.states,
            vec![
                v(&[1.0, 2.0]),
                v(&[0.0, 0.0]),
                v(&[0.0, 0.0]),
                v(&[0.0, 0.0])
            ]
        );
        assert_eq!(r.diverged_at, None);
    }

    #[test]
    fn doubling_diverges_at_ten() {
        let r = rollout(&RealMatrix::from_element(1, 1, 2.0), &v(&[1.0]), 50, 1e3).unwrap();
        assert_eq!(r.diverged_at, Some(10));
        assert_eq!(r.states.len(), 11);
        assert_eq!(r.max_norm, 1024.0);
    }

    #[test]
    fn controlled_examples() {
        let r = rollout_controlled(
            &RealMatrix::zeros(2, 2),
            &RealMatrix::identity(2, 2),
            &v(&[5.0, 5.0]),
            &[v(&[1.0, -1.0])],
        )
        .unwrap();
        assert_eq!(r.states, vec![v(&[5.0, 5.0]), v(&[1.0, -1.0])]);

        let a = RealMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.9]);
        let b = RealMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let zeros = vec![v(&[0.0]); 7];
        let c = rollout_controlled(&a, &b, &v(&[1.0, 1.0]), &zeros).unwrap();
        let free = rollout(&a, &v(&[1.0, 1.0]), 7, DIVERGENCE_BOUND).unwrap();
        assert_eq!(c.states, free.states);

        // x ← 0.5 x + 1 converges to 1 / (1 − 0.5)
        let ones = vec![v(&[1.0]); 80];
        let s = rollout_controlled(
            &RealMatrix::from_element(1, 1, 0.5),
            &RealMatrix::from_element(1, 1, 1.0),
            &v(&[0.0]),
            &ones,
        )
        .unwrap();
        assert_abs_diff_eq!(s.states.last().unwrap()[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn error_curve_examples() {
        let a = vec![v(&[1.0, 2.0]), v(&[3.0, 4.0])];
        assert_eq!(
            reconstruction_error(&a, &a).unwrap().per_step,
            vec![0.0, 0.0]
        );
        let shifted: Vec<_> = a.iter().map(|x| x.add_scalar(0.25)).collect();
        let c = reconstruction_error(&shifted, &a).unwrap();
        assert_eq!(c.per_step, vec![0.25, 0.25]);
        assert_eq!(c.summary_mean, 0.25);
        let zeros = vec![v(&[0.0, 0.0]); 3];
        let ones = vec![v(&[1.0, 1.0]); 3];
        assert_eq!(
            reconstruction_error(&zeros, &ones).unwrap().per_step,
            vec![1.0; 3]
        );
        let mse =
            reconstruction_error_with(&zeros, &vec![v(&[2.0, 0.0]); 3], ErrorMetric::Mse).unwrap();
        assert_eq!(mse.per_step, vec![2.0; 3]);
        assert!(reconstruction_error(&zeros, &ones[..2]).is_err());
    }

    #[test]
    fn moving_ratio_examples() {
        let still = vec![vec![v(&[1.0, 1.0]); 4]; 3];
        assert_eq!(moving_ratio(&still, MOVING_THRESHOLD).unwrap(), 0.0);

        let seq = |gap: f64| vec![v(&[0.0, 0.0]), v(&[0.0, 0.0]), v(&[gap / 2.0, -gap / 2.0])];
        assert_eq!(moving_ratio(&[seq(10.0)], MOVING_THRESHOLD).unwrap(), 1.0);
        assert_eq!(moving_ratio(&[seq(9.0)], MOVING_THRESHOLD).unwrap(), 0.0);
        assert!(matches!(
            moving_ratio(&[vec![v(&[0.0]); 2]], MOVING_THRESHOLD),
            Err(Error::TooShort {
                index: 0,
                len: 2,
                min: 3
            })
        ));
    }
}
