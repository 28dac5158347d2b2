use crate::error::{Error, Result};
use crate::matrix::{RealMatrix, RealVector};

use super::{ErrorCurve, DIVERGENCE_BOUND};

pub const RICCATI_TOL: f64 = 1e-10;
pub const RICCATI_ITERS: usize = 10_000;

fn check_lqr_dims(a: &RealMatrix, b: &RealMatrix, q: &RealMatrix, r: &RealMatrix) -> Result<()> {
    let n = a.nrows();
    let m = b.ncols();
    let ok = a.ncols() == n
        && n > 0
        && b.nrows() == n
        && q.nrows() == n
        && q.ncols() == n
        && r.nrows() == m
        && r.ncols() == m;
    if ok {
        Ok(())
    } else {
        Err(Error::dims(format!(
            "A {}x{}, B {}x{}, Q {}x{}, R {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
            q.nrows(),
            q.ncols(),
            r.nrows(),
            r.ncols()
        )))
    }
}

/// Discrete-time LQR gain `G = (R + BᵀPB)⁻¹ BᵀPA` where `P` is the fixed
/// point of the Riccati recursion
/// `P ← Q + AᵀPA − AᵀPB (R + BᵀPB)⁻¹ BᵀPA`, started from `P = Q`.
pub fn lqr_gain(
    a: &RealMatrix,
    b: &RealMatrix,
    q: &RealMatrix,
    r: &RealMatrix,
    iters: usize,
    tol: f64,
) -> Result<RealMatrix> {
    check_lqr_dims(a, b, q, r)?;
    let gain = |p: &RealMatrix| -> Result<RealMatrix> {
        let s = r + b.transpose() * p * b;
        let s_inv = s
            .try_inverse()
            .ok_or_else(|| Error::SingularMatrix("R + BᵀPB".into()))?;
        Ok(s_inv * b.transpose() * p * a)
    };
    let mut p = q.clone();
    let mut last_change = f64::INFINITY;
    for _ in 0..iters {
        let g = gain(&p)?;
        let mut next = q + a.transpose() * &p * a - a.transpose() * &p * b * &g;
        // keep P symmetric against rounding drift
        next = (&next + next.transpose()) * 0.5;
        last_change = (&next - &p).norm();
        p = next;
        if !last_change.is_finite() {
            break;
        }
        if last_change <= tol {
            return gain(&p);
        }
    }
    Err(Error::RiccatiNoConverge { iters, last_change })
}

/// Reference `(sin t, sin 2t)` on the first two coordinates, zeros elsewhere.
pub fn figure_eight(n: usize, steps: usize, dt: f64) -> Vec<RealVector> {
    (0..steps)
        .map(|k| {
            let t = k as f64 * dt;
            let mut r = RealVector::zeros(n);
            if n > 0 {
                r[0] = t.sin();
            }
            if n > 1 {
                r[1] = (2.0 * t).sin();
            }
            r
        })
        .collect()
}

/// Simulates the true system under `u_t = −G (x_t − r_t)` with `G` designed
/// on the model, starting at `r_0`. Returns the per-step mean absolute
/// tracking error `|x_t − r_t|`.
#[allow(clippy::too_many_arguments)]
pub fn track_reference(
    a_true: &RealMatrix,
    b_true: &RealMatrix,
    a_model: &RealMatrix,
    b_model: &RealMatrix,
    reference: &[RealVector],
    q: &RealMatrix,
    r: &RealMatrix,
) -> Result<ErrorCurve> {
    check_lqr_dims(a_true, b_true, q, r)?;
    check_lqr_dims(a_model, b_model, q, r)?;
    if a_true.nrows() != a_model.nrows() || b_true.ncols() != b_model.ncols() {
        return Err(Error::dims("true system and model disagree in dimensions"));
    }
    let n = a_true.nrows();
    if reference.is_empty() {
        return Err(Error::EmptyData("empty reference".into()));
    }
    if let Some(k) = reference.iter().position(|x| x.len() != n) {
        return Err(Error::dims(format!(
            "reference step {k} has dimension {}, expected {n}",
            reference[k].len()
        )));
    }
    let g = lqr_gain(a_model, b_model, q, r, RICCATI_ITERS, RICCATI_TOL)?;
    let mut x = reference[0].clone();
    let mut per_step = Vec::with_capacity(reference.len());
    for (t, target) in reference.iter().enumerate() {
        let err = &x - target;
        per_step.push(err.iter().map(|e| e.abs()).sum::<f64>() / n as f64);
        if t + 1 == reference.len() {
            break;
        }
        let u = -(&g * err);
        x = a_true * x + b_true * u;
        if !(x.norm() <= DIVERGENCE_BOUND) {
            return Err(Error::NumericalOverflow {
                step: t + 1,
                magnitude: x.norm(),
            });
        }
    }
    Ok(ErrorCurve::from_steps(per_step))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::spectral_radius;
    use approx::assert_abs_diff_eq;

    fn scalar(x: f64) -> RealMatrix {
        RealMatrix::from_element(1, 1, x)
    }

    #[test]
    fn zero_dynamics_zero_gain() {
        let g = lqr_gain(
            &RealMatrix::zeros(2, 2),
            &RealMatrix::identity(2, 1),
            &RealMatrix::identity(2, 2),
            &scalar(1.0),
            100,
            1e-12,
        )
        .unwrap();
        assert_eq!(g, RealMatrix::zeros(1, 2));
    }

    #[test]
    fn scalar_gain_matches_bisection() {
        // p = q + a²p − a²p²/(r + p), solved by bisection on p ≥ q.
        let (a, b, q, r) = (1.2f64, 1.0f64, 1.0f64, 1.0f64);
        let f = |p: f64| q + a * a * p - a * a * p * p * b * b / (r + b * b * p) - p;
        let (mut lo, mut hi) = (q, 100.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let p = 0.5 * (lo + hi);
        let g_oracle = b * p * a / (r + b * b * p);
        let g = lqr_gain(
            &scalar(a),
            &scalar(b),
            &scalar(q),
            &scalar(r),
            RICCATI_ITERS,
            RICCATI_TOL,
        )
        .unwrap();
        assert_abs_diff_eq!(g[(0, 0)], g_oracle, epsilon = 1e-9);
        assert!((a - b * g[(0, 0)]).abs() < 1.0);
    }

    #[test]
    fn uncontrollable_unstable_pair_is_flagged() {
        let a = RealMatrix::from_diagonal(&RealVector::from_column_slice(&[1.5, 0.5]));
        let b = RealMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        match lqr_gain(
            &a,
            &b,
            &RealMatrix::identity(2, 2),
            &scalar(1.0),
            RICCATI_ITERS,
            RICCATI_TOL,
        ) {
            Err(Error::RiccatiNoConverge { .. }) => {}
            Ok(g) => assert!(spectral_radius(&(&a - &b * g)).unwrap() >= 1.0),
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn constant_reference_at_equilibrium() {
        let a = RealMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.0, 0.7]);
        let b = RealMatrix::identity(2, 2);
        let reference = vec![RealVector::zeros(2); 30];
        let c = track_reference(
            &a,
            &b,
            &a,
            &b,
            &reference,
            &RealMatrix::identity(2, 2),
            &RealMatrix::identity(2, 2),
        )
        .unwrap();
        assert!(c.per_step.iter().all(|e| *e == 0.0));
    }

    #[test]
    fn figure_eight_shape() {
        let r = figure_eight(3, 4, 0.5);
        assert_eq!(r.len(), 4);
        assert_abs_diff_eq!(r[1][0], 0.5f64.sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(r[1][1], 1.0f64.sin(), epsilon = 1e-15);
        assert_eq!(r[1][2], 0.0);
    }
}
