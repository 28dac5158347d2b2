//! Spectral clipping: post-hoc stabilization of a learned system matrix.
//!
//! The matrix is eigendecomposed as `A = M Λ M⁻¹`; every eigenvalue with
//! `|λ| ≥ 1` is moved radially to magnitude `1 − ε` (its argument is kept)
//! and the matrix is rebuilt from the modified `Λ` and the same `M`.
//! Eigenvalues inside the unit disk and all eigenvectors are left alone.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{
    eigendecompose, ensure_finite, ensure_square, norm1, reconstruct, spectral_radius, RealMatrix,
};

/// Perturbation budget used by [`clip_spectrum`] for defective inputs,
/// relative to `max(‖A‖₁, 1)`.
pub const DEFAULT_PERTURBATION: f64 = 1e-10;
pub const DEFAULT_PERTURBATION_SEED: u64 = 0;
/// Doublings attempted by [`perturb_to_diagonalizable`] after the first try.
pub const MAX_PERTURBATION_DOUBLINGS: u32 = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ClipReport {
    pub eps: f64,
    /// Eigenvalues that met `|λ| ≥ 1` and were moved.
    pub n_clipped: usize,
    pub radius_before: f64,
    /// Measured on the returned matrix.
    pub radius_after: f64,
    /// `γ` actually used to make the input diagonalizable, 0 if none.
    pub perturbation_applied: f64,
    pub cond_modal: f64,
}

/// A learned (and possibly clipped) linear model `x' = A x (+ B u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: RealMatrix,
    pub b: Option<RealMatrix>,
    pub eps: f64,
    pub clip_report: Option<ClipReport>,
}

impl LinearModel {
    pub fn new(a: RealMatrix, b: Option<RealMatrix>) -> Result<Self> {
        let n = ensure_square(&a, "A")?;
        ensure_finite(&a, "A")?;
        if let Some(b) = &b {
            if b.nrows() != n {
                return Err(Error::dims(format!(
                    "B has {} rows, A is {n}x{n}",
                    b.nrows()
                )));
            }
            ensure_finite(b, "B")?;
        }
        Ok(Self {
            a,
            b,
            eps: 0.0,
            clip_report: None,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.as_ref().map_or(0, |b| b.ncols())
    }

    /// Clips `A`; `B` is carried over untouched.
    pub fn clipped(&self, eps: f64) -> Result<Self> {
        let (a, report) = clip_spectrum(&self.a, eps)?;
        Ok(Self {
            a,
            b: self.b.clone(),
            eps,
            clip_report: Some(report),
        })
    }
}

pub(crate) fn check_eps(eps: f64) -> Result<()> {
    if (0.0..1.0).contains(&eps) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "eps must lie in [0, 1), got {eps}"
        )))
    }
}

/// Clipping rule applied to one eigenvalue.
pub fn clip_eigenvalue(lambda: Complex64, eps: f64) -> Complex64 {
    let mag = lambda.norm();
    if mag >= 1.0 {
        lambda * ((1.0 - eps) / mag)
    } else {
        lambda
    }
}

pub fn clip_spectrum(a: &RealMatrix, eps: f64) -> Result<(RealMatrix, ClipReport)> {
    ensure_square(a, "A")?;
    ensure_finite(a, "A")?;
    check_eps(eps)?;

    let spectrum = eigendecompose(a)?;
    let radius_before = spectrum.spectral_radius();
    let n_clipped = spectrum
        .eigenvalues()
        .iter()
        .filter(|l| l.norm() >= 1.0)
        .count();
    if n_clipped == 0 {
        let report = ClipReport {
            eps,
            n_clipped,
            radius_before,
            radius_after: radius_before,
            perturbation_applied: 0.0,
            cond_modal: spectrum.cond_modal(),
        };
        return Ok((a.clone(), report));
    }

    let (spectrum, gamma) = if spectrum.is_defective() {
        let budget = DEFAULT_PERTURBATION * norm1(a).max(1.0);
        let (perturbed, gamma) = perturb_to_diagonalizable(a, budget, DEFAULT_PERTURBATION_SEED)?;
        (eigendecompose(&perturbed)?, gamma)
    } else {
        (spectrum, 0.0)
    };

    let clipped: Vec<Complex64> = spectrum
        .eigenvalues()
        .iter()
        .map(|&l| clip_eigenvalue(l, eps))
        .collect();
    let n_clipped = spectrum
        .eigenvalues()
        .iter()
        .filter(|l| l.norm() >= 1.0)
        .count();
    let out = reconstruct(&spectrum.with_eigenvalues(clipped)?)?;
    let report = ClipReport {
        eps,
        n_clipped,
        radius_before,
        radius_after: spectral_radius(&out)?,
        perturbation_applied: gamma,
        cond_modal: spectrum.cond_modal(),
    };
    Ok((out, report))
}

/// Clips `A` and keeps `B` bit-identical.
pub fn clip_controlled(a: &RealMatrix, b: &RealMatrix, eps: f64) -> Result<LinearModel> {
    LinearModel::new(a.clone(), Some(b.clone()))?.clipped(eps)
}

/// Returns `A + E` with `‖E‖₁ = γ·2^k` for the smallest `k ≤ 20` that makes
/// the modal matrix well conditioned, or `A` itself (and `γ = 0`) when it
/// already is. `E` is a fixed seeded uniform matrix, rescaled per attempt.
pub fn perturb_to_diagonalizable(
    a: &RealMatrix,
    gamma: f64,
    seed: u64,
) -> Result<(RealMatrix, f64)> {
    let n = ensure_square(a, "A")?;
    ensure_finite(a, "A")?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    if matches!(eigendecompose(a), Ok(s) if !s.is_defective()) {
        return Ok((a.clone(), 0.0));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let direction = RealMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..=1.0));
    let direction = &direction / norm1(&direction);
    let mut target = gamma;
    for k in 0..=MAX_PERTURBATION_DOUBLINGS {
        if k > 0 {
            target *= 2.0;
        }
        let candidate = a + &direction * target;
        if matches!(eigendecompose(&candidate), Ok(s) if !s.is_defective()) {
            return Ok((candidate, target));
        }
    }
    Err(Error::PerturbationFailed {
        retries: MAX_PERTURBATION_DOUBLINGS,
        gamma: target,
    })
}

/// Uniform shrinkage `A·(1 − ε)/max(1, ρ(A))`, the comparison baseline.
pub fn scale_baseline(a: &RealMatrix, eps: f64) -> Result<RealMatrix> {
    check_eps(eps)?;
    let rho = spectral_radius(a)?;
    Ok(a * ((1.0 - eps) / rho.max(1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::RealVector;
    use approx::assert_abs_diff_eq;

    fn diag(xs: &[f64]) -> RealMatrix {
        RealMatrix::from_diagonal(&RealVector::from_column_slice(xs))
    }

    #[test]
    fn diagonal_clip() {
        let (out, rep) = clip_spectrum(&diag(&[2.0, 0.5]), 0.0).unwrap();
        assert_abs_diff_eq!((out - diag(&[1.0, 0.5])).norm(), 0.0, epsilon = 1e-14);
        assert_eq!(rep.n_clipped, 1);
        assert_abs_diff_eq!(rep.radius_before, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rep.radius_after, 1.0, epsilon = 1e-14);
        assert_eq!(rep.perturbation_applied, 0.0);
    }

    #[test]
    fn diagonal_clip_with_margin() {
        let (out, _) = clip_spectrum(&diag(&[2.0, 0.5]), 0.1).unwrap();
        assert_abs_diff_eq!((out - diag(&[0.9, 0.5])).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn rotation_pair_clipped_to_unit_circle() {
        let a = RealMatrix::from_row_slice(2, 2, &[0.0, -1.5, 1.5, 0.0]);
        let (out, rep) = clip_spectrum(&a, 0.0).unwrap();
        let expect = RealMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert_abs_diff_eq!((&out - expect).norm(), 0.0, epsilon = 1e-14);
        assert_eq!(rep.n_clipped, 2);
        let s = eigendecompose(&out).unwrap();
        for l in s.eigenvalues() {
            assert_abs_diff_eq!(l.norm(), 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(l.arg().abs(), std::f64::consts::FRAC_PI_2, epsilon = 1e-14);
        }
    }

    #[test]
    fn unit_magnitude_is_clipped_to_itself() {
        let (out, rep) = clip_spectrum(&diag(&[1.0, -0.3]), 0.0).unwrap();
        assert_eq!(rep.n_clipped, 1);
        assert_abs_diff_eq!((out - diag(&[1.0, -0.3])).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn controlled_keeps_b() {
        let b = RealMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let model = clip_controlled(&diag(&[2.0, 0.5]), &b, 0.0).unwrap();
        assert_abs_diff_eq!((&model.a - diag(&[1.0, 0.5])).norm(), 0.0, epsilon = 1e-14);
        assert_eq!(model.b.as_ref(), Some(&b));

        let stable = diag(&[0.7, -0.2]);
        let model = clip_controlled(&stable, &b, 0.0).unwrap();
        assert_eq!(model.a, stable);
        assert_eq!(model.clip_report.unwrap().n_clipped, 0);
    }

    #[test]
    fn controlled_rejects_bad_b() {
        let b = RealMatrix::zeros(3, 1);
        assert!(matches!(
            clip_controlled(&diag(&[2.0, 0.5]), &b, 0.0),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn eps_out_of_range() {
        for eps in [-0.1, 1.0, f64::NAN] {
            assert!(matches!(
                clip_spectrum(&diag(&[2.0]), eps),
                Err(Error::InvalidArgument(_))
            ));
        }
    }

    #[test]
    fn perturb_noop_on_diagonalizable() {
        let a = diag(&[0.3, 2.0]);
        let (out, g) = perturb_to_diagonalizable(&a, 1e-8, 1).unwrap();
        assert_eq!(out, a);
        assert_eq!(g, 0.0);
    }

    #[test]
    fn perturb_jordan_block() {
        let a = RealMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let (out, g) = perturb_to_diagonalizable(&a, 1e-8, 7).unwrap();
        assert!(g >= 1e-8);
        let k = (g / 1e-8).log2().round() as i32;
        assert!((0..=20).contains(&k));
        assert!(norm1(&(&out - &a)) <= g * (1.0 + 1e-12));
        assert!(eigendecompose(&out).unwrap().cond_modal() <= 1e12);

        let (again, g2) = perturb_to_diagonalizable(&a, 1e-8, 7).unwrap();
        assert_eq!(out, again);
        assert_eq!(g, g2);
    }

    #[test]
    fn defective_unstable_input_is_clipped() {
        let a = RealMatrix::from_row_slice(3, 3, &[1.2, 1.0, 0.0, 0.0, 1.2, 1.0, 0.0, 0.0, 1.2]);
        let (out, rep) = clip_spectrum(&a, 0.0).unwrap();
        assert!(rep.perturbation_applied > 0.0);
        assert!(spectral_radius(&out).unwrap() <= 1.0 + 1e-8);
    }

    #[test]
    fn defective_stable_input_untouched() {
        let a = RealMatrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, 0.5]);
        let (out, rep) = clip_spectrum(&a, 0.0).unwrap();
        assert_eq!(out, a);
        assert_eq!(rep.perturbation_applied, 0.0);
    }

    #[test]
    fn scale_baseline_examples() {
        let out = scale_baseline(&diag(&[2.0, 0.5]), 0.0).unwrap();
        assert_abs_diff_eq!((out - diag(&[1.0, 0.25])).norm(), 0.0, epsilon = 1e-14);
        let out = scale_baseline(&diag(&[2.0, 0.5]), 0.1).unwrap();
        assert_abs_diff_eq!((out - diag(&[0.9, 0.225])).norm(), 0.0, epsilon = 1e-14);
        let stable = RealMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.3]);
        assert_eq!(scale_baseline(&stable, 0.0).unwrap(), stable);
    }
}
