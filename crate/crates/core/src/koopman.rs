//! State-inclusive Koopman lifting and lifted-space linear models.
//!
//! A state `ξ ∈ ℝⁿ` is lifted to `z = [φ(ξ); ξ]` where `φ` lists every
//! monomial of total degree `2..=d` in graded-lexicographic order. Because
//! the raw state occupies the last `n` coordinates, decoding a lifted
//! prediction is a plain selection.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::clip::{
    clip_spectrum, perturb_to_diagonalizable, ClipReport, DEFAULT_PERTURBATION,
    DEFAULT_PERTURBATION_SEED,
};
use crate::error::{Error, Result};
use crate::matrix::{
    eigendecompose, ensure_finite, ensure_square, norm1, ComplexMatrix, RealMatrix, RealVector,
    IMAG_RESIDUE_TOL,
};
use crate::sysid::{fit_ls, Trajectory, TrajectoryDataset};

/// Entries beyond this magnitude abort a prediction.
pub const OVERFLOW_LIMIT: f64 = 1e300;

/// Largest lifted dimension accepted when building a lifting.
pub const MAX_LIFTED_DIM: usize = 1 << 16;

/// Number of monomials of total degree `2..=degree` in `n` variables, or
/// `None` on overflow.
pub fn monomial_count(n: usize, degree: usize) -> Option<usize> {
    let mut total: usize = 0;
    for k in 2..=degree {
        // C(n + k - 1, k), built incrementally to stay exact.
        let mut c: u128 = 1;
        for i in 0..k as u128 {
            c = c.checked_mul(n as u128 + i)? / (i + 1);
        }
        total = total.checked_add(usize::try_from(c).ok()?)?;
    }
    Some(total)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiftingSpec {
    state_dim: usize,
    degree: usize,
    /// Each monomial as a non-decreasing list of variable indices.
    monomials: Vec<Vec<usize>>,
}

impl LiftingSpec {
    pub fn new(state_dim: usize, degree: usize) -> Result<Self> {
        if state_dim == 0 {
            return Err(Error::InvalidArgument(
                "lifting state dimension must be positive".into(),
            ));
        }
        if degree < 2 {
            return Err(Error::InvalidArgument(format!(
                "lifting degree must be at least 2, got {degree}"
            )));
        }
        let count = monomial_count(state_dim, degree)
            .and_then(|c| c.checked_add(state_dim))
            .filter(|&d| d <= MAX_LIFTED_DIM)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "lifting of degree {degree} over {state_dim} variables exceeds {MAX_LIFTED_DIM} coordinates"
                ))
            })?;
        let mut monomials = Vec::with_capacity(count - state_dim);
        for k in 2..=degree {
            let mut idx = vec![0usize; k];
            loop {
                monomials.push(idx.clone());
                // next non-decreasing index tuple in lexicographic order
                let mut p = k;
                while p > 0 && idx[p - 1] == state_dim - 1 {
                    p -= 1;
                }
                if p == 0 {
                    break;
                }
                let v = idx[p - 1] + 1;
                for slot in &mut idx[p - 1..] {
                    *slot = v;
                }
            }
        }
        Ok(Self {
            state_dim,
            degree,
            monomials,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn monomials(&self) -> &[Vec<usize>] {
        &self.monomials
    }

    pub fn lifted_dim(&self) -> usize {
        self.monomials.len() + self.state_dim
    }

    /// Offset of the state block inside a lifted vector.
    pub fn state_offset(&self) -> usize {
        self.monomials.len()
    }

    /// The trailing state block of a lifted vector.
    pub fn decode(&self, z: &RealVector) -> RealVector {
        z.rows(self.state_offset(), self.state_dim).into_owned()
    }
}

pub fn lift(xi: &RealVector, spec: &LiftingSpec) -> Result<RealVector> {
    if xi.len() != spec.state_dim {
        return Err(Error::dims(format!(
            "state has dimension {}, lifting expects {}",
            xi.len(),
            spec.state_dim
        )));
    }
    let mut z = RealVector::zeros(spec.lifted_dim());
    for (i, mono) in spec.monomials.iter().enumerate() {
        z[i] = mono.iter().map(|&v| xi[v]).product();
    }
    z.rows_mut(spec.state_offset(), spec.state_dim)
        .copy_from(xi);
    Ok(z)
}

/// Lifted-space linear model `z_{k+1} = K z_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanModel {
    pub k: RealMatrix,
    pub spec: LiftingSpec,
    pub eps: f64,
    pub clip_report: Option<ClipReport>,
}

impl KoopmanModel {
    pub fn new(k: RealMatrix, spec: LiftingSpec) -> Result<Self> {
        let d = ensure_square(&k, "K")?;
        ensure_finite(&k, "K")?;
        if d != spec.lifted_dim() {
            return Err(Error::dims(format!(
                "K is {d}x{d} but the lifting has {} coordinates",
                spec.lifted_dim()
            )));
        }
        Ok(Self {
            k,
            spec,
            eps: 0.0,
            clip_report: None,
        })
    }
}

/// Lifts every state of an autonomous dataset.
pub fn lift_dataset(dataset: &TrajectoryDataset, spec: &LiftingSpec) -> Result<TrajectoryDataset> {
    if dataset.is_controlled() {
        return Err(Error::InvalidArgument(
            "Koopman lifting expects autonomous data".into(),
        ));
    }
    if dataset.state_dim() != spec.state_dim {
        return Err(Error::dims(format!(
            "dataset state dimension {} does not match lifting dimension {}",
            dataset.state_dim(),
            spec.state_dim
        )));
    }
    let trajs = dataset
        .trajectories()
        .iter()
        .map(|t| {
            let states = t
                .states
                .iter()
                .map(|x| lift(x, spec))
                .collect::<Result<Vec<_>>>()?;
            Ok(Trajectory::autonomous(states))
        })
        .collect::<Result<Vec<_>>>()?;
    TrajectoryDataset::new(spec.lifted_dim(), 0, trajs)
}

pub fn fit_koopman(dataset: &TrajectoryDataset, spec: &LiftingSpec) -> Result<KoopmanModel> {
    let lifted = lift_dataset(dataset, spec)?;
    let k = fit_ls(&lifted)?;
    KoopmanModel::new(k, spec.clone())
}

pub fn clip_koopman(model: &KoopmanModel, eps: f64) -> Result<KoopmanModel> {
    let (k, report) = clip_spectrum(&model.k, eps)?;
    Ok(KoopmanModel {
        k,
        spec: model.spec.clone(),
        eps,
        clip_report: Some(report),
    })
}

/// Open-loop prediction decoded to the original state space; `horizon + 1`
/// states, the first being `xi0` itself.
pub fn predict_states(
    model: &KoopmanModel,
    xi0: &RealVector,
    horizon: usize,
) -> Result<Vec<RealVector>> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let mut z = lift(xi0, &model.spec)?;
    let mut out = Vec::with_capacity(horizon + 1);
    out.push(xi0.clone());
    for step in 1..=horizon {
        z = &model.k * z;
        let peak = z.amax();
        if !(peak <= OVERFLOW_LIMIT) {
            return Err(Error::NumericalOverflow {
                step,
                magnitude: peak,
            });
        }
        out.push(model.spec.decode(&z));
    }
    Ok(out)
}

/// Eigen-decomposition of `K` with biorthogonal adjoint vectors.
///
/// `modes` holds `vᵢ` (`K vᵢ = λᵢ vᵢ`) column-wise and `adjoint` holds
/// `wᵢ` (`K* wᵢ = λ̄ᵢ wᵢ`), scaled so that `⟨vᵢ, wⱼ⟩ = δᵢⱼ` with
/// `⟨a, b⟩ = Σ aₖ b̄ₖ`. The eigenfunction of mode `i` is `φᵢ(z) = ⟨z, wᵢ⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    pub eigenvalues: Vec<Complex64>,
    pub modes: ComplexMatrix,
    pub adjoint: ComplexMatrix,
    pub cond_modal: f64,
    /// Perturbation applied to make `K` diagonalizable, 0 if none.
    pub perturbation_applied: f64,
}

/// `⟨a, b⟩ = Σ aₖ · conj(bₖ)`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

impl ModeSet {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn conjugate_partner(&self, i: usize) -> Option<usize> {
        let im = self.eigenvalues[i].im;
        if im > 0.0 {
            Some(i + 1)
        } else if im < 0.0 {
            Some(i - 1)
        } else {
            None
        }
    }

    /// `φᵢ(z)` for every mode.
    pub fn eigenfunctions(&self, z: &RealVector) -> Result<Vec<Complex64>> {
        if z.len() != self.len() {
            return Err(Error::dims(format!(
                "lifted vector has dimension {}, expected {}",
                z.len(),
                self.len()
            )));
        }
        let zc: Vec<Complex64> = z.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Ok((0..self.len())
            .map(|i| {
                let w: Vec<Complex64> = self.adjoint.column(i).iter().copied().collect();
                inner(&zc, &w)
            })
            .collect())
    }

    /// Checks that `subset` is in range and never splits a conjugate pair.
    pub fn check_subset(&self, subset: &[usize]) -> Result<()> {
        for &i in subset {
            if i >= self.len() {
                return Err(Error::InvalidArgument(format!(
                    "mode index {i} out of range 0..{}",
                    self.len()
                )));
            }
            if let Some(j) = self.conjugate_partner(i) {
                if !subset.contains(&j) {
                    return Err(Error::NonConjugateSubset(i.min(j), i.max(j)));
                }
            }
        }
        Ok(())
    }
}

pub fn mode_decompose(model: &KoopmanModel) -> Result<ModeSet> {
    mode_decompose_matrix(&model.k)
}

/// Modes of any square transition matrix, e.g. the `A` of a linear model.
pub fn mode_decompose_matrix(k: &RealMatrix) -> Result<ModeSet> {
    let mut spectrum = eigendecompose(k)?;
    let mut perturbation_applied = 0.0;
    if spectrum.is_defective() {
        let budget = DEFAULT_PERTURBATION * norm1(k).max(1.0);
        let (k, gamma) = perturb_to_diagonalizable(k, budget, DEFAULT_PERTURBATION_SEED)?;
        spectrum = eigendecompose(&k)?;
        perturbation_applied = gamma;
    }
    let modes = spectrum.modal().clone();
    let inv = modes
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularMatrix("Koopman modal matrix".into()))?;
    let adjoint = inv.adjoint();
    Ok(ModeSet {
        eigenvalues: spectrum.eigenvalues().to_vec(),
        modes,
        adjoint,
        cond_modal: spectrum.cond_modal(),
        perturbation_applied,
    })
}

/// `Re Σ_{i∈subset} λᵢᵏ φᵢ(z₀) vᵢ` for `k = 0..=horizon`.
pub fn rollout_modes(
    modes: &ModeSet,
    subset: &[usize],
    z0: &RealVector,
    horizon: usize,
) -> Result<Vec<RealVector>> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    modes.check_subset(subset)?;
    let phi = modes.eigenfunctions(z0)?;
    let d = modes.len();
    let mut coef: Vec<Complex64> = subset.iter().map(|&i| phi[i]).collect();
    let mut out = Vec::with_capacity(horizon + 1);
    for step in 0..=horizon {
        let mut acc = vec![Complex64::new(0.0, 0.0); d];
        for (c, &i) in coef.iter().zip(subset) {
            for (r, a) in acc.iter_mut().enumerate() {
                *a += c * modes.modes[(r, i)];
            }
        }
        let peak = acc
            .iter()
            .map(|c| c.re.abs().max(c.im.abs()))
            .fold(0.0, |m: f64, v| if v.is_nan() { v } else { m.max(v) });
        if !(peak <= OVERFLOW_LIMIT) {
            return Err(Error::NumericalOverflow {
                step,
                magnitude: peak,
            });
        }
        let re = RealVector::from_iterator(d, acc.iter().map(|c| c.re));
        let im = acc.iter().map(|c| c.im * c.im).sum::<f64>().sqrt();
        let allowed = IMAG_RESIDUE_TOL * (re.norm() + 1.0);
        if !(im <= allowed) {
            return Err(Error::NonRealResult {
                residue: im,
                allowed,
            });
        }
        out.push(re);
        for (c, &i) in coef.iter_mut().zip(subset) {
            *c *= modes.eigenvalues[i];
        }
    }
    Ok(out)
}

/// Which Koopman modes to keep in a mode-subset rollout.
///
/// Text form: `all`, `unstable` (`|λ| ≥ 1`), `stable` (`|λ| < 1`), or a
/// comma-separated list of 1-based indices and inclusive ranges such as
/// `1-4,7`. Indices follow the eigenvalue order of [`mode_decompose`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModeSelector {
    All,
    Unstable,
    Stable,
    Indices(Vec<usize>),
}

impl ModeSelector {
    /// Zero-based mode indices, sorted and deduplicated.
    pub fn resolve(&self, modes: &ModeSet) -> Result<Vec<usize>> {
        let mut out: Vec<usize> = match self {
            ModeSelector::All => (0..modes.len()).collect(),
            ModeSelector::Unstable => (0..modes.len())
                .filter(|&i| modes.eigenvalues[i].norm() >= 1.0)
                .collect(),
            ModeSelector::Stable => (0..modes.len())
                .filter(|&i| modes.eigenvalues[i].norm() < 1.0)
                .collect(),
            ModeSelector::Indices(idx) => idx.iter().map(|i| i - 1).collect(),
        };
        out.sort_unstable();
        out.dedup();
        modes.check_subset(&out)?;
        Ok(out)
    }
}

/// Cap on the number of indices a textual selector may expand to.
const MAX_SELECTOR_INDICES: usize = MAX_LIFTED_DIM;

impl FromStr for ModeSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: String| Error::parse(crate::error::Location::field("subset"), msg);
        let s = s.trim();
        match s {
            "all" => return Ok(ModeSelector::All),
            "unstable" => return Ok(ModeSelector::Unstable),
            "stable" => return Ok(ModeSelector::Stable),
            "" => return Err(bad("empty mode subset".into())),
            _ => {}
        }
        let index = |t: &str| -> Result<usize> {
            let v: usize = t
                .trim()
                .parse()
                .map_err(|_| bad(format!("invalid mode index `{}`", t.trim())))?;
            if v == 0 {
                return Err(bad("mode indices are 1-based".into()));
            }
            Ok(v)
        };
        let mut out = Vec::new();
        for part in s.split(',') {
            match part.split_once('-') {
                Some((lo, hi)) => {
                    let (lo, hi) = (index(lo)?, index(hi)?);
                    if lo > hi {
                        return Err(bad(format!("empty range {lo}-{hi}")));
                    }
                    if hi - lo >= MAX_SELECTOR_INDICES
                        || out.len() + (hi - lo) >= MAX_SELECTOR_INDICES
                    {
                        return Err(bad("mode subset too large".into()));
                    }
                    out.extend(lo..=hi);
                }
                None => {
                    if out.len() >= MAX_SELECTOR_INDICES {
                        return Err(bad("mode subset too large".into()));
                    }
                    out.push(index(part)?);
                }
            }
        }
        Ok(ModeSelector::Indices(out))
    }
}

impl fmt::Display for ModeSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModeSelector::All => f.write_str("all"),
            ModeSelector::Unstable => f.write_str("unstable"),
            ModeSelector::Stable => f.write_str("stable"),
            ModeSelector::Indices(idx) => {
                let parts: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(xs: &[f64]) -> RealVector {
        RealVector::from_column_slice(xs)
    }

    #[test]
    fn lift_two_states_degree_two() {
        let spec = LiftingSpec::new(2, 2).unwrap();
        assert_eq!(
            lift(&v(&[2.0, 3.0]), &spec).unwrap(),
            v(&[4.0, 6.0, 9.0, 2.0, 3.0])
        );
    }

    #[test]
    fn lift_zero_and_scalar_cubic() {
        let spec = LiftingSpec::new(3, 3).unwrap();
        assert_eq!(
            lift(&RealVector::zeros(3), &spec).unwrap(),
            RealVector::zeros(spec.lifted_dim())
        );
        let spec = LiftingSpec::new(1, 3).unwrap();
        assert_eq!(lift(&v(&[1.5]), &spec).unwrap(), v(&[2.25, 3.375, 1.5]));
    }

    #[test]
    fn monomial_counts() {
        assert_eq!(monomial_count(2, 2), Some(3));
        assert_eq!(monomial_count(3, 3), Some(6 + 10));
        assert_eq!(LiftingSpec::new(23, 2).unwrap().lifted_dim(), 23 + 276);
        assert!(LiftingSpec::new(1000, 6).is_err());
        assert!(LiftingSpec::new(2, 1).is_err());
    }

    #[test]
    fn graded_lex_order_three_vars() {
        let spec = LiftingSpec::new(3, 2).unwrap();
        let expect: Vec<Vec<usize>> = vec![
            vec![0, 0],
            vec![0, 1],
            vec![0, 2],
            vec![1, 1],
            vec![1, 2],
            vec![2, 2],
        ];
        assert_eq!(spec.monomials(), expect.as_slice());
    }

    #[test]
    fn lift_dimension_mismatch() {
        let spec = LiftingSpec::new(2, 2).unwrap();
        assert!(matches!(
            lift(&v(&[1.0]), &spec),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn constant_trajectory_maps_point_to_itself() {
        let spec = LiftingSpec::new(2, 2).unwrap();
        let x = v(&[0.4, -0.7]);
        let ds =
            TrajectoryDataset::new(2, 0, vec![Trajectory::autonomous(vec![x.clone(); 6])]).unwrap();
        let model = fit_koopman(&ds, &spec).unwrap();
        let z = lift(&x, &spec).unwrap();
        assert_abs_diff_eq!((&model.k * &z - &z).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn diagonal_modes() {
        let spec = LiftingSpec::new(1, 2).unwrap();
        let k = RealMatrix::from_diagonal(&v(&[0.9, 0.5]));
        let model = KoopmanModel::new(k, spec).unwrap();
        let m = mode_decompose(&model).unwrap();
        assert_eq!(
            m.eigenvalues,
            vec![Complex64::new(0.9, 0.0), Complex64::new(0.5, 0.0)]
        );
        for i in 0..2 {
            for j in 0..2 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(m.modes[(i, j)].re, e, epsilon = 1e-15);
                assert_abs_diff_eq!(m.adjoint[(i, j)].re, e, epsilon = 1e-15);
            }
        }
        let seq = rollout_modes(&m, &[0], &v(&[2.0, 3.0]), 4).unwrap();
        for (k, z) in seq.iter().enumerate() {
            assert_abs_diff_eq!(z[0], 2.0 * 0.9f64.powi(k as i32), epsilon = 1e-14);
            assert_eq!(z[1], 0.0);
        }
    }

    #[test]
    fn defective_k_is_perturbed() {
        let spec = LiftingSpec::new(1, 2).unwrap();
        let k = RealMatrix::from_row_slice(2, 2, &[0.8, 1.0, 0.0, 0.8]);
        let m = mode_decompose(&KoopmanModel::new(k, spec).unwrap()).unwrap();
        assert!(m.perturbation_applied > 0.0);
    }

    #[test]
    fn subset_splitting_pair_rejected() {
        let spec = LiftingSpec::new(1, 2).unwrap();
        let k = RealMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        let m = mode_decompose(&KoopmanModel::new(k, spec).unwrap()).unwrap();
        assert!(matches!(
            rollout_modes(&m, &[0], &v(&[1.0, 1.0]), 3),
            Err(Error::NonConjugateSubset(0, 1))
        ));
        assert!(rollout_modes(&m, &[0, 1], &v(&[1.0, 1.0]), 3).is_ok());
    }

    #[test]
    fn selector_parsing() {
        assert_eq!("all".parse::<ModeSelector>().unwrap(), ModeSelector::All);
        assert_eq!(
            "1-3, 5".parse::<ModeSelector>().unwrap(),
            ModeSelector::Indices(vec![1, 2, 3, 5])
        );
        for bad in ["", "0", "3-1", "x", "1,,2", "1-", "1-99999999999"] {
            assert!(bad.parse::<ModeSelector>().is_err(), "{bad}");
        }
        let sel = ModeSelector::Indices(vec![1, 4]);
        assert_eq!(sel.to_string().parse::<ModeSelector>().unwrap(), sel);
    }

    #[test]
    fn predict_rejects_overflow() {
        let spec = LiftingSpec::new(1, 2).unwrap();
        let k = RealMatrix::from_diagonal(&v(&[1e200, 1e200]));
        let model = KoopmanModel::new(k, spec).unwrap();
        let err = predict_states(&model, &v(&[1.0]), 5).unwrap_err();
        assert!(matches!(err, Error::NumericalOverflow { step: 2, .. }));
    }
}
