//! Dense matrix utilities: eigendecomposition of real square matrices,
//! spectral queries and real reconstruction from a complex spectrum.
//!
//! Eigenvalues come from the real Schur form `A = Q T Qᵀ`. Eigenvectors are
//! obtained by back substitution on the quasi-triangular `T` (one complex
//! solve per eigenvalue, O(n²) each) and mapped back through `Q`, so the
//! whole decomposition stays O(n³). Complex eigenvalues are produced from
//! 2x2 blocks of `T`, which makes conjugate pairs exact: the partner of
//! `(λ, v)` is stored as `(λ̄, v̄)` bit for bit.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::schur;

pub type RealMatrix = DMatrix<f64>;
pub type ComplexMatrix = DMatrix<Complex64>;
pub type RealVector = DVector<f64>;

/// Modal condition numbers above this mark the matrix as numerically defective.
pub const DEFECTIVE_COND: f64 = 1e12;

/// Relative tolerance for the imaginary residue left by [`reconstruct`].
pub const IMAG_RESIDUE_TOL: f64 = 1e-6;

const ZERO_COMPONENT: f64 = 1e-10;

/// Eigenvalues and eigenvectors of a real square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    eigenvalues: Vec<Complex64>,
    modal: ComplexMatrix,
    cond_modal: f64,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    /// Column `i` is the unit eigenvector for `eigenvalues()[i]`.
    pub fn modal(&self) -> &ComplexMatrix {
        &self.modal
    }

    /// 2-norm condition number of the modal matrix.
    pub fn cond_modal(&self) -> f64 {
        self.cond_modal
    }

    pub fn is_defective(&self) -> bool {
        !(self.cond_modal <= DEFECTIVE_COND)
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|l| l.norm())
            .fold(0.0, f64::max)
    }

    /// Index of the conjugate partner of eigenvalue `i`, `None` for real eigenvalues.
    pub fn conjugate_partner(&self, i: usize) -> Option<usize> {
        let im = self.eigenvalues[i].im;
        match im.partial_cmp(&0.0) {
            Some(Ordering::Greater) => Some(i + 1),
            Some(Ordering::Less) => Some(i - 1),
            _ => None,
        }
    }

    /// Same modal matrix, new eigenvalues.
    ///
    /// Real slots must stay real and conjugate slots must stay conjugate
    /// (with the positive-imaginary member first), otherwise the
    /// reconstruction would not be a real matrix.
    pub fn with_eigenvalues(&self, eigenvalues: Vec<Complex64>) -> Result<Spectrum> {
        if eigenvalues.len() != self.dim() {
            return Err(Error::dims(format!(
                "expected {} eigenvalues, got {}",
                self.dim(),
                eigenvalues.len()
            )));
        }
        for (i, l) in eigenvalues.iter().enumerate() {
            if !(l.re.is_finite() && l.im.is_finite()) {
                return Err(Error::NonFinite(format!("eigenvalue {i}")));
            }
            match self.conjugate_partner(i) {
                None if l.im != 0.0 => {
                    return Err(Error::InvalidArgument(format!(
                        "eigenvalue {i} belongs to a real eigenvector and must stay real"
                    )))
                }
                Some(j) if j > i && (l.im <= 0.0 || eigenvalues[j] != l.conj()) => {
                    return Err(Error::InvalidArgument(format!(
                        "eigenvalues {i} and {j} must remain a conjugate pair"
                    )))
                }
                _ => {}
            }
        }
        Ok(Spectrum {
            eigenvalues,
            modal: self.modal.clone(),
            cond_modal: self.cond_modal,
        })
    }

    /// Largest eigenpair residual `‖A v − λ v‖₂` against `a`.
    pub fn max_residual(&self, a: &RealMatrix) -> f64 {
        let ac = to_complex(a);
        let av = &ac * &self.modal;
        (0..self.dim())
            .map(|i| (av.column(i) - self.modal.column(i) * self.eigenvalues[i]).norm())
            .fold(0.0, f64::max)
    }
}

pub fn to_complex(a: &RealMatrix) -> ComplexMatrix {
    a.map(|x| Complex64::new(x, 0.0))
}

pub fn ensure_square(a: &RealMatrix, what: &str) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::dims(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() == 0 {
        return Err(Error::dims(format!("{what} is empty")));
    }
    Ok(a.nrows())
}

pub fn ensure_finite(a: &RealMatrix, what: &str) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Induced 1-norm (maximum absolute column sum).
pub fn norm1(a: &RealMatrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Ratio of extreme singular values; infinite when singular.
pub fn condition_number(m: &ComplexMatrix) -> f64 {
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

struct RealSchur {
    q: RealMatrix,
    t: RealMatrix,
}

fn real_schur(a: &RealMatrix) -> Result<RealSchur> {
    let n = a.nrows();
    let finite = |(q, t): (RealMatrix, RealMatrix)| {
        t.iter()
            .all(|x| x.is_finite())
            .then_some(RealSchur { q, t })
    };
    if let Some(s) = schur::schur(a).and_then(finite) {
        return Ok(s);
    }
    // Retry on a few fixed random orthogonal similarities.
    let mut rng = ChaCha8Rng::seed_from_u64(0x05ee_d5c4_u64);
    for _ in 0..3 {
        let g = RealMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
        let p = g.qr().q();
        if let Some(RealSchur { q, t }) = schur::schur(&(p.transpose() * a * &p)).and_then(finite) {
            return Ok(RealSchur { q: p * q, t });
        }
    }
    Err(Error::EigFailure(n))
}

/// A 1x1 or 2x2 diagonal block of the quasi-triangular Schur factor.
#[derive(Clone, Copy)]
struct Block {
    start: usize,
    size: usize,
}

fn schur_blocks(t: &RealMatrix) -> Vec<Block> {
    let n = t.nrows();
    let mut blocks = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            blocks.push(Block { start: i, size: 2 });
            i += 2;
        } else {
            blocks.push(Block { start: i, size: 1 });
            i += 1;
        }
    }
    blocks
}

/// Eigenvalue slots: a real eigenvalue, or a conjugate pair represented by
/// its positive-imaginary member. `offset` is the position inside the block.
#[derive(Clone, Copy)]
struct Slot {
    value: Complex64,
    block: Block,
    offset: usize,
}

fn block_slots(t: &RealMatrix, blocks: &[Block]) -> Vec<Slot> {
    let mut slots = Vec::with_capacity(t.nrows());
    for &block in blocks {
        let s = block.start;
        if block.size == 1 {
            slots.push(Slot {
                value: Complex64::new(t[(s, s)], 0.0),
                block,
                offset: 0,
            });
            continue;
        }
        let (a, b, c, d) = (t[(s, s)], t[(s, s + 1)], t[(s + 1, s)], t[(s + 1, s + 1)]);
        let half_tr = 0.5 * (a + d);
        let disc = 0.25 * (a - d) * (a - d) + b * c;
        if disc < 0.0 {
            let im = (-disc).sqrt();
            slots.push(Slot {
                value: Complex64::new(half_tr, im),
                block,
                offset: 0,
            });
        } else {
            let r = disc.sqrt();
            slots.push(Slot {
                value: Complex64::new(half_tr + r, 0.0),
                block,
                offset: 0,
            });
            slots.push(Slot {
                value: Complex64::new(half_tr - r, 0.0),
                block,
                offset: 1,
            });
        }
    }
    slots
}

/// Descending magnitude, then descending real part, then descending imaginary part.
fn eig_order(a: &Complex64, b: &Complex64) -> Ordering {
    b.norm()
        .total_cmp(&a.norm())
        .then(b.re.total_cmp(&a.re))
        .then(b.im.total_cmp(&a.im))
}

fn sorted_slots(t: &RealMatrix) -> Vec<Slot> {
    let blocks = schur_blocks(t);
    let mut slots = block_slots(t, &blocks);
    slots.sort_by(|x, y| eig_order(&x.value, &y.value));
    slots
}

/// Solves `(T − λI) y = 0` by back substitution from the block holding `λ`.
fn schur_eigenvector(t: &RealMatrix, blocks: &[Block], slot: &Slot, smin: f64) -> Vec<Complex64> {
    const BIG: f64 = 1e150;
    let n = t.nrows();
    let lambda = slot.value;
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    let s = slot.block.start;
    let end = s + slot.block.size;

    if slot.block.size == 1 {
        y[s] = Complex64::new(1.0, 0.0);
    } else {
        let a = Complex64::new(t[(s, s)], 0.0) - lambda;
        let b = Complex64::new(t[(s, s + 1)], 0.0);
        let c = Complex64::new(t[(s + 1, s)], 0.0);
        let d = Complex64::new(t[(s + 1, s + 1)], 0.0) - lambda;
        let r1 = a.norm() + b.norm();
        let r2 = c.norm() + d.norm();
        if r1 == 0.0 && r2 == 0.0 {
            y[s + slot.offset] = Complex64::new(1.0, 0.0);
        } else if r1 >= r2 {
            y[s] = b;
            y[s + 1] = -a;
        } else {
            y[s] = d;
            y[s + 1] = -c;
        }
    }

    let bi = blocks
        .iter()
        .position(|b| b.start == s)
        .expect("slot block is a Schur block");
    for blk in blocks[..bi].iter().rev() {
        let i = blk.start;
        let rhs = |row: usize, y: &[Complex64]| -> Complex64 {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in (blk.start + blk.size)..end {
                acc += y[k] * t[(row, k)];
            }
            -acc
        };
        if blk.size == 1 {
            let mut den = Complex64::new(t[(i, i)], 0.0) - lambda;
            if den.norm() < smin {
                den = Complex64::new(smin, 0.0);
            }
            y[i] = cdiv(rhs(i, &y), den);
        } else {
            let r0 = rhs(i, &y);
            let r1 = rhs(i + 1, &y);
            let m = [
                [
                    Complex64::new(t[(i, i)], 0.0) - lambda,
                    Complex64::new(t[(i, i + 1)], 0.0),
                ],
                [
                    Complex64::new(t[(i + 1, i)], 0.0),
                    Complex64::new(t[(i + 1, i + 1)], 0.0) - lambda,
                ],
            ];
            let (y0, y1) = solve_2x2(m, [r0, r1], smin);
            y[i] = y0;
            y[i + 1] = y1;
        }
        let peak = y[i..end].iter().map(|v| v.norm()).fold(0.0, f64::max);
        if peak > BIG {
            let scale = 1.0 / peak;
            for v in &mut y[i..end] {
                *v *= scale;
            }
        }
    }
    y
}

/// Smith's complex division; avoids forming `|b|²`, which underflows for tiny pivots.
fn cdiv(a: Complex64, b: Complex64) -> Complex64 {
    if b.re.abs() >= b.im.abs() {
        let r = b.im / b.re;
        let d = b.re + b.im * r;
        Complex64::new((a.re + a.im * r) / d, (a.im - a.re * r) / d)
    } else {
        let r = b.re / b.im;
        let d = b.re * r + b.im;
        Complex64::new((a.re * r + a.im) / d, (a.im * r - a.re) / d)
    }
}

/// Gaussian elimination with partial pivoting; tiny pivots are replaced by `smin`.
fn solve_2x2(m: [[Complex64; 2]; 2], r: [Complex64; 2], smin: f64) -> (Complex64, Complex64) {
    let (mut m, mut r) = (m, r);
    if m[1][0].norm() > m[0][0].norm() {
        m.swap(0, 1);
        r.swap(0, 1);
    }
    let mut p0 = m[0][0];
    if p0.norm() < smin {
        p0 = Complex64::new(smin, 0.0);
    }
    let l = cdiv(m[1][0], p0);
    let mut p1 = m[1][1] - l * m[0][1];
    let r1 = r[1] - l * r[0];
    if p1.norm() < smin {
        p1 = Complex64::new(smin, 0.0);
    }
    let y1 = cdiv(r1, p1);
    let y0 = cdiv(r[0] - m[0][1] * y1, p0);
    (y0, y1)
}

/// Unit 2-norm with the first non-negligible component rotated onto the
/// positive real axis.
fn normalize(v: &mut [Complex64]) {
    let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return;
    }
    for c in v.iter_mut() {
        *c /= norm;
    }
    if let Some(pivot) = v.iter().find(|c| c.norm() > ZERO_COMPONENT).copied() {
        let phase = pivot.conj() / pivot.norm();
        for c in v.iter_mut() {
            *c *= phase;
        }
    }
}

/// Full eigendecomposition of a real square matrix.
///
/// Eigenvalues are ordered by descending magnitude, then descending real
/// part, then descending imaginary part; a conjugate pair is stored
/// adjacently with the positive-imaginary member first. A Spectrum whose
/// `cond_modal` exceeds [`DEFECTIVE_COND`] is returned normally and flagged
/// through [`Spectrum::is_defective`].
pub fn eigendecompose(a: &RealMatrix) -> Result<Spectrum> {
    let n = ensure_square(a, "matrix")?;
    ensure_finite(a, "matrix")?;

    let RealSchur { q, t } = real_schur(a)?;
    let blocks = schur_blocks(&t);
    let slots = sorted_slots(&t);
    let smin = (f64::EPSILON * t.norm()).max(f64::MIN_POSITIVE / f64::EPSILON);

    let mut eigenvalues = Vec::with_capacity(n);
    let mut y = ComplexMatrix::zeros(n, n);
    let mut col = 0;
    for slot in &slots {
        let ys = schur_eigenvector(&t, &blocks, slot, smin);
        for (r, v) in ys.iter().enumerate() {
            y[(r, col)] = *v;
        }
        eigenvalues.push(slot.value);
        col += 1;
        if slot.value.im > 0.0 {
            eigenvalues.push(slot.value.conj());
            col += 1;
        }
    }
    debug_assert_eq!(col, n);

    let mut modal = to_complex(&q) * y;
    let mut i = 0;
    while i < n {
        let mut v: Vec<Complex64> = modal.column(i).iter().copied().collect();
        if eigenvalues[i].im == 0.0 {
            for c in v.iter_mut() {
                c.im = 0.0;
            }
        }
        normalize(&mut v);
        for (r, c) in v.iter().enumerate() {
            modal[(r, i)] = *c;
        }
        if eigenvalues[i].im > 0.0 {
            for (r, c) in v.iter().enumerate() {
                modal[(r, i + 1)] = c.conj();
            }
            i += 2;
        } else {
            i += 1;
        }
    }

    if modal
        .iter()
        .any(|c| !(c.re.is_finite() && c.im.is_finite()))
    {
        return Err(Error::EigFailure(n));
    }
    let cond_modal = condition_number(&modal);
    let spectrum = Spectrum {
        eigenvalues,
        modal,
        cond_modal,
    };

    let tol = 1e-8 * n as f64 * a.norm();
    if spectrum.max_residual(a) > tol {
        return Err(Error::EigFailure(n));
    }
    Ok(spectrum)
}

/// Eigenvalues only, in the same order as [`eigendecompose`].
pub fn eigenvalues(a: &RealMatrix) -> Result<Vec<Complex64>> {
    ensure_square(a, "matrix")?;
    ensure_finite(a, "matrix")?;
    let RealSchur { t, .. } = real_schur(a)?;
    let mut out = Vec::with_capacity(a.nrows());
    for slot in sorted_slots(&t) {
        out.push(slot.value);
        if slot.value.im > 0.0 {
            out.push(slot.value.conj());
        }
    }
    Ok(out)
}

/// Real part of `M · diag(λ) · M⁻¹`.
///
/// Fails with [`Error::NonRealResult`] when the discarded imaginary part is
/// not negligible, which happens only if the conjugate structure is broken.
pub fn reconstruct(spectrum: &Spectrum) -> Result<RealMatrix> {
    let n = spectrum.dim();
    let inv = spectrum
        .modal
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularMatrix("modal matrix".into()))?;
    let mut scaled = spectrum.modal.clone();
    for j in 0..n {
        let l = spectrum.eigenvalues[j];
        for c in scaled.column_mut(j).iter_mut() {
            *c *= l;
        }
    }
    let full = scaled * inv;
    let re = full.map(|c| c.re);
    let residue = full.map(|c| c.im).norm();
    let allowed = IMAG_RESIDUE_TOL * (re.norm() + 1.0);
    if !(residue <= allowed) {
        return Err(Error::NonRealResult { residue, allowed });
    }
    ensure_finite(&re, "reconstructed matrix")?;
    Ok(re)
}

/// `max |λᵢ(A)|`.
pub fn spectral_radius(a: &RealMatrix) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|l| l.norm()).fold(0.0, f64::max))
}

/// `ρ(A) ≤ 1 − margin` up to a 1e-10 allowance for rounding.
pub fn is_schur_stable(a: &RealMatrix, margin: f64) -> Result<bool> {
    Ok(spectral_radius(a)? <= 1.0 - margin + 1e-10)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn random(n: usize, seed: u64) -> RealMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RealMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn diagonal_spectrum() {
        let a = RealMatrix::from_diagonal(&RealVector::from_vec(vec![0.5, -0.25]));
        let s = eigendecompose(&a).unwrap();
        assert_eq!(
            s.eigenvalues(),
            &[Complex64::new(0.5, 0.0), Complex64::new(-0.25, 0.0)]
        );
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(s.modal()[(i, j)].norm(), expect, epsilon = 1e-14);
            }
        }
        assert!(!s.is_defective());
    }

    #[test]
    fn scaled_rotation_has_imaginary_pair() {
        // λ² + 2.25 = 0
        let a = RealMatrix::from_row_slice(2, 2, &[0.0, -1.5, 1.5, 0.0]);
        let s = eigendecompose(&a).unwrap();
        let l = s.eigenvalues();
        assert_abs_diff_eq!(l[0].re, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(l[0].im, 1.5, epsilon = 1e-14);
        assert_eq!(l[1], l[0].conj());
        assert_eq!(s.conjugate_partner(0), Some(1));
        assert_eq!(s.conjugate_partner(1), Some(0));
        assert_eq!(s.modal().column(1), s.modal().column(0).map(|c| c.conj()));
    }

    #[test]
    fn jordan_block_is_flagged_defective() {
        let a = RealMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let s = eigendecompose(&a).unwrap();
        assert!(s.is_defective(), "cond_modal = {}", s.cond_modal());
    }

    #[test]
    fn reconstruct_diagonal_round_trip() {
        let a = RealMatrix::from_diagonal(&RealVector::from_vec(vec![0.5, -0.25]));
        let r = reconstruct(&eigendecompose(&a).unwrap()).unwrap();
        assert_abs_diff_eq!((r - a).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn reconstruct_unit_rotation() {
        let a = RealMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let s = eigendecompose(&a).unwrap();
        let expect = RealMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert_abs_diff_eq!(
            (reconstruct(&s).unwrap() - expect).norm(),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn reconstruct_random_8x8() {
        for seed in 0..20 {
            let a = random(8, seed);
            let s = eigendecompose(&a).unwrap();
            let r = reconstruct(&s).unwrap();
            assert!((r - &a).norm() <= 1e-8 * a.norm(), "seed {seed}");
        }
    }

    #[test]
    fn broken_pairing_is_rejected() {
        let a = RealMatrix::from_row_slice(2, 2, &[0.0, -1.5, 1.5, 0.0]);
        let s = eigendecompose(&a).unwrap();
        let bad = vec![Complex64::new(0.0, 1.0), Complex64::new(0.0, 1.0)];
        assert!(s.with_eigenvalues(bad).is_err());
        let real_slot = eigendecompose(&RealMatrix::identity(2, 2)).unwrap();
        assert!(real_slot
            .with_eigenvalues(vec![Complex64::new(1.0, 0.1); 2])
            .is_err());
    }

    #[test]
    fn radius_examples() {
        let a = RealMatrix::from_diagonal(&RealVector::from_vec(vec![0.3, -0.7]));
        assert_abs_diff_eq!(spectral_radius(&a).unwrap(), 0.7, epsilon = 1e-15);
        let rot = RealMatrix::from_row_slice(2, 2, &[0.0, -1.5, 1.5, 0.0]);
        assert_abs_diff_eq!(spectral_radius(&rot).unwrap(), 1.5, epsilon = 1e-14);
        assert_eq!(spectral_radius(&RealMatrix::identity(7, 7)).unwrap(), 1.0);
    }

    #[test]
    fn schur_stability_boundary() {
        let d = |x: f64| RealMatrix::from_element(1, 1, x);
        assert!(is_schur_stable(&d(0.99), 0.0).unwrap());
        assert!(is_schur_stable(&d(1.0), 0.0).unwrap());
        assert!(!is_schur_stable(&d(1.0), 1e-5).unwrap());
    }

    #[test]
    fn permutation_matrices_converge() {
        for n in [2, 3, 5, 8, 16] {
            let p = RealMatrix::from_fn(n, n, |i, j| if (i + 1) % n == j { 1.0 } else { 0.0 });
            let s = eigendecompose(&p).unwrap();
            for l in s.eigenvalues() {
                assert_abs_diff_eq!(l.norm(), 1.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn zero_and_scalar_matrices() {
        let z = RealMatrix::zeros(3, 3);
        let s = eigendecompose(&z).unwrap();
        assert!(s.eigenvalues().iter().all(|l| l.norm() == 0.0));
        assert_eq!(reconstruct(&s).unwrap(), z);
        let one = RealMatrix::from_element(1, 1, -2.0);
        assert_eq!(
            eigendecompose(&one).unwrap().eigenvalues(),
            &[Complex64::new(-2.0, 0.0)]
        );
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            eigendecompose(&RealMatrix::zeros(2, 3)),
            Err(Error::DimensionMismatch(_))
        ));
        let mut a = RealMatrix::identity(2, 2);
        a[(0, 1)] = f64::NAN;
        assert!(matches!(eigendecompose(&a), Err(Error::NonFinite(_))));
    }

    #[test]
    fn repeated_complex_pairs_stay_adjacent() {
        // Two copies of the same rotation block.
        let mut a = RealMatrix::zeros(4, 4);
        for k in [0, 2] {
            a[(k, k)] = 0.5;
            a[(k, k + 1)] = -0.5;
            a[(k + 1, k)] = 0.5;
            a[(k + 1, k + 1)] = 0.5;
        }
        a[(0, 2)] = 0.1;
        let s = eigendecompose(&a).unwrap();
        for i in (0..4).step_by(2) {
            assert!(s.eigenvalues()[i].im > 0.0);
            assert_eq!(s.eigenvalues()[i + 1], s.eigenvalues()[i].conj());
        }
    }
}
