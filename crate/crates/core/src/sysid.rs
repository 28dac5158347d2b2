//! Least-squares identification of `x_{t+1} = A x_t (+ B u_t)` from
//! trajectory data, and SVD reduction of high-dimensional frame sequences.

use nalgebra::SVD;

use crate::error::{Error, Result};
use crate::matrix::{RealMatrix, RealVector};

/// Relative singular-value cutoff for the pseudoinverse.
pub const PINV_RCOND: f64 = 1e-12;

/// One recorded trajectory. `inputs` is empty for autonomous data and
/// otherwise holds one input per transition (`states.len() - 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<RealVector>,
    pub inputs: Vec<RealVector>,
}

impl Trajectory {
    pub fn autonomous(states: Vec<RealVector>) -> Self {
        Self {
            states,
            inputs: Vec::new(),
        }
    }

    pub fn controlled(states: Vec<RealVector>, inputs: Vec<RealVector>) -> Self {
        Self { states, inputs }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    state_dim: usize,
    input_dim: usize,
    trajectories: Vec<Trajectory>,
}

impl TrajectoryDataset {
    /// Validates dimensions and lengths of every trajectory.
    pub fn new(state_dim: usize, input_dim: usize, trajectories: Vec<Trajectory>) -> Result<Self> {
        if state_dim == 0 {
            return Err(Error::dims("state dimension must be positive"));
        }
        for (j, traj) in trajectories.iter().enumerate() {
            if traj.states.len() < 2 {
                return Err(Error::dims(format!(
                    "trajectory {j} has {} states, at least 2 required",
                    traj.states.len()
                )));
            }
            if let Some((t, x)) = traj
                .states
                .iter()
                .enumerate()
                .find(|(_, x)| x.len() != state_dim)
            {
                return Err(Error::dims(format!(
                    "trajectory {j} step {t}: state has dimension {}, expected {state_dim}",
                    x.len()
                )));
            }
            if traj.states.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFinite(format!("trajectory {j} states")));
            }
            let expected_inputs = if input_dim == 0 {
                0
            } else {
                traj.states.len() - 1
            };
            if traj.inputs.len() != expected_inputs {
                return Err(Error::dims(format!(
                    "trajectory {j} has {} inputs, expected {expected_inputs}",
                    traj.inputs.len()
                )));
            }
            if let Some((t, u)) = traj
                .inputs
                .iter()
                .enumerate()
                .find(|(_, u)| u.len() != input_dim)
            {
                return Err(Error::dims(format!(
                    "trajectory {j} step {t}: input has dimension {}, expected {input_dim}",
                    u.len()
                )));
            }
            if traj.inputs.iter().any(|u| u.iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFinite(format!("trajectory {j} inputs")));
            }
        }
        Ok(Self {
            state_dim,
            input_dim,
            trajectories,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn is_controlled(&self) -> bool {
        self.input_dim > 0
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn into_trajectories(self) -> Vec<Trajectory> {
        self.trajectories
    }

    /// Total number of transitions `Σ (T_j − 1)`.
    pub fn num_pairs(&self) -> usize {
        self.trajectories.iter().map(|t| t.len() - 1).sum()
    }
}

/// Column `k` of `y` is the within-trajectory successor of column `k` of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrices {
    pub x: RealMatrix,
    pub y: RealMatrix,
    pub u: Option<RealMatrix>,
}

pub fn build_data_matrices(dataset: &TrajectoryDataset) -> Result<DataMatrices> {
    let n = dataset.state_dim();
    let m = dataset.input_dim();
    let cols = dataset.num_pairs();
    let mut x = RealMatrix::zeros(n, cols);
    let mut y = RealMatrix::zeros(n, cols);
    let mut u = (m > 0).then(|| RealMatrix::zeros(m, cols));
    let mut k = 0;
    for traj in dataset.trajectories() {
        for t in 0..traj.len() - 1 {
            x.set_column(k, &traj.states[t]);
            y.set_column(k, &traj.states[t + 1]);
            if let Some(u) = u.as_mut() {
                u.set_column(k, &traj.inputs[t]);
            }
            k += 1;
        }
    }
    Ok(DataMatrices { x, y, u })
}

/// Minimum-Frobenius-norm solution of `min_Θ ‖Y − Θ X‖_F`, i.e. `Θ = Y X⁺`.
///
/// `X⁺` comes from a thin SVD of the regressor with singular values below
/// `PINV_RCOND · σ_max` treated as zero.
pub fn solve_least_squares(regressor: &RealMatrix, targets: &RealMatrix) -> Result<RealMatrix> {
    if regressor.ncols() != targets.ncols() {
        return Err(Error::dims(format!(
            "regressor has {} columns, targets {}",
            regressor.ncols(),
            targets.ncols()
        )));
    }
    if regressor.ncols() == 0 {
        return Err(Error::EmptyData("no regression samples".into()));
    }
    let svd = SVD::try_new(regressor.clone(), true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::SingularMatrix("regressor SVD did not converge".into()))?;
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => unreachable!("SVD requested with both factors"),
    };
    let sigma = svd.singular_values;
    let cutoff = PINV_RCOND * sigma.max();
    let mut yv = targets * v_t.transpose();
    for (j, s) in sigma.iter().enumerate() {
        let inv = if *s > cutoff && *s > 0.0 {
            1.0 / s
        } else {
            0.0
        };
        yv.column_mut(j).scale_mut(inv);
    }
    Ok(yv * u.transpose())
}

/// `‖Θ (X Xᵀ) − Y Xᵀ‖_F`, zero at any least-squares minimizer.
pub fn normal_equation_residual(theta: &RealMatrix, x: &RealMatrix, y: &RealMatrix) -> f64 {
    let xxt = x * x.transpose();
    let yxt = y * x.transpose();
    (theta * xxt - yxt).norm()
}

/// `‖Y − Θ X‖_F²`.
pub fn ls_objective(theta: &RealMatrix, x: &RealMatrix, y: &RealMatrix) -> f64 {
    (y - theta * x).norm_squared()
}

/// Unconstrained least-squares estimate of `A` from autonomous data.
pub fn fit_ls(dataset: &TrajectoryDataset) -> Result<RealMatrix> {
    if dataset.is_controlled() {
        return Err(Error::InvalidArgument(
            "dataset has inputs; use fit_ls_controlled".into(),
        ));
    }
    if dataset.num_pairs() == 0 {
        return Err(Error::EmptyData("dataset has no transitions".into()));
    }
    let dm = build_data_matrices(dataset)?;
    solve_least_squares(&dm.x, &dm.y)
}

/// Joint least-squares estimate of `(A, B)` using the stacked regressor `[X; U]`.
pub fn fit_ls_controlled(dataset: &TrajectoryDataset) -> Result<(RealMatrix, RealMatrix)> {
    if !dataset.is_controlled() {
        return Err(Error::dims("dataset has no inputs"));
    }
    if dataset.num_pairs() == 0 {
        return Err(Error::EmptyData("dataset has no transitions".into()));
    }
    let n = dataset.state_dim();
    let m = dataset.input_dim();
    let dm = build_data_matrices(dataset)?;
    let u = dm.u.as_ref().expect("controlled dataset has inputs");
    let mut reg = RealMatrix::zeros(n + m, dm.x.ncols());
    reg.rows_mut(0, n).copy_from(&dm.x);
    reg.rows_mut(n, m).copy_from(u);
    let theta = solve_least_squares(&reg, &dm.y)?;
    Ok((
        theta.columns(0, n).into_owned(),
        theta.columns(n, m).into_owned(),
    ))
}

/// Mean-centered rank-`r` SVD basis of a frame sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdBasis {
    pub mean: RealVector,
    /// `d × r`, orthonormal columns.
    pub basis: RealMatrix,
    /// Non-increasing.
    pub singular_values: Vec<f64>,
}

impl SvdBasis {
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn frame_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// `basisᵀ (frame − mean)`.
    pub fn project(&self, frame: &RealVector) -> Result<RealVector> {
        if frame.len() != self.frame_dim() {
            return Err(Error::dims(format!(
                "frame has dimension {}, basis expects {}",
                frame.len(),
                self.frame_dim()
            )));
        }
        Ok(self.basis.tr_mul(&(frame - &self.mean)))
    }
}

pub fn svd_reduce(frames: &[RealVector], r: usize) -> Result<(SvdBasis, Vec<RealVector>)> {
    let t = frames.len();
    if t < 2 {
        return Err(Error::TooShort {
            index: 0,
            len: t,
            min: 2,
        });
    }
    let d = frames[0].len();
    if let Some(k) = frames.iter().position(|f| f.len() != d) {
        return Err(Error::dims(format!(
            "frame {k} has dimension {}, expected {d}",
            frames[k].len()
        )));
    }
    if frames.iter().any(|f| f.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("frames".into()));
    }
    let max = d.min(t);
    if r == 0 || r > max {
        return Err(Error::RankTooLarge { requested: r, max });
    }

    let mut mean = RealVector::zeros(d);
    for f in frames {
        mean += f;
    }
    mean /= t as f64;
    let centered = RealMatrix::from_fn(d, t, |i, j| frames[j][i] - mean[i]);
    let svd = SVD::try_new(centered, true, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::SingularMatrix("frame SVD did not converge".into()))?;
    let u = svd.u.expect("left singular vectors requested");
    let basis = u.columns(0, r).into_owned();
    let singular_values = svd.singular_values.iter().take(r).copied().collect();
    let out = SvdBasis {
        mean,
        basis,
        singular_values,
    };
    let reduced = frames
        .iter()
        .map(|f| out.project(f))
        .collect::<Result<Vec<_>>>()?;
    Ok((out, reduced))
}

/// Inverse of [`svd_reduce`]: `mean + basis · z` per step.
pub fn svd_lift(basis: &SvdBasis, reduced: &[RealVector]) -> Result<Vec<RealVector>> {
    reduced
        .iter()
        .enumerate()
        .map(|(k, z)| {
            if z.len() != basis.rank() {
                return Err(Error::dims(format!(
                    "reduced state {k} has dimension {}, basis rank is {}",
                    z.len(),
                    basis.rank()
                )));
            }
            Ok(&basis.mean + &basis.basis * z)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(xs: &[f64]) -> RealVector {
        RealVector::from_column_slice(xs)
    }

    #[test]
    fn single_trajectory_matrices() {
        let (a, b, c) = (v(&[1.0, 2.0]), v(&[3.0, 4.0]), v(&[5.0, 6.0]));
        let ds = TrajectoryDataset::new(
            2,
            0,
            vec![Trajectory::autonomous(vec![
                a.clone(),
                b.clone(),
                c.clone(),
            ])],
        )
        .unwrap();
        let dm = build_data_matrices(&ds).unwrap();
        assert_eq!(dm.x, RealMatrix::from_columns(&[a, b.clone()]));
        assert_eq!(dm.y, RealMatrix::from_columns(&[b, c]));
        assert!(dm.u.is_none());
    }

    #[test]
    fn two_trajectories_stack_in_order() {
        let (a, b, c, d) = (v(&[1.0]), v(&[2.0]), v(&[3.0]), v(&[4.0]));
        let ds = TrajectoryDataset::new(
            1,
            0,
            vec![
                Trajectory::autonomous(vec![a.clone(), b.clone()]),
                Trajectory::autonomous(vec![c.clone(), d.clone()]),
            ],
        )
        .unwrap();
        let dm = build_data_matrices(&ds).unwrap();
        assert_eq!(dm.x, RealMatrix::from_columns(&[a, c]));
        assert_eq!(dm.y, RealMatrix::from_columns(&[b, d]));
    }

    #[test]
    fn length_one_trajectory_rejected() {
        let err = TrajectoryDataset::new(1, 0, vec![Trajectory::autonomous(vec![v(&[1.0])])])
            .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn ragged_state_rejected() {
        let err = TrajectoryDataset::new(
            2,
            0,
            vec![Trajectory::autonomous(vec![v(&[1.0, 2.0]), v(&[1.0])])],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn single_pair_minimum_norm() {
        // Y Xᵀ (X Xᵀ)⁺ with X = e₁, Y = 0 is the zero matrix.
        let ds = TrajectoryDataset::new(
            2,
            0,
            vec![Trajectory::autonomous(vec![v(&[1.0, 0.0]), v(&[0.0, 0.0])])],
        )
        .unwrap();
        assert_eq!(fit_ls(&ds).unwrap(), RealMatrix::zeros(2, 2));
    }

    #[test]
    fn identity_dynamics() {
        let trajs = (0..3)
            .map(|i| {
                let mut e = RealVector::zeros(3);
                e[i] = 1.0;
                Trajectory::autonomous(vec![e.clone(), e])
            })
            .collect();
        let ds = TrajectoryDataset::new(3, 0, trajs).unwrap();
        let a = fit_ls(&ds).unwrap();
        assert_abs_diff_eq!(
            (a - RealMatrix::identity(3, 3)).norm(),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn empty_dataset_errors() {
        let ds = TrajectoryDataset::new(2, 0, vec![]).unwrap();
        assert!(matches!(fit_ls(&ds), Err(Error::EmptyData(_))));
    }

    #[test]
    fn zero_inputs_give_zero_b() {
        let a_true = RealMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.0, 0.8]);
        let mut trajs = Vec::new();
        let mut auto = Vec::new();
        for s in [[1.0, 0.0], [0.0, 1.0], [1.0, -1.0]] {
            let mut xs = vec![v(&s)];
            for _ in 0..4 {
                let next = &a_true * xs.last().unwrap();
                xs.push(next);
            }
            auto.push(Trajectory::autonomous(xs.clone()));
            trajs.push(Trajectory::controlled(xs, vec![v(&[0.0]); 4]));
        }
        let ds = TrajectoryDataset::new(2, 1, trajs).unwrap();
        let (a, b) = fit_ls_controlled(&ds).unwrap();
        let a_auto = fit_ls(&TrajectoryDataset::new(2, 0, auto).unwrap()).unwrap();
        assert_abs_diff_eq!((a - a_auto).norm(), 0.0, epsilon = 1e-12);
        assert_eq!(b, RealMatrix::zeros(2, 1));
    }

    #[test]
    fn colinear_inputs_stay_finite() {
        let mut trajs = Vec::new();
        for s in [1.0, -2.0, 0.5] {
            let xs: Vec<_> = (0..5).map(|k| v(&[s * 0.5f64.powi(k)])).collect();
            // u_t = 2 x_t
            let us: Vec<_> = xs[..4].iter().map(|x| x * 2.0).collect();
            trajs.push(Trajectory::controlled(xs, us));
        }
        let ds = TrajectoryDataset::new(1, 1, trajs).unwrap();
        let (a, b) = fit_ls_controlled(&ds).unwrap();
        assert!(a.iter().chain(b.iter()).all(|x| x.is_finite()));
        // Minimum-norm split of the 0.5 gain along the direction (1, 2).
        assert_abs_diff_eq!(a[(0, 0)], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(b[(0, 0)], 0.2, epsilon = 1e-12);
    }

    #[test]
    fn svd_exact_subspace() {
        let mean = v(&[1.0, 2.0, 3.0, 4.0]);
        let d1 = v(&[1.0, 0.0, 1.0, 0.0]);
        let d2 = v(&[0.0, 1.0, 0.0, -1.0]);
        let frames: Vec<_> = (0..10)
            .map(|k| {
                let t = k as f64;
                &mean + &d1 * t.sin() + &d2 * (0.3 * t).cos()
            })
            .collect();
        let (basis, reduced) = svd_reduce(&frames, 2).unwrap();
        let lifted = svd_lift(&basis, &reduced).unwrap();
        for (f, g) in frames.iter().zip(&lifted) {
            assert!((f - g).norm() <= 1e-10);
        }
        let gram = basis.basis.tr_mul(&basis.basis);
        assert_abs_diff_eq!(
            (gram - RealMatrix::identity(2, 2)).norm(),
            0.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn svd_lift_edges() {
        let frames: Vec<_> = (0..5)
            .map(|k| v(&[k as f64, (k * k) as f64, 1.0]))
            .collect();
        let (basis, _) = svd_reduce(&frames, 2).unwrap();
        let lifted = svd_lift(&basis, &[RealVector::zeros(2)]).unwrap();
        assert_eq!(lifted[0], basis.mean);
        let e1 = svd_lift(&basis, &[v(&[0.0, 1.0])]).unwrap();
        assert_abs_diff_eq!(
            (&e1[0] - (&basis.mean + basis.basis.column(1))).norm(),
            0.0,
            epsilon = 1e-15
        );
        assert!(matches!(
            svd_lift(&basis, &[v(&[1.0])]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn svd_rank_too_large() {
        let frames: Vec<_> = (0..3).map(|k| v(&[k as f64, 1.0])).collect();
        assert!(matches!(
            svd_reduce(&frames, 3),
            Err(Error::RankTooLarge { .. })
        ));
        assert!(matches!(
            svd_reduce(&frames, 0),
            Err(Error::RankTooLarge { .. })
        ));
    }
}
