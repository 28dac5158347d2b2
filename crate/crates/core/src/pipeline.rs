//! Fit → clip → rollout → evaluate glue shared by the command-line tool.

use crate::clip::{check_eps, clip_spectrum, LinearModel};
use crate::error::{Error, Result};
use crate::io::Model;
use crate::koopman::{clip_koopman, lift, KoopmanModel};
use crate::matrix::RealVector;
use crate::simeval::{
    moving_ratio, reconstruction_error_with, rollout, rollout_controlled, ErrorCurve, ErrorMetric,
    RolloutResult, DIVERGENCE_BOUND, MOVING_THRESHOLD,
};
use crate::sysid::{Trajectory, TrajectoryDataset};

pub fn clip_model(model: &Model, eps: f64) -> Result<Model> {
    check_eps(eps)?;
    Ok(match model {
        Model::Linear(m) => Model::Linear(m.clipped(eps)?),
        Model::Koopman(m) => Model::Koopman(clip_koopman(m, eps)?),
    })
}

/// Free rollout in state space. Controlled models run with zero input;
/// Koopman models run in the lifted space and are decoded.
pub fn predict(model: &Model, x0: &RealVector, horizon: usize) -> Result<RolloutResult> {
    match model {
        Model::Linear(m) => rollout(&m.a, x0, horizon, DIVERGENCE_BOUND),
        Model::Koopman(m) => predict_koopman(m, x0, horizon),
    }
}

fn predict_koopman(model: &KoopmanModel, x0: &RealVector, horizon: usize) -> Result<RolloutResult> {
    let z0 = lift(x0, &model.spec)?;
    let lifted = rollout(&model.k, &z0, horizon, DIVERGENCE_BOUND)?;
    let states = lifted.states.iter().map(|z| model.spec.decode(z)).collect();
    Ok(RolloutResult {
        states,
        diverged_at: lifted.diverged_at,
        max_norm: lifted.max_norm,
    })
}

/// Rollout from the first state of `traj`, driven by its recorded inputs
/// when the model is controlled.
pub fn predict_along(model: &Model, traj: &Trajectory, horizon: usize) -> Result<RolloutResult> {
    let x0 = traj
        .states
        .first()
        .ok_or_else(|| Error::EmptyData("empty trajectory".into()))?;
    match model {
        Model::Linear(LinearModel { a, b: Some(b), .. }) if !traj.inputs.is_empty() => {
            let steps = horizon.min(traj.inputs.len());
            rollout_controlled(a, b, x0, &traj.inputs[..steps])
        }
        _ => predict(model, x0, horizon),
    }
}

/// Turns rollouts into a dataset, dropping non-finite tail states.
pub fn rollouts_to_dataset(
    rollouts: &[RolloutResult],
    inputs: Option<&[Trajectory]>,
) -> Result<TrajectoryDataset> {
    let n = rollouts
        .first()
        .and_then(|r| r.states.first())
        .map(|x| x.len())
        .ok_or_else(|| Error::EmptyData("no rollouts".into()))?;
    let mut m = 0;
    let trajs = rollouts
        .iter()
        .enumerate()
        .map(|(j, r)| {
            let states: Vec<RealVector> = r
                .states
                .iter()
                .take_while(|x| x.iter().all(|v| v.is_finite()))
                .cloned()
                .collect();
            let inputs = match inputs.map(|ts| &ts[j]) {
                Some(t) if !t.inputs.is_empty() => {
                    m = t.inputs[0].len();
                    t.inputs[..states.len().saturating_sub(1)].to_vec()
                }
                _ => Vec::new(),
            };
            Trajectory { states, inputs }
        })
        .collect();
    TrajectoryDataset::new(n, m, trajs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Per-step error averaged over trajectories (common prefix).
    pub curve: ErrorCurve,
    /// `None` when some prediction has fewer than three frames.
    pub moving_ratio: Option<f64>,
    /// Earliest step at which any prediction left the divergence bound.
    pub diverged_at: Option<usize>,
}

/// Compares predictions with ground truth, trajectory by trajectory.
pub fn compare(predicted: &TrajectoryDataset, truth: &TrajectoryDataset) -> Result<Evaluation> {
    compare_with(predicted, truth, ErrorMetric::Mae)
}

pub fn compare_with(
    predicted: &TrajectoryDataset,
    truth: &TrajectoryDataset,
    metric: ErrorMetric,
) -> Result<Evaluation> {
    let (p, t) = (predicted.trajectories(), truth.trajectories());
    if p.len() != t.len() {
        return Err(Error::dims(format!(
            "{} predicted trajectories, {} true ones",
            p.len(),
            t.len()
        )));
    }
    if predicted.state_dim() != truth.state_dim() {
        return Err(Error::dims(format!(
            "predicted state dimension {}, true {}",
            predicted.state_dim(),
            truth.state_dim()
        )));
    }
    if p.is_empty() {
        return Err(Error::EmptyData("no trajectories to compare".into()));
    }
    let curves = p
        .iter()
        .zip(t)
        .map(|(p, t)| {
            let len = p.states.len().min(t.states.len());
            reconstruction_error_with(&p.states[..len], &t.states[..len], metric)
        })
        .collect::<Result<Vec<_>>>()?;
    let curve = ErrorCurve::average(&curves)?;
    let seqs: Vec<Vec<RealVector>> = p.iter().map(|tr| tr.states.clone()).collect();
    let moving_ratio = moving_ratio(&seqs, MOVING_THRESHOLD).ok();
    let diverged_at = p
        .iter()
        .filter_map(|tr| {
            tr.states
                .iter()
                .position(|x| !(x.norm() <= DIVERGENCE_BOUND))
        })
        .min();
    Ok(Evaluation {
        curve,
        moving_ratio,
        diverged_at,
    })
}

/// Predicts every trajectory of `truth` from its first state and scores it.
pub fn evaluate(model: &Model, truth: &TrajectoryDataset, horizon: usize) -> Result<Evaluation> {
    evaluate_with(model, truth, horizon, ErrorMetric::Mae)
}

pub fn evaluate_with(
    model: &Model,
    truth: &TrajectoryDataset,
    horizon: usize,
    metric: ErrorMetric,
) -> Result<Evaluation> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let rollouts = truth
        .trajectories()
        .iter()
        .map(|t| predict_along(model, t, horizon))
        .collect::<Result<Vec<_>>>()?;
    let mut eval = compare_with(
        &rollouts_to_dataset(&rollouts, Some(truth.trajectories()))?,
        truth,
        metric,
    )?;
    eval.diverged_at = rollouts.iter().filter_map(|r| r.diverged_at).min();
    Ok(eval)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    pub n_clipped: usize,
    pub radius_after: f64,
    pub summary_mean: f64,
    pub moving_ratio: Option<f64>,
    pub diverged_at: Option<usize>,
}

/// Clips `model` at every `eps` and evaluates each clipped model against `truth`.
pub fn sweep_eps(
    model: &Model,
    eps_values: &[f64],
    truth: &TrajectoryDataset,
    horizon: usize,
) -> Result<Vec<SweepRow>> {
    sweep_eps_with(model, eps_values, truth, horizon, ErrorMetric::Mae)
}

pub fn sweep_eps_with(
    model: &Model,
    eps_values: &[f64],
    truth: &TrajectoryDataset,
    horizon: usize,
    metric: ErrorMetric,
) -> Result<Vec<SweepRow>> {
    if eps_values.is_empty() {
        return Err(Error::InvalidArgument("no eps values".into()));
    }
    eps_values
        .iter()
        .map(|&eps| {
            let clipped = clip_model(model, eps)?;
            let report = clipped.clip_report().expect("clipping attaches a report");
            let eval = evaluate_with(&clipped, truth, horizon, metric)?;
            Ok(SweepRow {
                eps,
                n_clipped: report.n_clipped,
                radius_after: report.radius_after,
                summary_mean: eval.curve.summary_mean,
                moving_ratio: eval.moving_ratio,
                diverged_at: eval.diverged_at,
            })
        })
        .collect()
}

/// Spectral radius of the model's transition matrix after clipping at `eps`.
pub fn clipped_radius(model: &Model, eps: f64) -> Result<f64> {
    Ok(clip_spectrum(model.transition(), eps)?.1.radius_after)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_polynomial_benchmark, PolynomialSystem};
    use crate::koopman::{fit_koopman, LiftingSpec};
    use crate::matrix::RealMatrix;

    fn v(xs: &[f64]) -> RealVector {
        RealVector::from_column_slice(xs)
    }

    #[test]
    fn exact_model_has_zero_error() {
        let a = RealMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.9]);
        let model = Model::Linear(LinearModel::new(a.clone(), None).unwrap());
        let truth = rollout(&a, &v(&[1.0, -1.0]), 10, DIVERGENCE_BOUND).unwrap();
        let ds = TrajectoryDataset::new(2, 0, vec![Trajectory::autonomous(truth.states)]).unwrap();
        let eval = evaluate(&model, &ds, 10).unwrap();
        assert_eq!(eval.curve.per_step.len(), 11);
        assert_eq!(eval.curve.summary_mean, 0.0);
        assert_eq!(eval.diverged_at, None);
    }

    #[test]
    fn koopman_prediction_matches_simulation() {
        let bench = gen_polynomial_benchmark(1);
        let model =
            Model::Koopman(fit_koopman(&bench.dataset, &LiftingSpec::new(2, 2).unwrap()).unwrap());
        let x0 = v(&[0.7, -0.4]);
        let pred = predict(&model, &x0, 50).unwrap();
        let truth = PolynomialSystem::default().simulate(&x0, 50);
        let worst = pred
            .states
            .iter()
            .zip(&truth)
            .map(|(p, t)| (p - t).norm())
            .fold(0.0, f64::max);
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn sweep_rows_follow_eps() {
        let a = RealMatrix::from_row_slice(2, 2, &[1.05, 0.0, 0.0, 0.5]);
        let model = Model::Linear(LinearModel::new(a.clone(), None).unwrap());
        let truth = rollout(&a, &v(&[1.0, 1.0]), 20, DIVERGENCE_BOUND).unwrap();
        let ds = TrajectoryDataset::new(2, 0, vec![Trajectory::autonomous(truth.states)]).unwrap();
        let rows = sweep_eps(&model, &[0.0, 0.1], &ds, 20).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.n_clipped == 1));
        assert!(rows[1].summary_mean > rows[0].summary_mean);
        assert!(sweep_eps(&model, &[1.0], &ds, 20).is_err());
    }
}
