use std::fmt::{Display, Write as _};
use std::fs;
use std::path::Path;

use specclip::clip::LinearModel;
use specclip::datagen::{
    gen_input_matrix, gen_stable_system, gen_trajectories, GenKind, GenSpec, PolynomialSystem,
    System,
};
use specclip::error::Location;
use specclip::io::{
    error_curve_to_string, load_model, load_trajectories, parse_trajectories, save_model,
    save_trajectories, Model,
};
use specclip::koopman::{
    clip_koopman, fit_koopman, lift, mode_decompose_matrix, rollout_modes, LiftingSpec,
    ModeSelector,
};
use specclip::matrix::{spectral_radius, RealMatrix, RealVector};
use specclip::pipeline::{
    compare_with, evaluate_with, predict, predict_along, rollouts_to_dataset, sweep_eps_with,
};
use specclip::simeval::{bench_clip_with_probe, ErrorMetric, MemoryProbe};
use specclip::sysid::{
    build_data_matrices, fit_ls, fit_ls_controlled, normal_equation_residual, Trajectory,
    TrajectoryDataset,
};
use specclip::{Error, Result};

use crate::{Command, KindArg, MetricArg};

/// One line of `key=value` pairs.
#[derive(Default)]
struct Summary(String);

impl Summary {
    fn kv(mut self, key: &str, value: impl Display) -> Self {
        if !self.0.is_empty() {
            self.0.push(' ');
        }
        let _ = write!(self.0, "{key}={value}");
        self
    }

    fn num(self, key: &str, value: f64) -> Self {
        self.kv(key, Num(value))
    }

    fn opt<T: Display>(self, key: &str, value: Option<T>) -> Self {
        match value {
            Some(v) => self.kv(key, v),
            None => self.kv(key, "NA"),
        }
    }

    fn print(self) {
        println!("{}", self.0);
    }
}

/// Plain decimal for moderate magnitudes, scientific otherwise.
struct Num(f64);

impl Display for Num {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let a = self.0.abs();
        if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
            write!(f, "{:e}", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Attaches the path to bare I/O errors.
fn at<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        )),
        other => other,
    })
}

pub fn run(command: Command, probe: &dyn MemoryProbe) -> Result<()> {
    match command {
        Command::Gen {
            kind,
            n,
            m,
            rho,
            n_traj,
            length,
            noise,
            truncate_to,
            failure_fraction,
            poly_a1,
            seed,
            out,
            truth_out,
        } => {
            let kind = match kind {
                KindArg::Linear => GenKind::Linear,
                KindArg::Controlled => GenKind::Controlled,
                KindArg::Polynomial => GenKind::Polynomial,
                KindArg::Corrupted => GenKind::Corrupted,
            };
            let n = n.unwrap_or(if kind == GenKind::Polynomial { 2 } else { 4 });
            let spec = GenSpec {
                kind,
                n,
                m: if kind == GenKind::Controlled { m } else { 0 },
                rho_target: rho,
                n_traj,
                t_len: length,
                noise_sigma: noise,
                truncate_to,
                failure_fraction,
                seed: seed.seed,
            };
            spec.validate()?;
            let system = match kind {
                GenKind::Polynomial => System::Polynomial(PolynomialSystem {
                    a1: poly_a1,
                    ..Default::default()
                }),
                GenKind::Controlled => System::Controlled(
                    gen_stable_system(n, rho, seed.seed)?,
                    gen_input_matrix(n, m, seed.seed),
                ),
                GenKind::Linear | GenKind::Corrupted => {
                    System::Linear(gen_stable_system(n, rho, seed.seed)?)
                }
            };
            let dataset = gen_trajectories(&system, &spec)?;
            at(&out, save_trajectories(&out, &dataset))?;
            if let Some(path) = truth_out {
                let truth = match &system {
                    System::Linear(a) => LinearModel::new(a.clone(), None)?,
                    System::Controlled(a, b) => LinearModel::new(a.clone(), Some(b.clone()))?,
                    System::Polynomial(_) => {
                        return Err(Error::InvalidArgument(
                            "the polynomial system has no linear ground truth".into(),
                        ))
                    }
                };
                at(&path, save_model(&path, &Model::Linear(truth)))?;
            }
            Summary::default()
                .kv("kind", format!("{kind:?}").to_lowercase())
                .kv("n", dataset.state_dim())
                .kv("m", dataset.input_dim())
                .kv("n_traj", dataset.trajectories().len())
                .kv("pairs", dataset.num_pairs())
                .kv("seed", seed.seed)
                .kv("out", out.display())
                .print();
        }

        Command::Fit { data, out } => {
            let dataset = at(&data, load_trajectories(&data))?;
            let dm = build_data_matrices(&dataset)?;
            let (model, residual) = if dataset.is_controlled() {
                let (a, b) = fit_ls_controlled(&dataset)?;
                let u = dm.u.as_ref().expect("controlled data has inputs");
                let regressor = stack_rows(&dm.x, u);
                let mut theta = RealMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
                theta.columns_mut(0, a.ncols()).copy_from(&a);
                theta.columns_mut(a.ncols(), b.ncols()).copy_from(&b);
                let r = relative_residual(&theta, &regressor, &dm.y);
                (LinearModel::new(a, Some(b))?, r)
            } else {
                let a = fit_ls(&dataset)?;
                let r = relative_residual(&a, &dm.x, &dm.y);
                (LinearModel::new(a, None)?, r)
            };
            let radius = spectral_radius(&model.a)?;
            at(&out, save_model(&out, &Model::Linear(model.clone())))?;
            Summary::default()
                .kv("kind", "linear")
                .kv("n", model.state_dim())
                .kv("m", model.input_dim())
                .kv("pairs", dataset.num_pairs())
                .num("spectral_radius", radius)
                .num("normal_residual_rel", residual)
                .kv("out", out.display())
                .print();
        }

        Command::Clip { model, eps, out } => {
            let clipped = specclip::pipeline::clip_model(&at(&model, load_model(&model))?, eps)?;
            at(&out, save_model(&out, &clipped))?;
            let r = clipped.clip_report().expect("clipping attaches a report");
            Summary::default()
                .num("eps", r.eps)
                .kv("n_clipped", r.n_clipped)
                .num("radius_before", r.radius_before)
                .num("radius_after", r.radius_after)
                .num("gamma", r.perturbation_applied)
                .num("cond_modal", r.cond_modal)
                .kv("out", out.display())
                .print();
        }

        Command::KoopmanFit {
            data,
            degree,
            eps,
            out,
        } => {
            let dataset = at(&data, load_trajectories(&data))?;
            let spec = LiftingSpec::new(dataset.state_dim(), degree)?;
            let mut model = fit_koopman(&dataset, &spec)?;
            let radius = spectral_radius(&model.k)?;
            if let Some(eps) = eps {
                model = clip_koopman(&model, eps)?;
            }
            at(&out, save_model(&out, &Model::Koopman(model.clone())))?;
            let mut s = Summary::default()
                .kv("kind", "koopman")
                .kv("n", spec.state_dim())
                .kv("degree", degree)
                .kv("lifted_dim", spec.lifted_dim())
                .num("spectral_radius", radius);
            if let Some(r) = &model.clip_report {
                s = s
                    .num("eps", r.eps)
                    .kv("n_clipped", r.n_clipped)
                    .num("radius_after", r.radius_after);
            }
            s.kv("out", out.display()).print();
        }

        Command::Rollout {
            model,
            horizon,
            x0,
            out,
        } => {
            check_horizon(horizon)?;
            let model = at(&model, load_model(&model))?;
            let starts = initial_states(&x0, state_dim(&model))?;
            let rollouts = match &starts {
                Starts::Vectors(xs) => xs
                    .iter()
                    .map(|x| predict(&model, x, horizon))
                    .collect::<Result<Vec<_>>>()?,
                Starts::Trajectories(ts) => ts
                    .iter()
                    .map(|t| predict_along(&model, t, horizon))
                    .collect::<Result<Vec<_>>>()?,
            };
            let inputs = match &starts {
                Starts::Trajectories(ts) => Some(ts.as_slice()),
                Starts::Vectors(_) => None,
            };
            let dataset = rollouts_to_dataset(&rollouts, inputs)?;
            at(&out, save_trajectories(&out, &dataset))?;
            Summary::default()
                .kv("trajectories", rollouts.len())
                .kv("horizon", horizon)
                .opt(
                    "diverged_at",
                    rollouts.iter().filter_map(|r| r.diverged_at).min(),
                )
                .num(
                    "max_norm",
                    rollouts.iter().map(|r| r.max_norm).fold(0.0, f64::max),
                )
                .kv("out", out.display())
                .print();
        }

        Command::Eval {
            pred,
            model,
            horizon,
            truth,
            metric,
            out,
        } => {
            let metric = error_metric(metric);
            let truth = at(&truth, load_trajectories(&truth))?;
            let eval = match (pred, model) {
                (Some(pred), _) => {
                    compare_with(&at(&pred, load_trajectories(&pred))?, &truth, metric)?
                }
                (None, Some(model)) => {
                    let longest = truth
                        .trajectories()
                        .iter()
                        .map(|t| t.len() - 1)
                        .max()
                        .unwrap_or(1);
                    let horizon = horizon.unwrap_or(longest);
                    check_horizon(horizon)?;
                    evaluate_with(&at(&model, load_model(&model))?, &truth, horizon, metric)?
                }
                (None, None) => {
                    return Err(Error::InvalidArgument(
                        "eval needs --pred or --model".into(),
                    ))
                }
            };
            if let Some(path) = &out {
                at(
                    path,
                    fs::write(path, error_curve_to_string(&eval.curve.per_step))
                        .map_err(Error::from),
                )?;
            }
            Summary::default()
                .num("summary_mean", eval.curve.summary_mean)
                .kv("steps", eval.curve.per_step.len())
                .opt("moving_ratio", eval.moving_ratio)
                .opt("diverged_at", eval.diverged_at)
                .print();
        }

        Command::Modes {
            model,
            subset,
            x0,
            horizon,
            out,
        } => {
            check_horizon(horizon)?;
            let selector: ModeSelector = subset.parse()?;
            let model = at(&model, load_model(&model))?;
            let modes = mode_decompose_matrix(model.transition())?;
            let chosen = selector.resolve(&modes)?;
            let starts = match initial_states(&x0, state_dim(&model))? {
                Starts::Vectors(xs) => xs,
                Starts::Trajectories(ts) => ts.into_iter().map(|t| t.states[0].clone()).collect(),
            };
            let mut trajs = Vec::with_capacity(starts.len());
            let mut max_norm = 0.0f64;
            for x in &starts {
                let (z0, spec) = match &model {
                    Model::Linear(_) => (x.clone(), None),
                    Model::Koopman(k) => (lift(x, &k.spec)?, Some(&k.spec)),
                };
                let states: Vec<RealVector> = rollout_modes(&modes, &chosen, &z0, horizon)?
                    .into_iter()
                    .map(|z| spec.map_or(z.clone(), |s| s.decode(&z)))
                    .collect();
                max_norm = states.iter().map(|s| s.norm()).fold(max_norm, f64::max);
                trajs.push(Trajectory::autonomous(states));
            }
            let dataset = TrajectoryDataset::new(starts[0].len(), 0, trajs)?;
            at(&out, save_trajectories(&out, &dataset))?;
            let one_based = ModeSelector::Indices(chosen.iter().map(|i| i + 1).collect());
            Summary::default()
                .kv("n_modes", modes.len())
                .kv("selected", chosen.len())
                .kv(
                    "subset",
                    if chosen.is_empty() {
                        "none".to_string()
                    } else {
                        one_based.to_string()
                    },
                )
                .num("cond_modal", modes.cond_modal)
                .num("max_norm", max_norm)
                .kv("out", out.display())
                .print();
        }

        Command::SweepEps {
            data,
            truth,
            degree,
            values,
            horizon,
            metric,
            out,
        } => {
            check_horizon(horizon)?;
            let train = at(&data, load_trajectories(&data))?;
            let truth = match truth {
                Some(path) => at(&path, load_trajectories(&path))?,
                None => train.clone(),
            };
            let model = match degree {
                Some(d) => Model::Koopman(fit_koopman(
                    &train,
                    &LiftingSpec::new(train.state_dim(), d)?,
                )?),
                None if train.is_controlled() => {
                    let (a, b) = fit_ls_controlled(&train)?;
                    Model::Linear(LinearModel::new(a, Some(b))?)
                }
                None => Model::Linear(LinearModel::new(fit_ls(&train)?, None)?),
            };
            let rows = sweep_eps_with(&model, &values, &truth, horizon, error_metric(metric))?;
            let mut csv =
                String::from("eps,n_clipped,radius_after,summary_mean,moving_ratio,diverged_at\n");
            for r in &rows {
                let na = |v: Option<String>| v.unwrap_or_else(|| "NA".into());
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    r.eps,
                    r.n_clipped,
                    r.radius_after,
                    r.summary_mean,
                    na(r.moving_ratio.map(|x| x.to_string())),
                    na(r.diverged_at.map(|x| x.to_string()))
                );
                Summary::default()
                    .num("eps", r.eps)
                    .kv("n_clipped", r.n_clipped)
                    .num("radius_after", r.radius_after)
                    .num("summary_mean", r.summary_mean)
                    .opt("moving_ratio", r.moving_ratio)
                    .opt("diverged_at", r.diverged_at)
                    .print();
            }
            if let Some(path) = &out {
                at(path, fs::write(path, csv).map_err(Error::from))?;
            }
        }

        Command::Bench {
            dims,
            repeats,
            seed,
            out,
        } => {
            let report = bench_clip_with_probe(&dims, repeats, seed.seed, Some(probe))?;
            for (rec, slope) in report.records.iter().zip(report.running_slopes()) {
                Summary::default()
                    .kv("n", rec.n)
                    .num("wall_time_seconds", rec.wall_time_seconds)
                    .opt("peak_extra_bytes", rec.peak_extra_bytes)
                    .opt("slope_running", slope)
                    .print();
            }
            if let Some(path) = &out {
                at(path, fs::write(path, report.to_csv()).map_err(Error::from))?;
            }
            Summary::default().opt("slope", report.slope).print();
        }
    }
    Ok(())
}

fn error_metric(m: MetricArg) -> ErrorMetric {
    match m {
        MetricArg::Mae => ErrorMetric::Mae,
        MetricArg::Mse => ErrorMetric::Mse,
    }
}

fn check_horizon(h: usize) -> Result<()> {
    if h == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    Ok(())
}

fn stack_rows(top: &RealMatrix, bottom: &RealMatrix) -> RealMatrix {
    let mut out = RealMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}

fn relative_residual(theta: &RealMatrix, x: &RealMatrix, y: &RealMatrix) -> f64 {
    let scale = (y * x.transpose()).norm().max(f64::MIN_POSITIVE);
    normal_equation_residual(theta, x, y) / scale
}

fn state_dim(model: &Model) -> usize {
    match model {
        Model::Linear(m) => m.state_dim(),
        Model::Koopman(k) => k.spec.state_dim(),
    }
}

enum Starts {
    Vectors(Vec<RealVector>),
    Trajectories(Vec<Trajectory>),
}

/// `zero`, `unit` (ones scaled to unit norm), a file with `n` numbers, or a
/// trajectory CSV whose first states are used.
fn initial_states(spec: &str, n: usize) -> Result<Starts> {
    match spec {
        "zero" => return Ok(Starts::Vectors(vec![RealVector::zeros(n)])),
        "unit" => {
            return Ok(Starts::Vectors(vec![RealVector::from_element(
                n,
                1.0 / (n as f64).sqrt(),
            )]))
        }
        _ => {}
    }
    let text = at(
        Path::new(spec),
        fs::read_to_string(Path::new(spec)).map_err(Error::from),
    )?;
    let first = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("");
    if first.starts_with('#') || first.starts_with("traj_id") {
        let ds = parse_trajectories(&text)?;
        if ds.state_dim() != n {
            return Err(Error::dims(format!(
                "initial states have dimension {}, model has {n}",
                ds.state_dim()
            )));
        }
        return Ok(Starts::Trajectories(ds.into_trajectories()));
    }
    let values = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .enumerate()
        .map(|(i, t)| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    Error::parse(
                        Location::field(format!("x0[{i}]")),
                        format!("expected a finite number, found `{t}`"),
                    )
                })
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != n {
        return Err(Error::dims(format!(
            "x0 has {} entries, model has state dimension {n}",
            values.len()
        )));
    }
    Ok(Starts::Vectors(vec![RealVector::from_vec(values)]))
}
