//! Seeded synthetic systems and trajectory generators.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::koopman::LiftingSpec;
use crate::matrix::{ensure_square, RealMatrix, RealVector};
use crate::sysid::{Trajectory, TrajectoryDataset};

/// Per-step growth factor of the perturbation injected into failed demonstrations.
pub const FAILURE_GROWTH: f64 = 1.5;
/// Initial size of that perturbation relative to a unit-normal direction.
pub const FAILURE_SCALE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenKind {
    Linear,
    Controlled,
    Polynomial,
    Corrupted,
}

impl FromStr for GenKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(GenKind::Linear),
            "controlled" => Ok(GenKind::Controlled),
            "polynomial" => Ok(GenKind::Polynomial),
            "corrupted" => Ok(GenKind::Corrupted),
            other => Err(Error::InvalidArgument(format!(
                "unknown generator kind `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub kind: GenKind,
    pub n: usize,
    pub m: usize,
    pub rho_target: f64,
    pub n_traj: usize,
    /// Trajectory length in states.
    pub t_len: usize,
    pub noise_sigma: f64,
    /// Linear, controlled and polynomial kinds: every trajectory is cut to
    /// this many states. Corrupted kind: failed trajectories start to
    /// diverge at this step (default `t_len / 2`).
    pub truncate_to: Option<usize>,
    pub failure_fraction: f64,
    pub seed: u64,
}

impl GenSpec {
    pub fn new(kind: GenKind, n: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            m: if kind == GenKind::Controlled { 1 } else { 0 },
            rho_target: 0.9,
            n_traj: 5,
            t_len: 20,
            noise_sigma: 0.0,
            truncate_to: None,
            failure_fraction: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.t_len < 2 {
            return bad(format!("T must be at least 2, got {}", self.t_len));
        }
        if !(self.rho_target > 0.0 && self.rho_target.is_finite()) {
            return bad(format!(
                "rho_target must be positive, got {}",
                self.rho_target
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise_sigma must be nonnegative, got {}",
                self.noise_sigma
            ));
        }
        if !(0.0..1.0).contains(&self.failure_fraction) {
            return bad(format!(
                "failure_fraction must lie in [0, 1), got {}",
                self.failure_fraction
            ));
        }
        if self.failure_fraction > 0.0 && self.kind != GenKind::Corrupted {
            return bad("failure_fraction requires the corrupted kind".into());
        }
        if let Some(t) = self.truncate_to {
            if t < 2 || t > self.t_len {
                return bad(format!(
                    "truncate_to must lie in [2, {}], got {t}",
                    self.t_len
                ));
            }
        }
        if self.kind == GenKind::Controlled && self.m == 0 {
            return bad("controlled generation needs m > 0".into());
        }
        if self.kind == GenKind::Polynomial && self.n != 2 {
            return bad("the polynomial benchmark has n = 2".into());
        }
        Ok(())
    }
}

fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> RealVector {
    RealVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> RealMatrix {
    let g = RealMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    g.qr().q()
}

/// `M D M⁻¹` with `cond(M) ≤ 10` and a block-diagonal `D` whose
/// eigenvalue magnitudes lie in `[0.2ρ, ρ]`, the first exactly `ρ`.
/// Roughly half the blocks are rotation-scaling pairs.
pub fn gen_stable_system(n: usize, rho_target: f64, seed: u64) -> Result<RealMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    if !(rho_target > 0.0 && rho_target.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "rho_target must be positive, got {rho_target}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = RealMatrix::zeros(n, n);
    let mut i = 0;
    while i < n {
        let r = if i == 0 {
            rho_target
        } else {
            rng.random_range(0.2 * rho_target..=rho_target)
        };
        if i + 1 < n && rng.random_bool(0.5) {
            let theta = rng.random_range(0.1..std::f64::consts::PI - 0.1);
            let (s, c) = theta.sin_cos();
            d[(i, i)] = r * c;
            d[(i, i + 1)] = -r * s;
            d[(i + 1, i)] = r * s;
            d[(i + 1, i + 1)] = r * c;
            i += 2;
        } else {
            d[(i, i)] = if rng.random_bool(0.5) { r } else { -r };
            i += 1;
        }
    }
    let q1 = random_orthogonal(&mut rng, n);
    let q2 = random_orthogonal(&mut rng, n);
    let s = RealVector::from_fn(n, |_, _| 10f64.powf(rng.random_range(0.0..=1.0)));
    let m = &q1 * RealMatrix::from_diagonal(&s) * q2.transpose();
    let s_inv = s.map(|x| 1.0 / x);
    let m_inv = &q2 * RealMatrix::from_diagonal(&s_inv) * q1.transpose();
    Ok(m * d * m_inv)
}

/// Seeded `n × m` input matrix with unit-normal entries.
pub fn gen_input_matrix(n: usize, m: usize, seed: u64) -> RealMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0b0b_0b0b_0b0b_0b0b);
    RealMatrix::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng))
}

/// `x₁' = a₁ x₁`, `x₂' = a₂ x₂ + c x₁²`.
///
/// Under the degree-2 lifting the observables `(x₁², x₁, x₂)` evolve
/// linearly and exactly; `x₁x₂` and `x₂²` do not close.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolynomialSystem {
    pub a1: f64,
    pub a2: f64,
    pub c: f64,
}

impl Default for PolynomialSystem {
    fn default() -> Self {
        Self {
            a1: 0.9,
            a2: 0.8,
            c: 0.1,
        }
    }
}

impl PolynomialSystem {
    pub fn step(&self, x: &RealVector) -> RealVector {
        RealVector::from_column_slice(&[self.a1 * x[0], self.a2 * x[1] + self.c * x[0] * x[0]])
    }

    pub fn simulate(&self, x0: &RealVector, horizon: usize) -> Vec<RealVector> {
        let mut out = Vec::with_capacity(horizon + 1);
        out.push(x0.clone());
        for _ in 0..horizon {
            let next = self.step(out.last().expect("non-empty"));
            out.push(next);
        }
        out
    }

    pub fn lifting(&self) -> LiftingSpec {
        LiftingSpec::new(2, 2).expect("valid lifting")
    }

    /// Positions of `(x₁², x₁, x₂)` inside the degree-2 lifted vector.
    pub const CLOSED_COORDS: [usize; 3] = [0, 3, 4];

    /// Exact linear evolution of `(x₁², x₁, x₂)`.
    pub fn exact_closed_block(&self) -> RealMatrix {
        RealMatrix::from_row_slice(
            3,
            3,
            &[
                self.a1 * self.a1,
                0.0,
                0.0,
                0.0,
                self.a1,
                0.0,
                self.c,
                0.0,
                self.a2,
            ],
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialBenchmark {
    pub system: PolynomialSystem,
    pub dataset: TrajectoryDataset,
    pub spec: LiftingSpec,
    /// Exact Koopman matrix on the closed coordinates [`PolynomialSystem::CLOSED_COORDS`].
    pub exact_k: RealMatrix,
}

pub const POLY_BENCH_TRAJECTORIES: usize = 8;
pub const POLY_BENCH_LENGTH: usize = 30;

pub fn gen_polynomial_benchmark(seed: u64) -> PolynomialBenchmark {
    gen_polynomial_benchmark_with(PolynomialSystem::default(), seed)
}

/// Noiseless trajectories with initial states uniform in `[−1, 1]²`.
pub fn gen_polynomial_benchmark_with(system: PolynomialSystem, seed: u64) -> PolynomialBenchmark {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trajs = (0..POLY_BENCH_TRAJECTORIES)
        .map(|_| {
            let x0 = RealVector::from_fn(2, |_, _| rng.random_range(-1.0..=1.0));
            Trajectory::autonomous(system.simulate(&x0, POLY_BENCH_LENGTH - 1))
        })
        .collect();
    let dataset = TrajectoryDataset::new(2, 0, trajs).expect("generated trajectories are valid");
    PolynomialBenchmark {
        system,
        dataset,
        spec: system.lifting(),
        exact_k: system.exact_closed_block(),
    }
}

/// The dynamics a dataset is drawn from.
#[derive(Debug, Clone, PartialEq)]
pub enum System {
    Linear(RealMatrix),
    Controlled(RealMatrix, RealMatrix),
    Polynomial(PolynomialSystem),
}

impl System {
    fn state_dim(&self) -> usize {
        match self {
            System::Linear(a) | System::Controlled(a, _) => a.nrows(),
            System::Polynomial(_) => 2,
        }
    }
}

pub fn gen_trajectories(system: &System, spec: &GenSpec) -> Result<TrajectoryDataset> {
    spec.validate()?;
    match (spec.kind, system) {
        (GenKind::Linear | GenKind::Corrupted, System::Linear(a)) => {
            ensure_square(a, "A")?;
        }
        (GenKind::Controlled | GenKind::Corrupted, System::Controlled(a, b)) => {
            ensure_square(a, "A")?;
            if b.nrows() != a.nrows() || b.ncols() != spec.m {
                return Err(Error::dims(format!(
                    "B is {}x{}, expected {}x{}",
                    b.nrows(),
                    b.ncols(),
                    a.nrows(),
                    spec.m
                )));
            }
        }
        (GenKind::Polynomial, System::Polynomial(_)) => {}
        (kind, _) => {
            return Err(Error::InvalidArgument(format!(
                "{kind:?} generation does not match the given system"
            )))
        }
    }
    let n = system.state_dim();
    if n != spec.n {
        return Err(Error::dims(format!(
            "system has dimension {n}, spec says {}",
            spec.n
        )));
    }
    let m = match system {
        System::Controlled(_, b) => b.ncols(),
        _ => 0,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let len = match (spec.kind, spec.truncate_to) {
        (GenKind::Corrupted, _) | (_, None) => spec.t_len,
        (_, Some(t)) => t,
    };
    let mut trajs = Vec::with_capacity(spec.n_traj);
    for _ in 0..spec.n_traj {
        let mut x = match system {
            System::Polynomial(_) => RealVector::from_fn(2, |_, _| rng.random_range(-1.0..=1.0)),
            _ => normal_vector(&mut rng, n),
        };
        let mut states = vec![x.clone()];
        let mut inputs = Vec::new();
        for _ in 1..len {
            let mut next = match system {
                System::Linear(a) => a * &x,
                System::Controlled(a, b) => {
                    let u = normal_vector(&mut rng, m);
                    let next = a * &x + b * &u;
                    inputs.push(u);
                    next
                }
                System::Polynomial(p) => p.step(&x),
            };
            if spec.noise_sigma > 0.0 {
                next += normal_vector(&mut rng, n) * spec.noise_sigma;
            }
            states.push(next.clone());
            x = next;
        }
        trajs.push(Trajectory { states, inputs });
    }

    if spec.kind == GenKind::Corrupted && spec.failure_fraction > 0.0 {
        corrupt(&mut trajs, spec);
    }
    TrajectoryDataset::new(n, m, trajs)
}

/// Replaces the tail of a `failure_fraction` share of trajectories with the
/// clean state plus a geometrically growing seeded perturbation.
fn corrupt(trajs: &mut [Trajectory], spec: &GenSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0xfa11_ed00_dead_beef);
    let count = ((spec.failure_fraction * trajs.len() as f64).round() as usize).min(trajs.len());
    let mut order: Vec<usize> = (0..trajs.len()).collect();
    order.shuffle(&mut rng);
    let start = spec.truncate_to.unwrap_or(spec.t_len / 2).max(1);
    for &j in &order[..count] {
        let n = trajs[j].states[0].len();
        let direction = normal_vector(&mut rng, n);
        let mut scale = FAILURE_SCALE;
        for x in trajs[j].states.iter_mut().skip(start) {
            scale *= FAILURE_GROWTH;
            *x += &direction * scale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{eigendecompose, spectral_radius};
    use crate::sysid::fit_ls;
    use approx::assert_abs_diff_eq;

    #[test]
    fn stable_system_hits_target_radius() {
        for (n, rho) in [(2, 0.9), (5, 1.5), (12, 0.999)] {
            for seed in 0..5 {
                let a = gen_stable_system(n, rho, seed).unwrap();
                assert_abs_diff_eq!(spectral_radius(&a).unwrap(), rho, epsilon = 1e-8);
                assert!(eigendecompose(&a).unwrap().cond_modal() < 1e6);
            }
        }
        assert_eq!(
            gen_stable_system(4, 0.9, 3).unwrap(),
            gen_stable_system(4, 0.9, 3).unwrap()
        );
    }

    #[test]
    fn noiseless_data_recovers_system() {
        let a = gen_stable_system(4, 0.95, 1).unwrap();
        let spec = GenSpec {
            n_traj: 4,
            t_len: 10,
            ..GenSpec::new(GenKind::Linear, 4, 2)
        };
        let ds = gen_trajectories(&System::Linear(a.clone()), &spec).unwrap();
        let fit = fit_ls(&ds).unwrap();
        assert!((fit - &a).norm() <= 1e-8 * a.norm());
    }

    #[test]
    fn truncation_shortens() {
        let a = gen_stable_system(3, 0.9, 1).unwrap();
        let spec = GenSpec {
            truncate_to: Some(5),
            ..GenSpec::new(GenKind::Linear, 3, 2)
        };
        let ds = gen_trajectories(&System::Linear(a), &spec).unwrap();
        assert!(ds.trajectories().iter().all(|t| t.len() == 5));
    }

    #[test]
    fn zero_failure_fraction_equals_clean() {
        let a = gen_stable_system(3, 0.9, 1).unwrap();
        let clean = GenSpec {
            noise_sigma: 0.01,
            ..GenSpec::new(GenKind::Linear, 3, 11)
        };
        let corrupted = GenSpec {
            kind: GenKind::Corrupted,
            ..clean.clone()
        };
        let sys = System::Linear(a);
        assert_eq!(
            gen_trajectories(&sys, &clean).unwrap(),
            gen_trajectories(&sys, &corrupted).unwrap()
        );
    }

    #[test]
    fn corrupted_tails_grow() {
        let a = gen_stable_system(3, 0.9, 1).unwrap();
        let base = GenSpec {
            n_traj: 10,
            ..GenSpec::new(GenKind::Linear, 3, 4)
        };
        let bad = GenSpec {
            kind: GenKind::Corrupted,
            failure_fraction: 0.2,
            ..base.clone()
        };
        let sys = System::Linear(a);
        let clean = gen_trajectories(&sys, &base).unwrap();
        let dirty = gen_trajectories(&sys, &bad).unwrap();
        let changed: Vec<usize> = (0..10)
            .filter(|&j| clean.trajectories()[j] != dirty.trajectories()[j])
            .collect();
        assert_eq!(changed.len(), 2);
        for j in changed {
            let (c, d) = (
                &clean.trajectories()[j].states,
                &dirty.trajectories()[j].states,
            );
            assert_eq!(c[..10], d[..10]);
            assert!((&d[19] - &c[19]).norm() > (&d[10] - &c[10]).norm());
        }
    }

    #[test]
    fn controlled_generation() {
        let a = gen_stable_system(2, 0.5, 0).unwrap();
        let b = RealMatrix::identity(2, 2);
        let spec = GenSpec {
            m: 2,
            ..GenSpec::new(GenKind::Controlled, 2, 0)
        };
        let ds = gen_trajectories(&System::Controlled(a, b), &spec).unwrap();
        assert_eq!(ds.input_dim(), 2);
        assert!(ds
            .trajectories()
            .iter()
            .all(|t| t.inputs.len() == t.states.len() - 1));
    }

    #[test]
    fn mismatched_system_rejected() {
        let spec = GenSpec::new(GenKind::Linear, 3, 0);
        assert!(gen_trajectories(&System::Linear(RealMatrix::identity(2, 2)), &spec).is_err());
        assert!(gen_trajectories(&System::Polynomial(PolynomialSystem::default()), &spec).is_err());
        let spec = GenSpec {
            failure_fraction: 0.1,
            ..GenSpec::new(GenKind::Linear, 2, 0)
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn polynomial_benchmark_exact_block() {
        let bench = gen_polynomial_benchmark(5);
        let eig = eigendecompose(&bench.exact_k).unwrap();
        let mags: Vec<f64> = eig.eigenvalues().iter().map(|l| l.re).collect();
        assert_abs_diff_eq!(mags[0], 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(mags[1], 0.81, epsilon = 1e-15);
        assert_abs_diff_eq!(mags[2], 0.8, epsilon = 1e-15);
        assert_eq!(bench, gen_polynomial_benchmark(5));
        assert_ne!(bench.dataset, gen_polynomial_benchmark(6).dataset);
    }
}
