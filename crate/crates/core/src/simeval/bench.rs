use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::clip::clip_spectrum;
use crate::error::{Error, Result};
use crate::matrix::RealMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub n: usize,
    pub wall_time_seconds: f64,
    /// Peak heap growth during one clip, when a probe is installed.
    pub peak_extra_bytes: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub records: Vec<BenchRecord>,
    /// Slope of `log(time)` against `log(n)` over all records.
    pub slope: Option<f64>,
}

impl BenchReport {
    /// Slope over the first `k` records, for `k = 1..=len`.
    pub fn running_slopes(&self) -> Vec<Option<f64>> {
        (1..=self.records.len())
            .map(|k| slope_of(&self.records[..k]))
            .collect()
    }

    /// `n,wall_time_seconds,slope_running` per record, then `slope,<value>`;
    /// undefined slopes are written as `NA`.
    pub fn to_csv(&self) -> String {
        let na = |s: Option<f64>| s.map_or_else(|| "NA".to_string(), |v| v.to_string());
        let mut out = String::new();
        for (rec, slope) in self.records.iter().zip(self.running_slopes()) {
            out.push_str(&format!(
                "{},{},{}\n",
                rec.n,
                rec.wall_time_seconds,
                na(slope)
            ));
        }
        out.push_str(&format!("slope,{}\n", na(self.slope)));
        out
    }
}

/// Heap instrumentation supplied by the host binary.
pub trait MemoryProbe {
    /// Starts a new measurement window at the current allocation level.
    fn reset(&self);
    /// Largest growth above the window start, in bytes.
    fn peak_extra_bytes(&self) -> u64;
}

/// Seeded test matrix for dimension `n`, scaled so a sizeable part of the
/// spectrum lies outside the unit disk.
pub fn bench_matrix(n: usize, seed: u64) -> RealMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (n as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let scale = 1.2 / (n as f64).sqrt();
    RealMatrix::from_fn(n, n, |_, _| {
        scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
    })
}

/// Least-squares slope of `log y` on `log x`; `None` with fewer than two
/// distinct abscissae.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

fn slope_of(records: &[BenchRecord]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .map(|r| (r.n as f64, r.wall_time_seconds))
        .collect();
    log_log_slope(&pts)
}

pub fn bench_clip(dims: &[usize], repeats: usize, seed: u64) -> Result<BenchReport> {
    bench_clip_with_probe(dims, repeats, seed, None)
}

/// Times `clip_spectrum` once per repeat on the same seeded matrix and keeps
/// the fastest run for each dimension.
pub fn bench_clip_with_probe(
    dims: &[usize],
    repeats: usize,
    seed: u64,
    probe: Option<&dyn MemoryProbe>,
) -> Result<BenchReport> {
    if dims.is_empty() {
        return Err(Error::InvalidArgument("no benchmark dimensions".into()));
    }
    if dims.iter().any(|&n| n < 16) {
        return Err(Error::InvalidArgument(
            "benchmark dimensions must be at least 16".into(),
        ));
    }
    if dims.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "benchmark dimensions must be strictly ascending".into(),
        ));
    }
    let repeats = repeats.max(1);
    let mut records = Vec::with_capacity(dims.len());
    for &n in dims {
        let a = bench_matrix(n, seed);
        let mut best = f64::INFINITY;
        let mut peak = None;
        for _ in 0..repeats {
            if let Some(p) = probe {
                p.reset();
            }
            let start = Instant::now();
            let out = clip_spectrum(&a, 0.0)?;
            let elapsed = start.elapsed().as_secs_f64();
            if let Some(p) = probe {
                let bytes = p.peak_extra_bytes();
                peak = Some(peak.map_or(bytes, |b: u64| b.max(bytes)));
            }
            drop(out);
            best = best.min(elapsed);
        }
        records.push(BenchRecord {
            n,
            wall_time_seconds: best.max(f64::MIN_POSITIVE),
            peak_extra_bytes: peak,
        });
    }
    let slope = slope_of(&records);
    Ok(BenchReport { records, slope })
}
