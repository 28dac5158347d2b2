//! Versioned on-disk formats: JSON model documents and trajectory CSV.
//!
//! Floats are written with 17 significant digits, so every finite `f64`
//! survives a save/load cycle bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::{Map, Value};

use crate::clip::{ClipReport, LinearModel};
use crate::error::{Error, Location, Result};
use crate::koopman::{monomial_count, KoopmanModel, LiftingSpec, MAX_LIFTED_DIM};
use crate::matrix::{RealMatrix, RealVector};
use crate::sysid::{Trajectory, TrajectoryDataset};

pub const SCHEMA_VERSION: u32 = 1;

/// Either kind of learned model.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(LinearModel),
    Koopman(KoopmanModel),
}

impl Model {
    pub fn clip_report(&self) -> Option<&ClipReport> {
        match self {
            Model::Linear(m) => m.clip_report.as_ref(),
            Model::Koopman(m) => m.clip_report.as_ref(),
        }
    }

    /// `A` for linear models, `K` for Koopman models.
    pub fn transition(&self) -> &RealMatrix {
        match self {
            Model::Linear(m) => &m.a,
            Model::Koopman(m) => &m.k,
        }
    }
}

impl From<LinearModel> for Model {
    fn from(m: LinearModel) -> Self {
        Model::Linear(m)
    }
}

impl From<KoopmanModel> for Model {
    fn from(m: KoopmanModel) -> Self {
        Model::Koopman(m)
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// JSON has no infinities; non-finite report values are written as strings.
fn json_f64(x: f64) -> String {
    if x.is_finite() {
        fmt_f64(x)
    } else if x.is_nan() {
        "\"nan\"".into()
    } else if x > 0.0 {
        "\"inf\"".into()
    } else {
        "\"-inf\"".into()
    }
}

fn write_matrix(out: &mut String, name: &str, m: &RealMatrix) {
    let _ = write!(out, "  \"{name}\": [");
    for i in 0..m.nrows() {
        out.push_str(if i == 0 { "\n    [" } else { ",\n    [" });
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
        out.push_str(&row.join(", "));
        out.push(']');
    }
    out.push_str(if m.nrows() == 0 { "]" } else { "\n  ]" });
}

pub fn model_to_string(model: &Model) -> String {
    let (a, b, eps, report, lifting) = match model {
        Model::Linear(m) => (&m.a, m.b.as_ref(), m.eps, m.clip_report.as_ref(), None),
        Model::Koopman(m) => (&m.k, None, m.eps, m.clip_report.as_ref(), Some(&m.spec)),
    };
    let mut out = String::from("{\n");
    let _ = writeln!(out, "  \"schema_version\": {SCHEMA_VERSION},");
    let _ = writeln!(
        out,
        "  \"kind\": \"{}\",",
        if lifting.is_some() {
            "koopman"
        } else {
            "linear"
        }
    );
    let _ = writeln!(out, "  \"n\": {},", a.nrows());
    let _ = writeln!(out, "  \"m\": {},", b.map_or(0, |b| b.ncols()));
    let _ = writeln!(out, "  \"eps\": {},", fmt_f64(eps));
    write_matrix(&mut out, "A", a);
    if let Some(b) = b {
        out.push_str(",\n");
        write_matrix(&mut out, "B", b);
    }
    if let Some(spec) = lifting {
        let _ = write!(
            out,
            ",\n  \"lifting\": {{\"degree\": {}, \"n\": {}}}",
            spec.degree(),
            spec.state_dim()
        );
    }
    if let Some(r) = report {
        let _ = write!(
            out,
            ",\n  \"clip_report\": {{\n    \"eps\": {},\n    \"n_clipped\": {},\n    \"radius_before\": {},\n    \
             \"radius_after\": {},\n    \"perturbation_applied\": {},\n    \"cond_modal\": {}\n  }}",
            json_f64(r.eps),
            r.n_clipped,
            json_f64(r.radius_before),
            json_f64(r.radius_after),
            json_f64(r.perturbation_applied),
            json_f64(r.cond_modal),
        );
    }
    out.push_str("\n}\n");
    out
}

fn perr(field: &str, message: impl Into<String>) -> Error {
    Error::parse(Location::field(field), message)
}

fn get<'a>(obj: &'a Map<String, Value>, prefix: &str, key: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| perr(&format!("{prefix}{key}"), "missing field"))
}

fn get_usize(obj: &Map<String, Value>, prefix: &str, key: &str) -> Result<usize> {
    let v = get(obj, prefix, key)?;
    v.as_u64()
        .and_then(|x| usize::try_from(x).ok())
        .ok_or_else(|| {
            perr(
                &format!("{prefix}{key}"),
                format!("expected a nonnegative integer, found {v}"),
            )
        })
}

fn get_f64(
    obj: &Map<String, Value>,
    prefix: &str,
    key: &str,
    allow_non_finite: bool,
) -> Result<f64> {
    let v = get(obj, prefix, key)?;
    let name = format!("{prefix}{key}");
    match v {
        Value::Number(x) => x.as_f64().ok_or_else(|| perr(&name, "number out of range")),
        Value::String(s) if allow_non_finite => match s.as_str() {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            "nan" => Ok(f64::NAN),
            _ => Err(perr(
                &name,
                format!("expected a number, found string `{s}`"),
            )),
        },
        other => Err(perr(&name, format!("expected a number, found {other}"))),
    }
}

fn parse_matrix(value: &Value, name: &str, rows: usize, cols: usize) -> Result<RealMatrix> {
    let outer = value
        .as_array()
        .ok_or_else(|| perr(name, "expected an array of rows"))?;
    if outer.len() != rows {
        return Err(perr(
            name,
            format!("expected {rows} rows, found {}", outer.len()),
        ));
    }
    let mut data = Vec::with_capacity(rows.saturating_mul(cols).min(MAX_LIFTED_DIM * 16));
    for (i, row) in outer.iter().enumerate() {
        let field = format!("{name}[{i}]");
        let row = row
            .as_array()
            .ok_or_else(|| perr(&field, "expected an array of numbers"))?;
        if row.len() != cols {
            return Err(perr(
                &field,
                format!("expected {cols} entries, found {}", row.len()),
            ));
        }
        for (j, x) in row.iter().enumerate() {
            let x = x.as_f64().filter(|x| x.is_finite()).ok_or_else(|| {
                perr(
                    &format!("{name}[{i}][{j}]"),
                    format!("expected a finite number, found {x}"),
                )
            })?;
            data.push(x);
        }
    }
    Ok(RealMatrix::from_row_slice(rows, cols, &data))
}

fn parse_report(value: &Value) -> Result<ClipReport> {
    let obj = value
        .as_object()
        .ok_or_else(|| perr("clip_report", "expected an object"))?;
    let p = "clip_report.";
    Ok(ClipReport {
        eps: get_f64(obj, p, "eps", false)?,
        n_clipped: get_usize(obj, p, "n_clipped")?,
        radius_before: get_f64(obj, p, "radius_before", true)?,
        radius_after: get_f64(obj, p, "radius_after", true)?,
        perturbation_applied: get_f64(obj, p, "perturbation_applied", true)?,
        cond_modal: get_f64(obj, p, "cond_modal", true)?,
    })
}

pub fn parse_model(text: &str) -> Result<Model> {
    let doc: Value = serde_json::from_str(text)
        .map_err(|e| Error::parse(Location::line(e.line()), format!("malformed JSON: {e}")))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| perr("<root>", "expected a JSON object"))?;

    let version = get(obj, "", "schema_version")?;
    match version.as_u64() {
        Some(v) if v == u64::from(SCHEMA_VERSION) => {}
        _ => {
            return Err(Error::VersionMismatch {
                found: version.to_string(),
                expected: SCHEMA_VERSION,
            })
        }
    }

    let n = get_usize(obj, "", "n")?;
    let m = get_usize(obj, "", "m")?;
    if n == 0 {
        return Err(perr("n", "state dimension must be positive"));
    }
    let eps = get_f64(obj, "", "eps", false)?;
    if !(0.0..1.0).contains(&eps) {
        return Err(perr("eps", format!("must lie in [0, 1), found {eps}")));
    }
    let lifting = obj.get("lifting");
    if let Some(kind) = obj.get("kind") {
        let expected = if lifting.is_some() {
            "koopman"
        } else {
            "linear"
        };
        if kind.as_str() != Some(expected) {
            return Err(perr(
                "kind",
                format!("expected \"{expected}\", found {kind}"),
            ));
        }
    }
    let a = parse_matrix(get(obj, "", "A")?, "A", n, n)?;
    let report = obj.get("clip_report").map(parse_report).transpose()?;

    match lifting {
        None => {
            let b = match (m, obj.get("B")) {
                (0, None) => None,
                (0, Some(_)) => return Err(perr("B", "present although m = 0")),
                (_, None) => return Err(perr("B", "missing field")),
                (m, Some(v)) => Some(parse_matrix(v, "B", n, m)?),
            };
            let mut model = LinearModel::new(a, b)?;
            model.eps = eps;
            model.clip_report = report;
            Ok(Model::Linear(model))
        }
        Some(lifting) => {
            if m != 0 || obj.contains_key("B") {
                return Err(perr("m", "Koopman models take no inputs"));
            }
            let l = lifting
                .as_object()
                .ok_or_else(|| perr("lifting", "expected an object"))?;
            let degree = get_usize(l, "lifting.", "degree")?;
            let state_dim = get_usize(l, "lifting.", "n")?;
            let expected = monomial_count(state_dim, degree)
                .and_then(|p| p.checked_add(state_dim))
                .filter(|&d| d <= MAX_LIFTED_DIM);
            if expected != Some(n) {
                return Err(perr(
                    "lifting",
                    format!(
                        "degree {degree} over {state_dim} states does not give {n} coordinates"
                    ),
                ));
            }
            let spec =
                LiftingSpec::new(state_dim, degree).map_err(|e| perr("lifting", e.to_string()))?;
            let mut model = KoopmanModel::new(a, spec)?;
            model.eps = eps;
            model.clip_report = report;
            Ok(Model::Koopman(model))
        }
    }
}

pub fn save_model(path: impl AsRef<Path>, model: &Model) -> Result<()> {
    fs::write(path, model_to_string(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    parse_model(&fs::read_to_string(path)?)
}

pub fn trajectories_to_string(dataset: &TrajectoryDataset) -> String {
    let (n, m) = (dataset.state_dim(), dataset.input_dim());
    let mut out = format!("# schema_version={SCHEMA_VERSION}\ntraj_id,t");
    for i in 0..n {
        let _ = write!(out, ",x_{i}");
    }
    for i in 0..m {
        let _ = write!(out, ",u_{i}");
    }
    out.push('\n');
    for (j, traj) in dataset.trajectories().iter().enumerate() {
        for (t, x) in traj.states.iter().enumerate() {
            let _ = write!(out, "{j},{t}");
            for v in x.iter() {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            match traj.inputs.get(t) {
                Some(u) => {
                    for v in u.iter() {
                        out.push(',');
                        out.push_str(&fmt_f64(*v));
                    }
                }
                None => out.push_str(&",".repeat(m)),
            }
            out.push('\n');
        }
    }
    out
}

fn parse_header(line: &str, lineno: usize) -> Result<(usize, usize)> {
    let cols: Vec<&str> = line.split(',').map(str::trim).collect();
    if cols.len() < 3 || cols[0] != "traj_id" || cols[1] != "t" {
        return Err(Error::parse(
            Location::line(lineno),
            "header must start with `traj_id,t,x_0`",
        ));
    }
    let n = cols[2..].iter().take_while(|c| c.starts_with("x_")).count();
    let m = cols.len() - 2 - n;
    for (i, name) in cols[2..2 + n].iter().enumerate() {
        if *name != format!("x_{i}") {
            return Err(Error::parse(
                Location::line_field(lineno, *name),
                format!("expected column `x_{i}`"),
            ));
        }
    }
    for (i, name) in cols[2 + n..].iter().enumerate() {
        if *name != format!("u_{i}") {
            return Err(Error::parse(
                Location::line_field(lineno, *name),
                format!("expected column `u_{i}`"),
            ));
        }
    }
    if n == 0 {
        return Err(Error::parse(Location::line(lineno), "no state columns"));
    }
    Ok((n, m))
}

fn parse_float(s: &str, lineno: usize, column: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| {
            Error::parse(
                Location::line_field(lineno, column),
                format!("expected a finite number, found `{s}`"),
            )
        })
}

struct PendingTrajectory {
    id: u64,
    states: Vec<RealVector>,
    inputs: Vec<Option<RealVector>>,
    lines: Vec<usize>,
}

impl PendingTrajectory {
    fn finish(mut self, m: usize) -> Result<Trajectory> {
        if m == 0 {
            return Ok(Trajectory::autonomous(self.states));
        }
        self.inputs.pop();
        let mut inputs = Vec::with_capacity(self.inputs.len());
        for (u, line) in self.inputs.into_iter().zip(self.lines) {
            inputs.push(u.ok_or_else(|| {
                Error::parse(
                    Location::line_field(line, "u_0"),
                    "missing input on a non-final row",
                )
            })?);
        }
        Ok(Trajectory::controlled(self.states, inputs))
    }
}

pub fn parse_trajectories(text: &str) -> Result<TrajectoryDataset> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let (mut lineno, mut line) = lines
        .next()
        .ok_or_else(|| Error::parse(Location::line(1), "empty file"))?;
    if let Some(rest) = line.strip_prefix('#') {
        let version = rest.trim().strip_prefix("schema_version=").ok_or_else(|| {
            Error::parse(Location::line(lineno), "expected `# schema_version=<n>`")
        })?;
        if version.trim().parse::<u32>().ok() != Some(SCHEMA_VERSION) {
            return Err(Error::VersionMismatch {
                found: version.trim().to_string(),
                expected: SCHEMA_VERSION,
            });
        }
        (lineno, line) = lines
            .next()
            .ok_or_else(|| Error::parse(Location::line(lineno + 1), "missing header"))?;
    }
    let (n, m) = parse_header(line, lineno)?;
    let width = 2 + n + m;

    let mut done: Vec<Trajectory> = Vec::new();
    let mut current: Option<PendingTrajectory> = None;
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(Error::parse(
                Location::line(lineno),
                format!(
                    "ragged row: expected {width} fields, found {}",
                    fields.len()
                ),
            ));
        }
        let id: u64 = fields[0].trim().parse().map_err(|_| {
            Error::parse(
                Location::line_field(lineno, "traj_id"),
                format!("bad id `{}`", fields[0]),
            )
        })?;
        let t: usize = fields[1].trim().parse().map_err(|_| {
            Error::parse(
                Location::line_field(lineno, "t"),
                format!("bad step `{}`", fields[1]),
            )
        })?;
        let state = (0..n)
            .map(|i| parse_float(fields[2 + i], lineno, &format!("x_{i}")))
            .collect::<Result<Vec<f64>>>()?;
        let raw_inputs = &fields[2 + n..];
        let input = if m == 0 || raw_inputs.iter().all(|s| s.trim().is_empty()) {
            None
        } else {
            Some(
                raw_inputs
                    .iter()
                    .enumerate()
                    .map(|(i, s)| parse_float(s, lineno, &format!("u_{i}")))
                    .collect::<Result<Vec<f64>>>()?,
            )
        };

        let continues = current.as_ref().is_some_and(|c| c.id == id);
        if continues {
            let c = current.as_mut().expect("checked above");
            if t != c.states.len() {
                return Err(Error::parse(
                    Location::line_field(lineno, "t"),
                    format!("expected step {}, found {t}", c.states.len()),
                ));
            }
        } else {
            if let Some(prev) = current.take() {
                if id < prev.id {
                    return Err(Error::parse(
                        Location::line_field(lineno, "traj_id"),
                        "rows not sorted by traj_id",
                    ));
                }
                done.push(prev.finish(m)?);
            }
            if t != 0 {
                return Err(Error::parse(
                    Location::line_field(lineno, "t"),
                    format!("trajectory starts at step {t}"),
                ));
            }
            current = Some(PendingTrajectory {
                id,
                states: Vec::new(),
                inputs: Vec::new(),
                lines: Vec::new(),
            });
        }
        let c = current.as_mut().expect("just set");
        c.states.push(RealVector::from_vec(state));
        c.inputs.push(input.map(RealVector::from_vec));
        c.lines.push(lineno);
    }
    if let Some(prev) = current {
        done.push(prev.finish(m)?);
    }
    if done.is_empty() {
        return Err(Error::EmptyData("trajectory file has no rows".into()));
    }
    TrajectoryDataset::new(n, m, done)
}

pub fn save_trajectories(path: impl AsRef<Path>, dataset: &TrajectoryDataset) -> Result<()> {
    fs::write(path, trajectories_to_string(dataset))?;
    Ok(())
}

pub fn load_trajectories(path: impl AsRef<Path>) -> Result<TrajectoryDataset> {
    parse_trajectories(&fs::read_to_string(path)?)
}

/// `step,error` rows.
pub fn error_curve_to_string(per_step: &[f64]) -> String {
    let mut out = String::from("step,error\n");
    for (k, e) in per_step.iter().enumerate() {
        let _ = writeln!(out, "{k},{}", fmt_f64(*e));
    }
    out
}
