//! CSV and JSON output formats.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! inputs always give byte-identical files.

use std::io::{Read, Write};

use serde::Serialize;

use crate::error::ArtifactError;
use crate::grid::{FeedbackPolicy, SpatialGrid, ValueField};
use crate::problem::ControlProblem;
use crate::sde::SamplePath;
use crate::solver::ResidualField;

pub const VALUE_HEADER: [&str; 7] = ["x", "v", "dv", "d2v", "psi_index", "psi_u", "residual"];
pub const PATHS_HEADER: [&str; 6] = ["path", "k", "t", "y", "u", "discounted_l"];

/// One row per node. The residual column is empty at the box ends and at
/// nodes masked for proximity to a coefficient breakpoint.
pub fn write_value_csv<W: Write>(
    out: W,
    value: &ValueField,
    policy: &FeedbackPolicy,
    residual: &ResidualField,
) -> Result<(), ArtifactError> {
    let grid = value.grid();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(VALUE_HEADER)?;
    for i in 0..grid.len() {
        let res = match residual.residual[i] {
            Some(r) if residual.included[i] => r.to_string(),
            _ => String::new(),
        };
        w.write_record([
            grid.node(i).to_string(),
            value.values()[i].to_string(),
            value.dv(i).to_string(),
            value.d2v(i).to_string(),
            policy.indices()[i].to_string(),
            policy.control_at_node(i).to_string(),
            res,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the `x` and `v` columns of a value CSV back into a field on a
/// uniform grid.
pub fn read_value_csv<R: Read>(input: R) -> Result<ValueField, ArtifactError> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ArtifactError::Format(format!("missing column `{name}`")))
    };
    let (cx, cv) = (col("x")?, col("v")?);
    let (mut xs, mut vs) = (Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |c: usize| -> Result<f64, ArtifactError> {
            rec.get(c)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| ArtifactError::Format(format!("bad number on line {}", line + 2)))
        };
        xs.push(parse(cx)?);
        vs.push(parse(cv)?);
    }
    if xs.len() < 3 {
        return Err(ArtifactError::Format("need at least 3 rows".into()));
    }
    let grid = SpatialGrid::new(xs[0], xs[xs.len() - 1], xs.len()).map_err(|e| ArtifactError::Format(e.to_string()))?;
    let h = grid.spacing();
    if let Some(i) = (0..xs.len()).find(|&i| (xs[i] - grid.node(i)).abs() > 1e-9 * (1.0 + h)) {
        return Err(ArtifactError::Format(format!("x column is not uniform at row {i}")));
    }
    ValueField::new(grid, vs).map_err(|e| ArtifactError::Format(e.to_string()))
}

/// One row per step with `discounted_l = e^{-rho t} l(y, u)` at the left
/// endpoint.
pub fn write_paths_csv<W: Write>(out: W, problem: &ControlProblem, paths: &[SamplePath]) -> Result<(), ArtifactError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PATHS_HEADER)?;
    for p in paths {
        for (k, &u) in p.controls.iter().enumerate() {
            let t = p.time(k);
            let y = p.states[k];
            let l = problem.eval_cost(y, u).map_err(|e| ArtifactError::Format(e.to_string()))?;
            w.write_record([
                p.path_index.to_string(),
                k.to_string(),
                t.to_string(),
                y.to_string(),
                u.to_string(),
                ((-problem.rho * t).exp() * l).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<W: Write, T: Serialize + ?Sized>(mut out: W, value: &T) -> Result<(), ArtifactError> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}
