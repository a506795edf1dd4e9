//! File emission. Floats are written with 17 significant digits so that
//! every value round-trips exactly and reruns are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use qdissip_core::{ControlProtocol, CostRecord, OptimizeResult, ParetoPoint, TimeGrid, Trajectory};
use serde::Serialize;

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

/// `t,u,v`. The last row holds `u(T)` and an empty `v`.
pub fn protocol_csv(protocol: &ControlProtocol) -> String {
    let grid = protocol.grid;
    let u = protocol.controls();
    let mut out = String::from("t,u,v\n");
    for (k, uk) in u.iter().enumerate() {
        let v = protocol.v.get(k).map(|&v| num(v)).unwrap_or_default();
        let _ = writeln!(out, "{},{},{}", num(grid.time(k)), num(*uk), v);
    }
    out
}

pub fn trajectory_csv(grid: TimeGrid, traj: &Trajectory) -> String {
    let mut out = String::from("t,u,x1,x2,x3,x4,y1,y2,y3,y4\n");
    for k in 0..traj.len() {
        let (x, y) = (&traj.x[k], &traj.y[k]);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            num(grid.time(k)),
            num(traj.u[k]),
            num(x[0]),
            num(x[1]),
            num(x[2]),
            num(x[3]),
            num(y[0]),
            num(y[1]),
            num(y[2]),
            num(y[3])
        );
    }
    out
}

pub fn cost_history_csv(history: &[CostRecord]) -> String {
    let mut out = String::from("iteration,total_J,best_J\n");
    for r in history {
        let _ = writeln!(out, "{},{},{}", r.iteration, num(r.total_j), num(r.best_j));
    }
    out
}

/// Header `alpha,w_diss,beta_variance,total_J,iterations,converged`, with
/// an optional leading `beta` column for β-sweeps.
pub fn front_csv(points: &[(Option<f64>, ParetoPoint)]) -> String {
    let with_beta = points.iter().any(|(b, _)| b.is_some());
    let mut out = String::new();
    if with_beta {
        out.push_str("beta,");
    }
    out.push_str("alpha,w_diss,beta_variance,total_J,iterations,converged\n");
    for (beta, p) in points {
        if with_beta {
            let _ = write!(out, "{},", beta.map(num).unwrap_or_default());
        }
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            num(p.alpha),
            num(p.w_diss),
            num(p.beta_variance),
            num(p.total_j),
            p.iterations_run,
            p.converged
        );
    }
    out
}

#[derive(Debug, Serialize)]
pub struct Summary<'a, C: Serialize> {
    pub config: &'a C,
    pub mean_work: f64,
    pub delta_f: f64,
    pub w_diss: f64,
    pub variance: f64,
    pub beta_variance: f64,
    pub penalty: f64,
    pub total_j: f64,
    pub u_final: f64,
    pub iterations_run: usize,
    pub converged: bool,
    pub best_iteration: usize,
    pub v_clips: u64,
    pub u_rescales: u64,
    pub max_trace_deviation: f64,
    pub max_auxiliary_trace: f64,
    pub seedless: bool,
}

/// Writes the four per-run files into `dir`.
pub fn write_run<C: Serialize>(dir: &Path, result: &OptimizeResult, beta: f64, config: &C, seedless: bool) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let grid = result.protocol.grid;
    write(&dir.join("protocol.csv"), &protocol_csv(&result.protocol))?;
    write(&dir.join("trajectory.csv"), &trajectory_csv(grid, &result.trajectory))?;
    write(&dir.join("cost_history.csv"), &cost_history_csv(&result.cost_history))?;
    let c = &result.cost;
    let summary = Summary {
        config,
        mean_work: c.mean_work,
        delta_f: c.delta_f,
        w_diss: c.w_diss,
        variance: c.variance,
        beta_variance: beta * c.variance,
        penalty: c.penalty,
        total_j: c.total_j,
        u_final: *result.trajectory.u.last().unwrap_or(&result.protocol.u0),
        iterations_run: result.iterations_run,
        converged: result.converged,
        best_iteration: result.best_iteration,
        v_clips: result.bounds.v_clips,
        u_rescales: result.bounds.u_rescales,
        max_trace_deviation: result.trajectory.max_trace_deviation(),
        max_auxiliary_trace: result.trajectory.max_auxiliary_trace(),
        seedless,
    };
    write_json(&dir.join("summary.json"), &summary)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    write(path, &body)
}

pub fn write_text(path: &Path, body: &str) -> Result<()> {
    write(path, body)
}

/// Reads a `protocol.csv`. The grid is rebuilt from the row count and the
/// last time stamp; `u0` is the first `u` entry.
pub fn read_protocol(path: &Path, u_target: f64) -> Result<ControlProtocol> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "u", "v"] {
        bail!("{}: expected header t,u,v", path.display());
    }
    let mut t = Vec::new();
    let mut u = Vec::new();
    let mut v = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let field = |j: usize| -> Result<f64> {
            record[j].parse().with_context(|| format!("{} row {}: bad number `{}`", path.display(), i + 2, &record[j]))
        };
        t.push(field(0)?);
        u.push(field(1)?);
        if !record[2].is_empty() {
            v.push(field(2)?);
        }
    }
    if u.len() < 2 || v.len() != u.len() - 1 {
        bail!("{}: need N+1 rows with v on the first N", path.display());
    }
    let grid = TimeGrid::new(*t.last().unwrap(), v.len())?;
    Ok(ControlProtocol::new(grid, u[0], v, u_target)?)
}
