//! Subcommand bodies. Each returns a report; `main` maps it to an exit code.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use qdissip_core::oracle::{finite_difference_gradient, variance_double_sum};
use qdissip_core::rapid::{
    lambda_residual, lambda_stationarity_residual, zeta_stationarity_residual, ZETA_TEXT_VALUE,
};
use qdissip_core::{
    backward_pass, control_gradient, non_dominated, optimal_jumps, optimize, propagate, rapid_cost,
    sweep_alpha_detailed, sweep_alpha_warm, ControlProtocol, CostBreakdown, ModelSpec, OptimizeResult, ParetoPoint,
    RapidDriveSolution,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Restart, RunConfig};
use crate::output::{self, front_csv, num, write_json, write_run, write_text};

pub fn cmd_optimize(cfg: &RunConfig, out: &Path, seedless: bool) -> Result<OptimizeResult> {
    let result = optimize(&cfg.model, cfg.grid()?, cfg.u0, cfg.u_target, &cfg.optimizer)?;
    write_run(out, &result, cfg.model.beta, cfg, seedless)?;
    Ok(result)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    /// `(β, point)`; β is set only for β-sweeps.
    pub points: Vec<(Option<f64>, ParetoPoint)>,
    pub completed: usize,
    pub failed: usize,
    pub beta_grid_is_default: bool,
}

impl SweepReport {
    pub fn any_completed(&self) -> bool {
        self.completed > 0
    }
}

fn point_dir(out: &Path, name: &str, value: f64) -> PathBuf {
    out.join(format!("{name}_{value:.4}"))
}

/// α-sweep (`alphas`) or β-sweep at the configured α (`betas`). Each point
/// gets its own directory; `front.csv` and `front_nondominated.csv` are
/// written once all points are done.
pub fn cmd_sweep(cfg: &RunConfig, out: &Path, seedless: bool) -> Result<SweepReport> {
    let grid = cfg.grid()?;
    let alphas = cfg.alphas.as_deref().filter(|a| !a.is_empty());
    let betas = cfg.betas.as_deref().filter(|b| !b.is_empty());
    let mut runs: Vec<(Option<f64>, f64, Result<OptimizeResult, String>)> = match (alphas, betas) {
        (None, None) => bail!("sweep: alphas and betas are both empty"),
        (Some(_), Some(_)) => bail!("sweep: give either alphas or betas, not both"),
        (Some(alphas), None) => {
            let results = match cfg.restart {
                Restart::Cold => sweep_alpha_detailed(&cfg.model, grid, cfg.u0, cfg.u_target, &cfg.optimizer, alphas)?,
                Restart::Warm => sweep_alpha_warm(&cfg.model, grid, cfg.u0, cfg.u_target, &cfg.optimizer, alphas)?,
            };
            results.into_iter().map(|(a, r)| (None, a, r.map_err(|e| e.to_string()))).collect()
        }
        (None, Some(betas)) => {
            let mut sorted = betas.to_vec();
            sorted.sort_by(f64::total_cmp);
            sorted
                .par_iter()
                .map(|&beta| {
                    let model = cfg.model.with_beta(beta);
                    let r = optimize(&model, grid, cfg.u0, cfg.u_target, &cfg.optimizer).map_err(|e| e.to_string());
                    (Some(beta), cfg.optimizer.alpha, r)
                })
                .collect()
        }
    };

    let mut points = Vec::with_capacity(runs.len());
    for (beta, alpha, result) in runs.drain(..) {
        let model_beta = beta.unwrap_or(cfg.model.beta);
        let dir = match beta {
            Some(b) => point_dir(out, "beta", b),
            None => point_dir(out, "alpha", alpha),
        };
        let point = match &result {
            Ok(r) => {
                let mut point_cfg = cfg.clone();
                point_cfg.model = cfg.model.with_beta(model_beta);
                point_cfg.optimizer.alpha = alpha;
                write_run(&dir, r, model_beta, &point_cfg, seedless)?;
                ParetoPoint::from_result(alpha, model_beta, r)
            }
            Err(msg) => {
                std::fs::create_dir_all(&dir)?;
                write_text(&dir.join("error.txt"), &format!("{msg}\n"))?;
                ParetoPoint {
                    alpha,
                    w_diss: f64::NAN,
                    beta_variance: f64::NAN,
                    total_j: f64::NAN,
                    iterations_run: 0,
                    converged: false,
                    error: Some(msg.clone()),
                }
            }
        };
        points.push((beta, point));
    }

    std::fs::create_dir_all(out)?;
    write_text(&out.join("front.csv"), &front_csv(&points))?;
    if betas.is_none() {
        let plain: Vec<ParetoPoint> = points.iter().map(|(_, p)| p.clone()).collect();
        let filtered: Vec<(Option<f64>, ParetoPoint)> = non_dominated(&plain).into_iter().map(|p| (None, p)).collect();
        write_text(&out.join("front_nondominated.csv"), &front_csv(&filtered))?;
    }
    let failed = points.iter().filter(|(_, p)| p.is_failed()).count();
    let report = SweepReport {
        completed: points.len() - failed,
        failed,
        points,
        beta_grid_is_default: betas.is_some() && cfg.betas_default,
    };
    write_json(
        &out.join("sweep.json"),
        &serde_json::json!({
            "kind": if betas.is_some() { "beta" } else { "alpha" },
            "restart": cfg.restart,
            "completed": report.completed,
            "failed": report.failed,
            "beta_grid": if report.beta_grid_is_default { "default (chosen, not published)" } else { "configured" },
        }),
    )?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct RapidReport {
    pub solution: RapidDriveSolution,
    pub plateau: f64,
    pub plateau_w_diss: f64,
    pub plateau_variance: f64,
    pub zeta_residual: f64,
    pub zeta_text_value: Option<f64>,
    pub zeta_text_residual: Option<f64>,
    pub zeta_text_flagged: Option<bool>,
    pub lambda_equation_residual: Option<f64>,
    pub optimized: Option<CostBreakdown>,
}

fn comparison_row(label: &str, w_diss: f64, variance: f64, beta: f64) -> String {
    format!("{label},{},{},{}\n", num(w_diss), num(variance), num(beta * variance))
}

/// Jump-plateau-jump baseline plus a comparison against an optimized
/// protocol (read from `protocol` or computed with the configured optimizer).
pub fn cmd_rapid_drive(cfg: &RunConfig, out: &Path, seedless: bool) -> Result<RapidReport> {
    let model = &cfg.model;
    let (u0, ut, beta) = (cfg.u0, cfg.u_target, model.beta);
    let grid = cfg.grid()?;
    let dt = grid.dt();
    let n = grid.steps();
    let solution = optimal_jumps(model, u0, ut, cfg.horizon)?;
    let plateau = cfg.plateau.unwrap_or(solution.zeta);
    let at = |c: f64| rapid_cost(model, &vec![c; n + 1], dt, u0, ut);
    let chosen = at(plateau)?;

    let zeta_residual = zeta_stationarity_residual(model, solution.zeta, u0, ut)?;
    let (zeta_text_value, zeta_text_residual, lambda_equation_residual) = if solution.closed_form {
        let r = zeta_stationarity_residual(model, ZETA_TEXT_VALUE * ut, u0, ut)?;
        (Some(ZETA_TEXT_VALUE * ut), Some(r), Some(lambda_residual(solution.lambda_jump, ut, beta)))
    } else {
        (None, None, None)
    };

    std::fs::create_dir_all(out)?;
    let optimized = match &cfg.protocol {
        Some(path) => {
            let p = output::read_protocol(path, ut)?;
            let traj = propagate(model, &p)?;
            Some((p.clone(), qdissip_core::evaluate_cost(model, &p, &traj, cfg.optimizer.alpha, cfg.optimizer.kappa)?))
        }
        None => {
            let r = cmd_optimize(cfg, &out.join("optimized"), seedless)?;
            Some((r.protocol, r.cost))
        }
    };

    let mut csv = String::from("label,w_diss,variance,beta_variance\n");
    let quench = rapid_cost(model, &[], dt, u0, ut)?;
    csv += &comparison_row("sudden_quench", quench.w_diss, quench.variance, beta);
    let z = at(solution.zeta)?;
    csv += &comparison_row("rapid_plateau_zeta", z.w_diss, z.variance, beta);
    let l = at(solution.lambda_jump)?;
    csv += &comparison_row("rapid_plateau_lambda", l.w_diss, l.variance, beta);
    if cfg.plateau.is_some() {
        csv += &comparison_row("rapid_plateau_given", chosen.w_diss, chosen.variance, beta);
    }
    if let Some((p, cost)) = &optimized {
        let estimate = rapid_cost(model, &p.controls(), p.grid.dt(), u0, ut)?;
        csv += &comparison_row("rapid_estimate_of_optimized", estimate.w_diss, estimate.variance, beta);
        csv += &comparison_row("optimized", cost.w_diss, cost.variance, beta);
    }
    write_text(&out.join("comparison.csv"), &csv)?;

    let report = RapidReport {
        solution,
        plateau,
        plateau_w_diss: chosen.w_diss,
        plateau_variance: chosen.variance,
        zeta_residual,
        zeta_text_value,
        zeta_text_residual,
        zeta_text_flagged: zeta_text_residual.map(|r| r.abs() > cfg.thresholds.rapid_tol),
        lambda_equation_residual,
        optimized: optimized.map(|(_, c)| c),
    };
    write_json(&out.join("rapid_drive.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub thresholds: crate::config::Thresholds,
    pub checks: Vec<Check>,
    pub zeta_text_value: Option<f64>,
    pub zeta_text_residual: Option<f64>,
    pub zeta_text_flagged: Option<bool>,
    pub rapid_drive_extrapolated: bool,
    pub passed: bool,
}

fn check(name: impl Into<String>, value: f64, threshold: f64) -> Check {
    Check { name: name.into(), value, threshold, passed: value.is_finite() && value < threshold }
}

/// Smooth deterministic test protocol: the linear ramp plus a few sines.
pub fn multisine_protocol(cfg: &RunConfig) -> Result<ControlProtocol> {
    let grid = cfg.grid()?;
    let t_end = cfg.horizon;
    let ramp = (cfg.u_target - cfg.u0) / t_end;
    let v = (0..grid.steps())
        .map(|k| {
            let s = grid.time(k) / t_end;
            ramp + 1.3 * (2.0 * PI * s).sin() - 0.7 * (6.0 * PI * s + 0.4).cos() + 0.4 * (11.0 * PI * s).sin()
        })
        .collect();
    Ok(ControlProtocol::new(grid, cfg.u0, v, cfg.u_target)?)
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / (b.abs() + 1e-12)
}

/// Gradient, variance identity, conservation, stationarity and rapid-drive
/// checks on a deterministic protocol. No random numbers are drawn.
pub fn cmd_validate(cfg: &RunConfig, out: &Path) -> Result<ValidationReport> {
    let th = cfg.thresholds.clone();
    let model = &cfg.model;
    let protocol = multisine_protocol(cfg)?;
    let grid = protocol.grid;
    let traj = propagate(model, &protocol)?;
    let mut checks = Vec::new();

    let n = grid.steps();
    let count = th.fd_points.clamp(1, n);
    let indices: Vec<usize> = (0..count).map(|i| i * (n - 1) / (count - 1).max(1)).collect();
    let alphas = cfg.alphas.clone().unwrap_or_else(|| vec![0.0, 0.5, 1.0]);
    for alpha in alphas {
        let oc = cfg.optimizer.with_alpha(alpha);
        let adj = backward_pass(model, &protocol, &traj, alpha, oc.kappa)?;
        let grad = control_gradient(model, &protocol, &traj, &adj, alpha)?;
        let fd = finite_difference_gradient(model, grid, cfg.u0, cfg.u_target, &oc, &protocol, th.fd_h, &indices)?;
        let err = indices
            .iter()
            .zip(&fd)
            .map(|(&k, &f)| relative(grad[k] * grid.dt(), f))
            .fold(0.0, f64::max);
        checks.push(check(format!("gradient_fd_rel_err_alpha_{alpha}"), err, th.fd_tol));
    }

    let single = 2.0 * {
        let g = qdissip_core::control_vector();
        (0..n).map(|k| grid.dt() * protocol.v[k] * g.dot(&traj.y[k])).sum::<f64>()
    };
    let double = variance_double_sum(model, &protocol, &traj)?;
    checks.push(check("variance_single_vs_double_rel_err", relative(single, double), th.variance_tol));
    checks.push(check("trace_x_max_dev", traj.max_trace_deviation(), th.trace_tol));
    checks.push(check("trace_y_max_abs", traj.max_auxiliary_trace(), th.trace_tol));

    let stationarity = (0..=40)
        .map(|i| -4.0 + 0.2 * i as f64)
        .map(|u| -> Result<f64> { Ok((model.generator(u)? * model.gibbs_vector(u)?).amax()) })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    checks.push(check("gibbs_stationarity_max_residual", stationarity, th.stationarity_tol));

    let mut zeta_text = (None, None, None);
    let mut extrapolated = false;
    if cfg.u0 != cfg.u_target {
        let sol = optimal_jumps(model, cfg.u0, cfg.u_target, cfg.horizon)?;
        extrapolated = sol.extrapolated;
        let (lo, hi) = (cfg.u0.min(cfg.u_target), cfg.u0.max(cfg.u_target));
        let interior = |x: f64| x > lo + 1e-6 && x < hi - 1e-6;
        if interior(sol.zeta) {
            let r = zeta_stationarity_residual(model, sol.zeta, cfg.u0, cfg.u_target)?;
            checks.push(check("zeta_stationarity_residual", r.abs(), th.rapid_tol));
        }
        if sol.closed_form {
            checks.push(check(
                "lambda_equation_residual",
                lambda_residual(sol.lambda_jump, cfg.u_target, model.beta).abs(),
                1e-12,
            ));
            let r = zeta_stationarity_residual(model, ZETA_TEXT_VALUE * cfg.u_target, cfg.u0, cfg.u_target)?;
            zeta_text = (Some(ZETA_TEXT_VALUE * cfg.u_target), Some(r), Some(r.abs() > th.rapid_tol));
        } else if interior(sol.lambda_jump) {
            let r = lambda_stationarity_residual(model, sol.lambda_jump, cfg.u0, cfg.u_target)?;
            checks.push(check("lambda_stationarity_residual", r.abs(), th.rapid_tol));
        }
    }

    let passed = checks.iter().all(|c| c.passed);
    let report = ValidationReport {
        thresholds: th,
        checks,
        zeta_text_value: zeta_text.0,
        zeta_text_residual: zeta_text.1,
        zeta_text_flagged: zeta_text.2,
        rapid_drive_extrapolated: extrapolated,
        passed,
    };
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_json(&out.join("validation.json"), &report)?;
    Ok(report)
}

/// Re-propagates a written protocol and returns its cost, for round-trip
/// checks against `summary.json`.
pub fn reevaluate(model: &ModelSpec, protocol_csv: &Path, u_target: f64, alpha: f64, kappa: f64) -> Result<CostBreakdown> {
    let p = output::read_protocol(protocol_csv, u_target)?;
    let traj = propagate(model, &p)?;
    Ok(qdissip_core::evaluate_cost(model, &p, &traj, alpha, kappa)?)
}
