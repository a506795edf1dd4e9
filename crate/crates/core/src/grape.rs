//! Discrete-adjoint gradient and projected gradient descent on the control
//! rate `v`.
//!
//! The backward pass is the exact transpose of the forward Euler scheme in
//! [`crate::propagation`]. With costates `Π_k, Λ_k, p_k` (terminal values
//! `Π_N = Λ_N = 0`, `p_N = ∂φ/∂u_N`):
//!
//! ```text
//! Π_k = Π_{k+1} + dt [A_kᵀ Π_{k+1} + (1-α) v_k g + v_k J(x_k)ᵀ Λ_{k+1}]
//! Λ_k = Λ_{k+1} + dt [A_kᵀ Λ_{k+1} + αβ v_k g]
//! p_k = p_{k+1} + dt [Π_{k+1}ᵀ ∂A_k x_k + Λ_{k+1}ᵀ ∂A_k y_k]
//! ```
//!
//! and the control gradient (per unit time) is
//! `δv_k = (1-α) g·x_k + αβ g·y_k + p_{k+1} + Λ_{k+1}·s(x_k)`,
//! so that `∂J/∂v_k = dt δv_k` exactly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_weights, Generator, ModelSpec, StateVector};
use crate::propagation::{
    control_vector, CompensatedSum, cost_unchecked, propagate_into, s_jacobian, s_vector, ControlProtocol, CostBreakdown, TimeGrid,
    Trajectory,
};

/// Costates along the grid, `N + 1` entries each.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdjointTrajectory {
    pub costate_x: Vec<StateVector>,
    pub costate_y: Vec<StateVector>,
    pub costate_u: Vec<f64>,
}

fn check_traj(protocol: &ControlProtocol, traj: &Trajectory) -> Result<()> {
    let expected = protocol.grid.steps() + 1;
    for (what, got) in [("trajectory u", traj.u.len()), ("trajectory x", traj.x.len()), ("trajectory y", traj.y.len())] {
        if got != expected {
            return Err(Error::LengthMismatch { what, expected, got });
        }
    }
    Ok(())
}

/// Backward pass for the cost with weight `alpha` and penalty `kappa`.
pub fn backward_pass(
    model: &ModelSpec,
    protocol: &ControlProtocol,
    traj: &Trajectory,
    alpha: f64,
    kappa: f64,
) -> Result<AdjointTrajectory> {
    model.validate()?;
    check_weights(alpha, kappa)?;
    check_traj(protocol, traj)?;
    let generators: Vec<Generator> = traj.u[..protocol.grid.steps()]
        .iter()
        .map(|&u| model.generator_unchecked(u))
        .collect();
    let mut adj = AdjointTrajectory::default();
    backward_into(
        model,
        &protocol.v,
        protocol.grid.dt(),
        protocol.u_target,
        traj,
        &generators,
        alpha,
        kappa,
        &mut adj,
    )?;
    Ok(adj)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn backward_into(
    model: &ModelSpec,
    v: &[f64],
    dt: f64,
    u_target: f64,
    traj: &Trajectory,
    generators: &[Generator],
    alpha: f64,
    kappa: f64,
    adj: &mut AdjointTrajectory,
) -> Result<()> {
    let n = v.len();
    let g = control_vector();
    let work_weight = 1.0 - alpha;
    let fluct_weight = alpha * model.beta;

    adj.costate_x.clear();
    adj.costate_y.clear();
    adj.costate_u.clear();
    adj.costate_x.resize(n + 1, StateVector::zeros());
    adj.costate_y.resize(n + 1, StateVector::zeros());
    adj.costate_u.resize(n + 1, 0.0);
    adj.costate_u[n] = model.terminal_adjoint_unchecked(traj.u[n], u_target, alpha, kappa);

    for k in (0..n).rev() {
        let a = &generators[k];
        let da = model.generator_derivative_unchecked(traj.u[k]);
        let (x, y) = (&traj.x[k], &traj.y[k]);
        let pi_next = adj.costate_x[k + 1];
        let lam_next = adj.costate_y[k + 1];
        let rate = v[k];

        let pi = pi_next
            + (a.tr_mul(&pi_next) + g * (work_weight * rate) + s_jacobian(x).tr_mul(&lam_next) * rate) * dt;
        let lam = lam_next + (a.tr_mul(&lam_next) + g * (fluct_weight * rate)) * dt;
        let p = adj.costate_u[k + 1] + dt * (pi_next.dot(&(da * x)) + lam_next.dot(&(da * y)));

        if !(pi.sum().is_finite() && lam.sum().is_finite() && p.is_finite()) {
            return Err(Error::Divergence { step: k, what: "non-finite costate".into() });
        }
        adj.costate_x[k] = pi;
        adj.costate_y[k] = lam;
        adj.costate_u[k] = p;
    }
    Ok(())
}

/// Gradient of `J` with respect to `v` per unit time: `∂J/∂v_k = dt δv_k`.
pub fn control_gradient(
    model: &ModelSpec,
    protocol: &ControlProtocol,
    traj: &Trajectory,
    adj: &AdjointTrajectory,
    alpha: f64,
) -> Result<Vec<f64>> {
    check_traj(protocol, traj)?;
    let expected = protocol.grid.steps() + 1;
    for (what, got) in [
        ("costate x", adj.costate_x.len()),
        ("costate y", adj.costate_y.len()),
        ("costate u", adj.costate_u.len()),
    ] {
        if got != expected {
            return Err(Error::LengthMismatch { what, expected, got });
        }
    }
    let mut grad = Vec::new();
    gradient_into(model, protocol.grid.steps(), traj, adj, alpha, &mut grad);
    Ok(grad)
}

pub(crate) fn gradient_into(
    model: &ModelSpec,
    n: usize,
    traj: &Trajectory,
    adj: &AdjointTrajectory,
    alpha: f64,
    grad: &mut Vec<f64>,
) {
    let g = control_vector();
    let fluct_weight = alpha * model.beta;
    grad.clear();
    grad.extend((0..n).map(|k| {
        let x = &traj.x[k];
        (1.0 - alpha) * g.dot(x)
            + fluct_weight * g.dot(&traj.y[k])
            + adj.costate_u[k + 1]
            + adj.costate_y[k + 1].dot(&s_vector(x))
    }));
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub alpha: f64,
    pub kappa: f64,
    pub eta: f64,
    pub max_iters: usize,
    pub u_bounds: (f64, f64),
    pub v_bounds: (f64, f64),
    /// Early exit when `|J_i - J_{i-window}| / |J_i|` drops below this.
    pub tol_rel_j: f64,
    pub window: usize,
    /// Keep every `record_every`-th cost in the history.
    pub record_every: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            kappa: 10.0,
            eta: 0.01,
            max_iters: 1_000_000,
            u_bounds: (-8.0, 8.0),
            v_bounds: (-100.0, 100.0),
            tol_rel_j: 1e-10,
            window: 100,
            record_every: 100,
        }
    }
}

impl OptimizerConfig {
    /// Defaults with the learning rate scaled as `η = 0.01 / T`.
    pub fn for_horizon(horizon: f64) -> Self {
        Self { eta: default_learning_rate(horizon), ..Self::default() }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_weights(self.alpha, self.kappa)?;
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidInput(format!("eta must be > 0, got {}", self.eta)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be >= 1".into()));
        }
        if self.window == 0 || self.record_every == 0 {
            return Err(Error::InvalidInput("window and record_every must be >= 1".into()));
        }
        for (name, (lo, hi)) in [("u_bounds", self.u_bounds), ("v_bounds", self.v_bounds)] {
            if !(lo < hi) {
                return Err(Error::InvalidInput(format!("{name} must satisfy lo < hi, got ({lo}, {hi})")));
            }
        }
        Ok(())
    }
}

pub fn default_learning_rate(horizon: f64) -> f64 {
    0.01 / horizon
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRecord {
    pub iteration: usize,
    pub total_j: f64,
    pub best_j: f64,
}

/// How often the box bounds had to act during the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BoundActivity {
    pub v_clips: u64,
    pub u_rescales: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub protocol: ControlProtocol,
    pub trajectory: Trajectory,
    pub cost: CostBreakdown,
    pub cost_history: Vec<CostRecord>,
    pub iterations_run: usize,
    pub converged: bool,
    pub best_iteration: usize,
    pub bounds: BoundActivity,
}

/// Clips `v` to its box, then walks the recurrence and shrinks any `v_k`
/// that would push `u` out of its box.
fn project(v: &mut [f64], u0: f64, dt: f64, config: &OptimizerConfig, activity: &mut BoundActivity) {
    let (vlo, vhi) = config.v_bounds;
    let (ulo, uhi) = config.u_bounds;
    let mut acc = CompensatedSum::starting_at(u0);
    for rate in v.iter_mut() {
        if *rate < vlo || *rate > vhi {
            *rate = rate.clamp(vlo, vhi);
            activity.v_clips += 1;
        }
        let mut trial = acc;
        trial.add(dt * *rate);
        let next = trial.value();
        if next < ulo || next > uhi {
            *rate = (next.clamp(ulo, uhi) - acc.value()) / dt;
            activity.u_rescales += 1;
        }
        acc.add(dt * *rate);
    }
}

/// Gradient descent from a linear ramp between `u0` and `u_target`.
pub fn optimize(
    model: &ModelSpec,
    grid: TimeGrid,
    u0: f64,
    u_target: f64,
    config: &OptimizerConfig,
) -> Result<OptimizeResult> {
    let init = ControlProtocol::linear_ramp(grid, u0, u_target)?;
    optimize_from(model, init, config)
}

/// Gradient descent from an arbitrary initial protocol.
pub fn optimize_from(model: &ModelSpec, init: ControlProtocol, config: &OptimizerConfig) -> Result<OptimizeResult> {
    model.validate()?;
    config.validate()?;
    let grid = init.grid;
    let (n, dt) = (grid.steps(), grid.dt());
    let (u0, u_target) = (init.u0, init.u_target);
    let (alpha, kappa) = (config.alpha, config.kappa);

    let mut v = init.v;
    let mut bounds = BoundActivity::default();
    project(&mut v, u0, dt, config, &mut bounds);

    let mut traj = Trajectory::default();
    let mut generators = Vec::with_capacity(n);
    let mut adj = AdjointTrajectory::default();
    let mut grad = Vec::with_capacity(n);

    let mut best_j = f64::INFINITY;
    let mut best_v = v.clone();
    let mut best_iteration = 0;
    let mut history = Vec::new();
    let mut recent: Vec<f64> = Vec::with_capacity(config.window + 1);
    let mut converged = false;
    let mut iterations_run = 0;

    let diverged = |iteration: usize, source: Error| Error::OptimizerDivergence { iteration, source: Box::new(source) };

    for iteration in 0..config.max_iters {
        propagate_into(model, u0, &v, dt, &mut traj, &mut generators).map_err(|e| diverged(iteration, e))?;
        let cost = cost_unchecked(model, u0, u_target, &v, dt, &traj, alpha, kappa);
        if !cost.total_j.is_finite() {
            return Err(diverged(iteration, Error::NumericalDomain("non-finite cost".into())));
        }
        iterations_run = iteration + 1;
        if cost.total_j < best_j {
            best_j = cost.total_j;
            best_v.copy_from_slice(&v);
            best_iteration = iteration;
        }
        if iteration % config.record_every == 0 {
            history.push(CostRecord { iteration, total_j: cost.total_j, best_j });
        }

        if recent.len() == config.window {
            let old = recent.remove(0);
            let change = (cost.total_j - old).abs() / cost.total_j.abs().max(1e-12);
            if change < config.tol_rel_j {
                converged = true;
                if iteration % config.record_every != 0 {
                    history.push(CostRecord { iteration, total_j: cost.total_j, best_j });
                }
                break;
            }
        }
        recent.push(cost.total_j);

        backward_into(model, &v, dt, u_target, &traj, &generators, alpha, kappa, &mut adj)
            .map_err(|e| diverged(iteration, e))?;
        gradient_into(model, n, &traj, &adj, alpha, &mut grad);
        for (rate, dv) in v.iter_mut().zip(&grad) {
            *rate -= config.eta * dv;
        }
        if v.iter().any(|r| !r.is_finite()) {
            return Err(diverged(iteration, Error::NumericalDomain("non-finite control update".into())));
        }
        project(&mut v, u0, dt, config, &mut bounds);
    }

    if !converged {
        // The last update has not been evaluated yet.
        let iteration = iterations_run;
        propagate_into(model, u0, &v, dt, &mut traj, &mut generators).map_err(|e| diverged(iteration, e))?;
        let cost = cost_unchecked(model, u0, u_target, &v, dt, &traj, alpha, kappa);
        if cost.total_j < best_j {
            best_j = cost.total_j;
            best_v.copy_from_slice(&v);
            best_iteration = iteration;
        }
        history.push(CostRecord { iteration, total_j: cost.total_j, best_j });
    }

    let protocol = ControlProtocol { grid, u0, v: best_v, u_target };
    propagate_into(model, u0, &protocol.v, dt, &mut traj, &mut generators)?;
    let cost = cost_unchecked(model, u0, u_target, &protocol.v, dt, &traj, alpha, kappa);
    Ok(OptimizeResult {
        protocol,
        trajectory: traj,
        cost,
        cost_history: history,
        iterations_run,
        converged,
        best_iteration,
        bounds,
    })
}

/// One point of a trade-off sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub alpha: f64,
    pub w_diss: f64,
    pub beta_variance: f64,
    pub total_j: f64,
    pub iterations_run: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ParetoPoint {
    pub fn from_result(alpha: f64, beta: f64, result: &OptimizeResult) -> Self {
        Self {
            alpha,
            w_diss: result.cost.w_diss,
            beta_variance: beta * result.cost.variance,
            total_j: result.cost.total_j,
            iterations_run: result.iterations_run,
            converged: result.converged,
            error: None,
        }
    }

    pub fn failed(alpha: f64, error: &Error) -> Self {
        Self {
            alpha,
            w_diss: f64::NAN,
            beta_variance: f64::NAN,
            total_j: f64::NAN,
            iterations_run: 0,
            converged: false,
            error: Some(error.to_string()),
        }
    }

    pub fn is_failed(&self) -> bool {
        self.error.is_some()
    }
}

fn check_alphas(alphas: &[f64]) -> Result<()> {
    match alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        Some(a) => Err(Error::InvalidInput(format!("alpha {a} outside [0, 1]"))),
        None => Ok(()),
    }
}

/// Runs [`optimize`] independently for each α (cold start from a linear
/// ramp every time) and returns the full results sorted by α. Points are
/// evaluated on the current rayon pool.
pub fn sweep_alpha_detailed(
    model: &ModelSpec,
    grid: TimeGrid,
    u0: f64,
    u_target: f64,
    base: &OptimizerConfig,
    alphas: &[f64],
) -> Result<Vec<(f64, Result<OptimizeResult>)>> {
    check_alphas(alphas)?;
    let mut sorted = alphas.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted
        .par_iter()
        .map(|&alpha| {
            let config = base.with_alpha(alpha);
            (alpha, optimize(model, grid, u0, u_target, &config))
        })
        .collect())
}

/// Continuation variant: each α starts from the previous α's optimum.
/// Sequential by construction.
pub fn sweep_alpha_warm(
    model: &ModelSpec,
    grid: TimeGrid,
    u0: f64,
    u_target: f64,
    base: &OptimizerConfig,
    alphas: &[f64],
) -> Result<Vec<(f64, Result<OptimizeResult>)>> {
    check_alphas(alphas)?;
    let mut sorted = alphas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut start = ControlProtocol::linear_ramp(grid, u0, u_target)?;
    let mut out = Vec::with_capacity(sorted.len());
    for alpha in sorted {
        let result = optimize_from(model, start.clone(), &base.with_alpha(alpha));
        if let Ok(r) = &result {
            start = r.protocol.clone();
        }
        out.push((alpha, result));
    }
    Ok(out)
}

/// Pareto data for each α, sorted by α.
pub fn sweep_alpha(
    model: &ModelSpec,
    grid: TimeGrid,
    u0: f64,
    u_target: f64,
    base: &OptimizerConfig,
    alphas: &[f64],
) -> Result<Vec<ParetoPoint>> {
    Ok(sweep_alpha_detailed(model, grid, u0, u_target, base, alphas)?
        .into_iter()
        .map(|(alpha, r)| match r {
            Ok(res) => ParetoPoint::from_result(alpha, model.beta, &res),
            Err(e) => ParetoPoint::failed(alpha, &e),
        })
        .collect())
}

/// `α = 0, step, 2 step, ..., 1`.
pub fn alpha_grid(step: f64) -> Vec<f64> {
    let count = (1.0 / step).round() as usize;
    (0..=count).map(|i| (i as f64 * step).min(1.0)).collect()
}

/// Drops failed points and points dominated in `(w_diss, beta_variance)`.
/// Order of the survivors is preserved.
pub fn non_dominated(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let ok: Vec<&ParetoPoint> = points.iter().filter(|p| !p.is_failed()).collect();
    ok.iter()
        .filter(|p| {
            !ok.iter().any(|q| {
                q.w_diss <= p.w_diss
                    && q.beta_variance <= p.beta_variance
                    && (q.w_diss < p.w_diss || q.beta_variance < p.beta_variance)
            })
        })
        .map(|p| (*p).clone())
        .collect()
}
