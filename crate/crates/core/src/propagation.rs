//! Forward propagation of the augmented state `(u, x, y)` and evaluation of
//! the cost functional.
//!
//! The scheme is explicit Euler with left-endpoint evaluation:
//!
//! ```text
//! u_{k+1} = u_k + dt v_k
//! x_{k+1} = x_k + dt A(u_k) x_k
//! y_{k+1} = y_k + dt [A(u_k) y_k + v_k s(x_k)]
//! ```
//!
//! and the running costs are summed at the same left endpoints, so the
//! discrete cost is an exact algebraic function of `{v_k}`. The adjoint in
//! [`crate::grape`] is the exact transpose of this scheme.

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::model::{check_weights, Generator, ModelSpec, StateVector};

/// Steps per unit time used when no explicit step count is given.
pub const DEFAULT_STEPS_PER_UNIT_TIME: f64 = 1000.0;

/// Vectorized control operator `σ_z`: `Tr(σ_z ρ) = g·x`.
pub fn control_vector() -> StateVector {
    StateVector::new(-1.0, 1.0, 0.0, 0.0)
}

/// Uniform grid on `[0, T]` with `N` steps; `dt = T / N` is always derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        ensure_finite("T", horizon)?;
        if horizon <= 0.0 {
            return Err(Error::InvalidInput(format!("T must be > 0, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::InvalidInput("N must be >= 1".into()));
        }
        Ok(Self { horizon, steps })
    }

    /// Grid with `N = 1000 T` steps (at least one).
    pub fn with_default_density(horizon: f64) -> Result<Self> {
        let steps = (horizon * DEFAULT_STEPS_PER_UNIT_TIME).round().max(1.0) as usize;
        Self::new(horizon, steps)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Time of grid point `k` (exactly `T` at `k = N`).
    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            self.horizon * k as f64 / self.steps as f64
        }
    }
}

/// Piecewise-constant control rate `v` on a grid with a fixed initial control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlProtocol {
    pub grid: TimeGrid,
    pub u0: f64,
    pub v: Vec<f64>,
    pub u_target: f64,
}

impl ControlProtocol {
    pub fn new(grid: TimeGrid, u0: f64, v: Vec<f64>, u_target: f64) -> Result<Self> {
        ensure_finite("u0", u0)?;
        ensure_finite("u_target", u_target)?;
        if v.len() != grid.steps() {
            return Err(Error::LengthMismatch { what: "control rates", expected: grid.steps(), got: v.len() });
        }
        if let Some(k) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("v[{k}] is not finite")));
        }
        Ok(Self { grid, u0, v, u_target })
    }

    /// Constant `v = (u_target - u0) / T`.
    pub fn linear_ramp(grid: TimeGrid, u0: f64, u_target: f64) -> Result<Self> {
        let rate = (u_target - u0) / grid.horizon();
        Self::new(grid, u0, vec![rate; grid.steps()], u_target)
    }

    /// Integrated control `u_k` for `k = 0..=N`.
    pub fn controls(&self) -> Vec<f64> {
        integrate_controls(self.u0, &self.v, self.grid.dt())
    }
}

pub(crate) fn integrate_controls(u0: f64, v: &[f64], dt: f64) -> Vec<f64> {
    let mut u = Vec::with_capacity(v.len() + 1);
    let mut current = CompensatedSum::starting_at(u0);
    u.push(u0);
    for &rate in v {
        current.add(dt * rate);
        u.push(current.value());
    }
    u
}

/// States along the grid: `N + 1` entries each.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub u: Vec<f64>,
    pub x: Vec<StateVector>,
    pub y: Vec<StateVector>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// `max_k |x1 + x2 - 1|`.
    pub fn max_trace_deviation(&self) -> f64 {
        self.x.iter().map(|x| (x[0] + x[1] - 1.0).abs()).fold(0.0, f64::max)
    }

    /// `max_k |y1 + y2|`.
    pub fn max_auxiliary_trace(&self) -> f64 {
        self.y.iter().map(|y| (y[0] + y[1]).abs()).fold(0.0, f64::max)
    }

    /// `min_k (x1 x2 - x3² - x4²)`; negative values mean ρ left the state space.
    pub fn min_positivity_margin(&self) -> f64 {
        self.x
            .iter()
            .map(|x| x[0] * x[1] - x[2] * x[2] - x[3] * x[3])
            .fold(f64::INFINITY, f64::min)
    }
}

/// Positivity margin below which a trajectory is reported as unphysical.
pub const POSITIVITY_TOLERANCE: f64 = -1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub mean_work: f64,
    pub delta_f: f64,
    pub w_diss: f64,
    pub variance: f64,
    pub penalty: f64,
    pub total_j: f64,
}

/// `vec(S_ρ(σ_z))` for a unit-trace state.
pub fn s_vector(x: &StateVector) -> StateVector {
    let pop = 2.0 * x[0] * x[1];
    let diff = x[0] - x[1];
    StateVector::new(-pop, pop, diff * x[2], diff * x[3])
}

/// Jacobian `∂s/∂x`.
pub fn s_jacobian(x: &StateVector) -> Matrix4<f64> {
    let diff = x[0] - x[1];
    Matrix4::new(
        -2.0 * x[1], -2.0 * x[0], 0.0, 0.0,
        2.0 * x[1], 2.0 * x[0], 0.0, 0.0,
        x[2], -x[2], diff, 0.0,
        x[3], -x[3], 0.0, diff,
    )
}

/// Propagates from the Gibbs state at `u0` with `y_0 = 0`.
pub fn propagate(model: &ModelSpec, protocol: &ControlProtocol) -> Result<Trajectory> {
    model.validate()?;
    let mut traj = Trajectory::default();
    let mut generators = Vec::new();
    propagate_into(model, protocol.u0, &protocol.v, protocol.grid.dt(), &mut traj, &mut generators)?;
    Ok(traj)
}

/// Allocation-reusing forward pass. Fills `generators[k] = A(u_k)` for the
/// backward pass.
pub(crate) fn propagate_into(
    model: &ModelSpec,
    u0: f64,
    v: &[f64],
    dt: f64,
    traj: &mut Trajectory,
    generators: &mut Vec<Generator>,
) -> Result<()> {
    let n = v.len();
    traj.u.clear();
    traj.x.clear();
    traj.y.clear();
    generators.clear();
    traj.u.reserve(n + 1);
    traj.x.reserve(n + 1);
    traj.y.reserve(n + 1);
    generators.reserve(n);

    let mut u = u0;
    let mut u_acc = CompensatedSum::starting_at(u0);
    let mut x = model.gibbs_unchecked(u0);
    let mut y = StateVector::zeros();
    traj.u.push(u);
    traj.x.push(x);
    traj.y.push(y);

    // Rounding carries of the state updates: the stored states are
    // `sum + carry`, so per-step addition errors do not accumulate.
    let (mut x_sum, mut x_carry) = (x, StateVector::zeros());
    let (mut y_sum, mut y_carry) = (y, StateVector::zeros());
    for (k, &rate) in v.iter().enumerate() {
        let a = model.generator_unchecked(u);
        let source = s_vector(&x) * rate;
        two_sum_into(&mut x_sum, &mut x_carry, (a * x) * dt);
        two_sum_into(&mut y_sum, &mut y_carry, (a * y + source) * dt);
        let x_next = x_sum + x_carry;
        let y_next = y_sum + y_carry;
        u_acc.add(dt * rate);
        u = u_acc.value();
        if !(x_next.sum().is_finite() && y_next.sum().is_finite() && u.is_finite()) {
            return Err(Error::Divergence { step: k, what: "non-finite state".into() });
        }
        generators.push(a);
        x = x_next;
        y = y_next;
        traj.u.push(u);
        traj.x.push(x);
        traj.y.push(y);
    }
    Ok(())
}

/// `sum += inc` with the rounding error moved into `carry`, per component.
#[inline]
fn two_sum_into(sum: &mut StateVector, carry: &mut StateVector, inc: StateVector) {
    for i in 0..4 {
        let (a, b) = (sum[i], inc[i]);
        let s = a + b;
        let bb = s - a;
        carry[i] += (a - (s - bb)) + (b - bb);
        sum[i] = s;
    }
}

/// Cost functional `J = (1-α) W_diss + (αβ/2) σ² + (κ/2)(u_N - u_target)²`.
pub fn evaluate_cost(
    model: &ModelSpec,
    protocol: &ControlProtocol,
    traj: &Trajectory,
    alpha: f64,
    kappa: f64,
) -> Result<CostBreakdown> {
    model.validate()?;
    check_weights(alpha, kappa)?;
    let n = protocol.grid.steps();
    for (what, got) in [("trajectory u", traj.u.len()), ("trajectory x", traj.x.len()), ("trajectory y", traj.y.len())] {
        if got != n + 1 {
            return Err(Error::LengthMismatch { what, expected: n + 1, got });
        }
    }
    Ok(cost_unchecked(model, protocol.u0, protocol.u_target, &protocol.v, protocol.grid.dt(), traj, alpha, kappa))
}

/// Neumaier summation, used for the control integral `u_k` and the cost
/// sums. Plain accumulation leaves `O(√N ε)` noise in `u_N`, which shows up
/// in central differences of the terminal terms.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn starting_at(x: f64) -> Self {
        Self { sum: x, carry: 0.0 }
    }

    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn cost_unchecked(
    model: &ModelSpec,
    u0: f64,
    u_target: f64,
    v: &[f64],
    dt: f64,
    traj: &Trajectory,
    alpha: f64,
    kappa: f64,
) -> CostBreakdown {
    let g = control_vector();
    let mut work = CompensatedSum::default();
    let mut fluct = CompensatedSum::default();
    for (k, &rate) in v.iter().enumerate() {
        work.add(dt * rate * g.dot(&traj.x[k]));
        fluct.add(dt * rate * g.dot(&traj.y[k]));
    }
    let (work, variance) = (work.value(), 2.0 * fluct.value());
    let u_final = traj.u[v.len()];
    let delta_f = model.free_energy_unchecked(u_final) - model.free_energy_unchecked(u0);
    let w_diss = work - delta_f;
    let miss = u_final - u_target;
    let penalty = 0.5 * kappa * miss * miss;
    let total_j = (1.0 - alpha) * w_diss + 0.5 * alpha * model.beta * variance + penalty;
    CostBreakdown { mean_work: work, delta_f, w_diss, variance, penalty, total_j }
}
