//! Brute-force reference computations used to certify the fast paths:
//! explicit time-ordered propagators, the two-time (double-sum) work
//! variance and finite-difference gradients of the cost.

use nalgebra::{Matrix4, RowVector4};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grape::OptimizerConfig;
use crate::model::{Generator, ModelSpec, StateVector};
use crate::propagation::{control_vector, evaluate_cost, propagate, s_vector, ControlProtocol, TimeGrid, Trajectory};

/// One-step maps `M_k = I + dt A(u_k)` for every interval of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorCache {
    pub dt: f64,
    pub step_matrices: Vec<Matrix4<f64>>,
}

impl PropagatorCache {
    pub fn new(model: &ModelSpec, protocol: &ControlProtocol) -> Result<Self> {
        let u = protocol.controls();
        let dt = protocol.grid.dt();
        let generators = u[..protocol.grid.steps()]
            .iter()
            .map(|&uk| model.generator(uk))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_generators(dt, generators))
    }

    /// Builds the cache from arbitrary generators, e.g. a frozen `A`.
    pub fn from_generators(dt: f64, generators: impl IntoIterator<Item = Generator>) -> Self {
        let step_matrices = generators.into_iter().map(|a| Matrix4::identity() + a * dt).collect();
        Self { dt, step_matrices }
    }

    pub fn steps(&self) -> usize {
        self.step_matrices.len()
    }
}

/// Ordered product `M_{to-1} ··· M_{from}`; the identity when `from == to`.
pub fn discrete_propagator(cache: &PropagatorCache, k_from: usize, k_to: usize) -> Result<Matrix4<f64>> {
    let n = cache.steps();
    if k_from > k_to || k_to > n {
        return Err(Error::IndexOrder { from: k_from, to: k_to, n });
    }
    Ok(cache.step_matrices[k_from..k_to]
        .iter()
        .fold(Matrix4::identity(), |acc, m| m * acc))
}

/// Two-time variance
/// `σ² = 2 Σ_{k₁} Σ_{k₂ < k₁} dt² v_{k₁} v_{k₂} gᵀ P(k₁, k₂+1) s(x_{k₂})`.
///
/// This is the auxiliary-state recursion unrolled, so it agrees with the
/// single-sum variance up to rounding. Costs `O(N²)`.
pub fn variance_double_sum(model: &ModelSpec, protocol: &ControlProtocol, traj: &Trajectory) -> Result<f64> {
    let n = protocol.grid.steps();
    if traj.x.len() != n + 1 {
        return Err(Error::LengthMismatch { what: "trajectory x", expected: n + 1, got: traj.x.len() });
    }
    let cache = PropagatorCache::new(model, protocol)?;
    variance_double_sum_with(&cache, &protocol.v, &traj.x)
}

/// Double sum over a prepared cache. `states` must hold at least `N` entries.
pub fn variance_double_sum_with(cache: &PropagatorCache, v: &[f64], states: &[StateVector]) -> Result<f64> {
    let n = cache.steps();
    if v.len() != n {
        return Err(Error::LengthMismatch { what: "control rates", expected: n, got: v.len() });
    }
    if states.len() < n {
        return Err(Error::LengthMismatch { what: "states", expected: n, got: states.len() });
    }
    let dt = cache.dt;
    let sources: Vec<StateVector> = states[..n].iter().zip(v).map(|(x, &r)| s_vector(x) * r).collect();
    let g = control_vector().transpose();

    // For each outer time k1, walk k2 downwards carrying gᵀ P(k1, k2+1).
    let per_row: Vec<f64> = (1..n)
        .into_par_iter()
        .map(|k1| {
            let mut row: RowVector4<f64> = g;
            let mut inner = 0.0;
            for k2 in (0..k1).rev() {
                inner += (row * sources[k2])[0];
                row *= cache.step_matrices[k2];
            }
            v[k1] * inner
        })
        .collect();
    // Sequential reduction keeps the result independent of the thread count.
    let total: f64 = per_row.iter().sum();
    Ok(2.0 * dt * dt * total)
}

/// Central differences `[f(v + h e_k) - f(v - h e_k)] / 2h` at `indices`.
pub fn central_differences<F>(f: F, v: &[f64], h: f64, indices: &[usize]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("step h must be > 0, got {h}")));
    }
    let mut work = v.to_vec();
    indices
        .iter()
        .map(|&k| {
            if k >= v.len() {
                return Err(Error::InvalidInput(format!("index {k} outside [0, {})", v.len())));
            }
            work[k] = v[k] + h;
            let plus = f(&work)?;
            work[k] = v[k] - h;
            let minus = f(&work)?;
            work[k] = v[k];
            Ok((plus - minus) / (2.0 * h))
        })
        .collect()
}

/// Finite-difference derivatives `∂J/∂v_k` of the total cost (weights from
/// `config`). These are plain partial derivatives, i.e. `dt` times the
/// per-unit-time gradient returned by [`crate::grape::control_gradient`].
#[allow(clippy::too_many_arguments)]
pub fn finite_difference_gradient(
    model: &ModelSpec,
    grid: TimeGrid,
    u0: f64,
    u_target: f64,
    config: &OptimizerConfig,
    protocol: &ControlProtocol,
    h: f64,
    indices: &[usize],
) -> Result<Vec<f64>> {
    let total = |v: &[f64]| -> Result<f64> {
        let p = ControlProtocol::new(grid, u0, v.to_vec(), u_target)?;
        let traj = propagate(model, &p)?;
        Ok(evaluate_cost(model, &p, &traj, config.alpha, config.kappa)?.total_j)
    };
    central_differences(total, &protocol.v, h, indices)
}
