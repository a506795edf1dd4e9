//! Rapid-driving baseline: protocols made of an initial jump, a plateau and
//! a final jump, with the state frozen near the initial Gibbs state.
//!
//! For a plateau at `c` lasting `T` the excess work and variance are
//!
//! ```text
//! W_diss = S(π₀‖π_T)/β + T (u_T - c) R(c)
//! σ²     = V(π₀‖π_T)/β² + T [(u_T - c)² G(c) + (u_T - c) B(c) c]
//! ```
//!
//! with `R, G, B` obtained from the generator acting on `π₀` and `{σ_z, π₀}`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::model::{ModelKind, ModelSpec, StateVector};
use crate::propagation::control_vector;

/// Plateau level quoted in prose alongside the closed-form result
/// `ζ = 3u_T/4`. It does not satisfy the stationarity condition and is only
/// reported for comparison.
pub const ZETA_TEXT_VALUE: f64 = 0.6;

/// Rounded fluctuation-minimising plateau quoted for `u_T = 1, β = 1`.
pub const LAMBDA_TEXT_VALUE: f64 = 0.77;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rgb {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RapidCost {
    pub w_diss: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RapidDriveSolution {
    /// Dissipation-minimising plateau.
    pub zeta: f64,
    /// Fluctuation-minimising plateau.
    pub lambda_jump: f64,
    /// Rapid-drive `W_diss` with the plateau at `zeta`.
    pub w_diss_at: f64,
    /// Rapid-drive `σ²` with the plateau at `lambda_jump`.
    pub variance_at: f64,
    /// Whether the closed forms were used (spin–boson, Δ = 0, u₀ = 0).
    pub closed_form: bool,
    /// Outside the spin–boson setting the expansion is applied as is.
    pub extrapolated: bool,
}

fn check_probabilities(name: &str, p: [f64; 2]) -> Result<()> {
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) || ((p[0] + p[1]) - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!("{name} = {p:?} is not a probability pair")));
    }
    Ok(())
}

/// Log-likelihood ratios `ln p_i - ln q_i` on the support of `p`.
fn log_ratios(p: [f64; 2], q: [f64; 2]) -> Result<[Option<f64>; 2]> {
    check_probabilities("p", p)?;
    check_probabilities("q", q)?;
    let mut out = [None, None];
    for i in 0..2 {
        if p[i] > 0.0 {
            if q[i] == 0.0 {
                return Err(Error::InfiniteDivergence);
            }
            out[i] = Some(p[i].ln() - q[i].ln());
        }
    }
    Ok(out)
}

/// Relative entropy `S(p‖q) = Σ p_i ln(p_i/q_i)` of commuting states given by
/// their eigenvalues in a shared basis.
pub fn relative_entropy(p: [f64; 2], q: [f64; 2]) -> Result<f64> {
    let l = log_ratios(p, q)?;
    Ok((0..2).filter_map(|i| l[i].map(|r| p[i] * r)).sum())
}

/// Relative entropy variance `Σ p_i (ln p_i - ln q_i)² - S²`.
pub fn relative_entropy_variance(p: [f64; 2], q: [f64; 2]) -> Result<f64> {
    let l = log_ratios(p, q)?;
    let s: f64 = (0..2).filter_map(|i| l[i].map(|r| p[i] * r)).sum();
    let second: f64 = (0..2).filter_map(|i| l[i].map(|r| p[i] * r * r)).sum();
    Ok(second - s * s)
}

/// Bloch vector of a vectorized unit-trace state.
fn bloch(x: &StateVector) -> [f64; 3] {
    [2.0 * x[2], 2.0 * x[3], x[1] - x[0]]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// `log ρ = a I + b n·σ` for a full-rank qubit state. The small eigenvalue
/// comes from the determinant so that nearly pure states keep precision.
fn log_decomposition(x: &StateVector) -> Result<(f64, f64, [f64; 3])> {
    let r = bloch(x);
    let len = dot3(r, r).sqrt();
    let det = x[0] * x[1] - x[2] * x[2] - x[3] * x[3];
    let plus = 0.5 * (1.0 + len);
    let minus = 2.0 * det / (1.0 + len);
    if !(minus > 0.0) {
        return Err(Error::InvalidInput("state is not full rank".into()));
    }
    let a = 0.5 * (plus.ln() + minus.ln());
    if len == 0.0 {
        return Ok((a, 0.0, [0.0; 3]));
    }
    let b = 0.5 * (plus.ln() - minus.ln());
    Ok((a, b, [r[0] / len, r[1] / len, r[2] / len]))
}

/// Relative entropy and its variance for two full-rank, possibly
/// non-commuting qubit states.
pub fn relative_entropy_states(p: &StateVector, q: &StateVector) -> Result<(f64, f64)> {
    let rp = bloch(p);
    let (ap, bp, np) = log_decomposition(p)?;
    let (aq, bq, nq) = log_decomposition(q)?;
    let self_term = ap + bp * dot3(rp, np);
    let cross_term = aq + bq * dot3(rp, nq);
    let s = self_term - cross_term;
    let c = ap - aq;
    let w = [bp * np[0] - bq * nq[0], bp * np[1] - bq * nq[1], bp * np[2] - bq * nq[2]];
    let second = c * c + dot3(w, w) + 2.0 * c * dot3(w, rp);
    Ok((s, second - s * s))
}

/// `R(u) = Tr[σ_z L_u(π₀)]`, `G(u) = ½Tr[{σ_z,σ_z} L_u(π₀)]`,
/// `B(u) = Tr[σ_z L_u({σ_z, π₀})]` with `π₀` the Gibbs state at `u0`.
pub fn rgb_coefficients(model: &ModelSpec, u: f64, u0: f64) -> Result<Rgb> {
    let a = model.generator(u)?;
    let pi0 = model.gibbs_vector(u0)?;
    let g = control_vector();
    let flow = a * pi0;
    let anti = StateVector::new(-2.0 * pi0[0], 2.0 * pi0[1], 0.0, 0.0);
    Ok(Rgb {
        r: g.dot(&flow),
        g: flow[0] + flow[1],
        b: g.dot(&(a * anti)),
    })
}

/// Closed forms for the spin–boson model with Δ = 0 and `π₀ = I/2`:
/// `R = -γ(u)`, `G = 0`, `B = -2γ(u) coth(βu)` with `γ(u) = k u³`, `u > 0`.
pub fn rgb_closed_form(model: &ModelSpec, u: f64) -> Rgb {
    let gamma = model.k * u * u * u;
    Rgb { r: -gamma, g: 0.0, b: -2.0 * gamma / (model.beta * u).tanh() }
}

/// Rapid-drive estimate for a control history `u` sampled on a uniform grid
/// with spacing `dt` (trapezoidal rule). An empty or single-point history is
/// the sudden quench.
pub fn rapid_cost(model: &ModelSpec, u: &[f64], dt: f64, u0: f64, u_target: f64) -> Result<RapidCost> {
    ensure_finite("dt", dt)?;
    let (s, v) = relative_entropy_states(&model.gibbs_vector(u0)?, &model.gibbs_vector(u_target)?)?;
    let beta = model.beta;
    let mut work = Vec::with_capacity(u.len());
    let mut fluct = Vec::with_capacity(u.len());
    for &uk in u {
        let c = rgb_coefficients(model, uk, u0)?;
        let gap = u_target - uk;
        work.push(gap * c.r);
        fluct.push(gap * gap * c.g + gap * c.b * uk);
    }
    Ok(RapidCost {
        w_diss: s / beta + trapezoid(&work, dt),
        variance: v / (beta * beta) + trapezoid(&fluct, dt),
    })
}

fn trapezoid(f: &[f64], dt: f64) -> f64 {
    if f.len() < 2 {
        return 0.0;
    }
    let inner: f64 = f[1..f.len() - 1].iter().sum();
    dt * (inner + 0.5 * (f[0] + f[f.len() - 1]))
}

/// Left-hand side minus right-hand side of the closed-form stationarity
/// condition for the fluctuation-minimising plateau:
/// `(5Λ - 4u_T) coth(βΛ) - βΛ(Λ - u_T) csch²(βΛ)`.
pub fn lambda_residual(lambda: f64, u_target: f64, beta: f64) -> f64 {
    let x = beta * lambda;
    let sinh = x.sinh();
    (5.0 * lambda - 4.0 * u_target) / x.tanh() - x * (lambda - u_target) / (sinh * sinh)
}

/// Roots of `f` on `(lo, hi)`: sign scan over `samples` cells, then
/// bisection of every bracket until `|f| < tol` or the bracket is exhausted.
pub fn bracketed_roots<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, samples: usize, tol: f64) -> Vec<f64> {
    let step = (hi - lo) / samples as f64;
    let mut roots = Vec::new();
    let mut left = lo;
    let mut f_left = f(left);
    for i in 1..=samples {
        let right = if i == samples { hi } else { lo + step * i as f64 };
        let f_right = f(right);
        if f_left == 0.0 {
            roots.push(left);
        } else if f_left.signum() != f_right.signum() && f_right != 0.0 {
            roots.push(bisect(&f, left, right, f_left, tol));
        }
        left = right;
        f_left = f_right;
    }
    roots
}

fn bisect<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, mut fa: f64, tol: f64) -> f64 {
    loop {
        let mid = 0.5 * (a + b);
        if mid <= a.min(b) || mid >= a.max(b) {
            return mid;
        }
        let fm = f(mid);
        if fm.abs() < tol {
            return mid;
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
}

/// Minimiser of `f` on `[lo, hi]`: coarse scan, then bisection of the
/// slope `df` inside the best cell. Falls back to the scan point when the
/// slope does not change sign there (minimum on the boundary).
fn minimize_scalar<F, D>(f: F, df: D, lo: f64, hi: f64) -> f64
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    const SCAN: usize = 1000;
    let step = (hi - lo) / SCAN as f64;
    let best = (0..=SCAN)
        .map(|i| lo + step * i as f64)
        .min_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap_or(0.5 * (lo + hi));
    let (a, b) = ((best - step).max(lo), (best + step).min(hi));
    let (fa, fb) = (df(a), df(b));
    if fa.signum() == fb.signum() || fa == 0.0 || fb == 0.0 {
        return if fa == 0.0 { a } else if fb == 0.0 { b } else { best };
    }
    bisect(&df, a, b, fa, 1e-14)
}

/// Plateau integrand of the excess work, `(u_T - u) R(u)`.
pub fn work_integrand(model: &ModelSpec, u: f64, u0: f64, u_target: f64) -> Result<f64> {
    Ok((u_target - u) * rgb_coefficients(model, u, u0)?.r)
}

/// Plateau integrand of the variance, `(u_T - u)² G(u) + (u_T - u) B(u) u`.
pub fn variance_integrand(model: &ModelSpec, u: f64, u0: f64, u_target: f64) -> Result<f64> {
    let c = rgb_coefficients(model, u, u0)?;
    let gap = u_target - u;
    Ok(gap * gap * c.g + gap * c.b * u)
}

/// `dR/du, dG/du, dB/du` from the analytic generator derivative.
pub fn rgb_derivatives(model: &ModelSpec, u: f64, u0: f64) -> Result<Rgb> {
    let da = model.generator_derivative(u)?;
    let pi0 = model.gibbs_vector(u0)?;
    let flow = da * pi0;
    let anti = StateVector::new(-2.0 * pi0[0], 2.0 * pi0[1], 0.0, 0.0);
    Ok(Rgb {
        r: control_vector().dot(&flow),
        g: flow[0] + flow[1],
        b: control_vector().dot(&(da * anti)),
    })
}

/// `d/du [(u_T - u) R(u)]`; zero at the optimal ζ.
pub fn zeta_stationarity_residual(model: &ModelSpec, zeta: f64, u0: f64, u_target: f64) -> Result<f64> {
    let c = rgb_coefficients(model, zeta, u0)?;
    let d = rgb_derivatives(model, zeta, u0)?;
    Ok(-c.r + (u_target - zeta) * d.r)
}

/// `d/du [(u_T - u)² G(u) + (u_T - u) B(u) u]`; zero at the optimal Λ.
pub fn lambda_stationarity_residual(model: &ModelSpec, lambda: f64, u0: f64, u_target: f64) -> Result<f64> {
    let c = rgb_coefficients(model, lambda, u0)?;
    let d = rgb_derivatives(model, lambda, u0)?;
    let gap = u_target - lambda;
    Ok(-2.0 * gap * c.g + gap * gap * d.g - c.b * lambda + gap * (d.b * lambda + c.b))
}

fn closed_form_applies(model: &ModelSpec, u0: f64, u_target: f64) -> bool {
    model.kind == ModelKind::SpinBoson && model.delta == 0.0 && u0 == 0.0 && u_target > 0.0
}

/// Optimal plateau levels of the jump–plateau–jump family.
///
/// For the spin–boson model with Δ = 0 starting from `u0 = 0` the closed
/// forms are used (`ζ = 3u_T/4`, Λ by bisection of [`lambda_residual`]).
/// Otherwise both plateaus minimise the numerically evaluated integrands
/// between `u0` and `u_target`.
pub fn optimal_jumps(model: &ModelSpec, u0: f64, u_target: f64, horizon: f64) -> Result<RapidDriveSolution> {
    model.validate()?;
    ensure_finite("u0", u0)?;
    ensure_finite("u_target", u_target)?;
    ensure_finite("T", horizon)?;
    if u0 == u_target {
        return Err(Error::InvalidInput("u0 and u_target coincide; there is no jump".into()));
    }
    let closed_form = closed_form_applies(model, u0, u_target);
    let (zeta, lambda_jump) = if closed_form {
        let target = 0.8 * u_target;
        let roots = bracketed_roots(
            |l| lambda_residual(l, u_target, model.beta),
            1e-6,
            u_target - 1e-6,
            1000,
            1e-12,
        );
        let lambda = roots
            .into_iter()
            .min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()))
            .ok_or_else(|| Error::RootNotFound(format!("no sign change of the plateau condition on (0, {u_target})")))?;
        (0.75 * u_target, lambda)
    } else {
        let (lo, hi) = (u0.min(u_target), u0.max(u_target));
        let w = |u: f64| work_integrand(model, u, u0, u_target).unwrap_or(f64::INFINITY);
        let dw = |u: f64| zeta_stationarity_residual(model, u, u0, u_target).unwrap_or(f64::NAN);
        let s = |u: f64| variance_integrand(model, u, u0, u_target).unwrap_or(f64::INFINITY);
        let ds = |u: f64| lambda_stationarity_residual(model, u, u0, u_target).unwrap_or(f64::NAN);
        (minimize_scalar(w, dw, lo, hi), minimize_scalar(s, ds, lo, hi))
    };
    let w_diss_at = rapid_cost(model, &[zeta, zeta], horizon, u0, u_target)?.w_diss;
    let variance_at = rapid_cost(model, &[lambda_jump, lambda_jump], horizon, u0, u_target)?.variance;
    Ok(RapidDriveSolution {
        zeta,
        lambda_jump,
        w_diss_at,
        variance_at,
        closed_form,
        extrapolated: model.kind == ModelKind::QuantumDot,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn relative_entropy_of_identical_states() {
        let p = [0.3, 0.7];
        assert_eq!(relative_entropy(p, p).unwrap(), 0.0);
        assert_abs_diff_eq!(relative_entropy_variance(p, p).unwrap(), 0.0, epsilon = 1e-16);
    }

    #[test]
    fn relative_entropy_against_gibbs() {
        let z = 2.0 * 1.0f64.cosh();
        let q = [1.0f64.exp() / z, (-1.0f64).exp() / z];
        let s = relative_entropy([0.5, 0.5], q).unwrap();
        assert_abs_diff_eq!(s, 1.0f64.cosh().ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(s, 0.433781, epsilon = 1e-6);
        assert_abs_diff_eq!(relative_entropy_variance([0.5, 0.5], q).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_weight_conventions() {
        assert_abs_diff_eq!(relative_entropy([1.0, 0.0], [0.5, 0.5]).unwrap(), 2.0f64.ln(), epsilon = 1e-15);
        assert_eq!(relative_entropy([0.5, 0.5], [1.0, 0.0]), Err(Error::InfiniteDivergence));
        assert!(relative_entropy([0.5, 0.6], [0.5, 0.5]).is_err());
    }

    #[test]
    fn bloch_form_matches_diagonal_form() {
        let p = StateVector::new(0.35, 0.65, 0.0, 0.0);
        let q = StateVector::new(0.9, 0.1, 0.0, 0.0);
        let (s, v) = relative_entropy_states(&p, &q).unwrap();
        assert_abs_diff_eq!(s, relative_entropy([0.35, 0.65], [0.9, 0.1]).unwrap(), epsilon = 1e-14);
        assert_abs_diff_eq!(v, relative_entropy_variance([0.35, 0.65], [0.9, 0.1]).unwrap(), epsilon = 1e-14);
    }

    #[test]
    fn closed_form_coefficients_at_unit_field() {
        let model = ModelSpec::spin_boson(0.0, 1.0);
        let c = rgb_coefficients(&model, 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(c.r, -1.0, epsilon = 1e-14);
        assert_eq!(c.g, 0.0);
        assert_abs_diff_eq!(c.b, -2.0 / 1.0f64.tanh(), epsilon = 1e-14);
        assert_abs_diff_eq!(c.b, -2.626, epsilon = 1e-3);
    }

    #[test]
    fn quantum_dot_drift_coefficient() {
        let model = ModelSpec::quantum_dot(1.3);
        for u in [-2.0, -0.4, 0.7, 3.0] {
            let c = rgb_coefficients(&model, u, 0.0).unwrap();
            assert_abs_diff_eq!(c.r, -(1.3 * u).tanh(), epsilon = 1e-14);
            assert_eq!(c.g, 0.0);
        }
    }

    #[test]
    fn rapid_cost_limits() {
        let model = ModelSpec::spin_boson(0.0, 1.0);
        let quench = rapid_cost(&model, &[], 0.01, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(quench.w_diss, 1.0f64.cosh().ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(quench.variance, 1.0, epsilon = 1e-12);
        let held = rapid_cost(&model, &[1.0; 11], 0.1, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(held.w_diss, quench.w_diss, epsilon = 1e-15);
    }

    #[test]
    fn plateau_cost_closed_form() {
        // W = ln cosh 1 + T (1 - c) R(c) with R(c) = -c³
        let model = ModelSpec::spin_boson(0.0, 1.0);
        let c = 0.75;
        let r = rapid_cost(&model, &[c; 101], 0.01, 0.0, 1.0).unwrap();
        let expected = 1.0f64.cosh().ln() - (1.0 - c) * c * c * c;
        assert_abs_diff_eq!(r.w_diss, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(r.w_diss, 0.328312, epsilon = 1e-6);
    }

    #[test]
    fn lambda_root_and_zeta() {
        let model = ModelSpec::spin_boson(0.0, 1.0);
        let sol = optimal_jumps(&model, 0.0, 1.0, 1.0).unwrap();
        assert!(sol.closed_form && !sol.extrapolated);
        assert_eq!(sol.zeta, 0.75);
        assert!((sol.lambda_jump - 0.768).abs() < 1e-3);
        assert!(lambda_residual(sol.lambda_jump, 1.0, 1.0).abs() < 1e-12);
        assert!(zeta_stationarity_residual(&model, sol.zeta, 0.0, 1.0).unwrap().abs() < 1e-8);
        assert_abs_diff_eq!(zeta_stationarity_residual(&model, ZETA_TEXT_VALUE, 0.0, 1.0).unwrap(), -0.216, epsilon = 1e-12);
    }

    #[test]
    fn numeric_path_matches_closed_forms() {
        let model = ModelSpec::spin_boson(0.0, 1.0);
        let closed = optimal_jumps(&model, 0.0, 1.0, 1.0).unwrap();
        let w = |u: f64| work_integrand(&model, u, 0.0, 1.0).unwrap();
        let dw = |u: f64| zeta_stationarity_residual(&model, u, 0.0, 1.0).unwrap();
        let s = |u: f64| variance_integrand(&model, u, 0.0, 1.0).unwrap();
        let ds = |u: f64| lambda_stationarity_residual(&model, u, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(minimize_scalar(w, dw, 0.0, 1.0), closed.zeta, epsilon = 1e-12);
        assert_abs_diff_eq!(minimize_scalar(s, ds, 0.0, 1.0), closed.lambda_jump, epsilon = 1e-10);
    }

    #[test]
    fn analytic_slopes_match_differences() {
        let h = 1e-5;
        for model in [ModelSpec::spin_boson(0.7, 1.3), ModelSpec::quantum_dot(0.8)] {
            for u in [-1.5, -0.2, 0.4, 1.1] {
                let fd_w = (work_integrand(&model, u + h, 0.3, -1.0).unwrap()
                    - work_integrand(&model, u - h, 0.3, -1.0).unwrap())
                    / (2.0 * h);
                let fd_s = (variance_integrand(&model, u + h, 0.3, -1.0).unwrap()
                    - variance_integrand(&model, u - h, 0.3, -1.0).unwrap())
                    / (2.0 * h);
                assert_abs_diff_eq!(zeta_stationarity_residual(&model, u, 0.3, -1.0).unwrap(), fd_w, epsilon = 1e-8);
                assert_abs_diff_eq!(lambda_stationarity_residual(&model, u, 0.3, -1.0).unwrap(), fd_s, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn no_root_is_reported() {
        let roots = bracketed_roots(|x| x * x + 1.0, -1.0, 1.0, 100, 1e-12);
        assert!(roots.is_empty());
    }

    #[test]
    fn quantum_dot_solution_is_extrapolated() {
        let sol = optimal_jumps(&ModelSpec::quantum_dot(1.0), 2.0, -2.0, 1.0).unwrap();
        assert!(sol.extrapolated && !sol.closed_form);
        assert!(sol.zeta > -2.0 && sol.zeta < 2.0);
        assert!(sol.lambda_jump > -2.0 && sol.lambda_jump < 2.0);
    }
}
