//! Physical models: the driven spin–boson two-level system and the
//! single-level quantum dot in its pseudospin form.
//!
//! Density matrices are stored as real 4-vectors
//! `x = [ρ_gg, ρ_ee, Re ρ_eg, Im ρ_eg]` in the fixed basis `{|g>, |e>}` with
//! `σ_z = |e><e| - |g><g|`. The Hamiltonian is `H(u) = u σ_z + Δ σ_x`, and
//! every model produces the 4×4 real generator `A(u)` with `ẋ = A(u) x`.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Vectorized Lindblad generator (a real 4×4 matrix).
pub type Generator = Matrix4<f64>;

/// Vectorized 2×2 Hermitian operator `[X_gg, X_ee, Re X_eg, Im X_eg]`.
pub type StateVector = Vector4<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    SpinBoson,
    QuantumDot,
}

/// Model choice plus every bath and coupling parameter.
///
/// `delta` is the coherent coupling Δ (spin–boson only, zero for the dot),
/// `k` the spin–boson rate prefactor in `γ(E) = k E³`, `gamma_tunnel` the
/// dot's total tunnelling rate Γ and `beta` the inverse bath temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub delta: f64,
    pub k: f64,
    pub gamma_tunnel: f64,
    pub beta: f64,
}

/// Excitation and decay rates at one control value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePair {
    pub gamma_up: f64,
    pub gamma_down: f64,
    pub gamma_sum: f64,
}

/// Derivatives of the rates. For the spin–boson model they are taken with
/// respect to the gap `E`; for the dot with respect to `u` directly.
#[derive(Debug, Clone, Copy, PartialEq)]
struct RateSlopes {
    up: f64,
    down: f64,
}

/// Bose–Einstein occupation `(e^{2βE} - 1)^{-1}`.
fn bose(beta: f64, energy: f64) -> f64 {
    1.0 / (2.0 * beta * energy).exp_m1()
}

/// Fermi–Dirac occupation `(1 + e^{2βu})^{-1}`; saturates cleanly to 0 or 1.
fn fermi(beta: f64, u: f64) -> f64 {
    1.0 / (1.0 + (2.0 * beta * u).exp())
}

/// The basis rotation in the real vectorization, parameterised by
/// `c = cos θ` and `s = sin θ`. `rotation(c, s)` maps eigenframe vectors to
/// the fixed frame; `rotation(c, -s)` is its inverse.
fn rotation(c: f64, s: f64) -> Matrix4<f64> {
    Matrix4::new(
        0.5 * (1.0 + c), 0.5 * (1.0 - c), s, 0.0,
        0.5 * (1.0 - c), 0.5 * (1.0 + c), -s, 0.0,
        -0.5 * s, 0.5 * s, c, 0.0,
        0.0, 0.0, 0.0, 1.0,
    )
}

fn rotation_dc() -> Matrix4<f64> {
    Matrix4::new(
        0.5, -0.5, 0.0, 0.0,
        -0.5, 0.5, 0.0, 0.0,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 0.0,
    )
}

fn rotation_ds() -> Matrix4<f64> {
    Matrix4::new(
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, -1.0, 0.0,
        -0.5, 0.5, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0,
    )
}

/// Commutator part `-i[H, ·]` of the generator.
fn commutator(u: f64, delta: f64) -> Matrix4<f64> {
    Matrix4::new(
        0.0, 0.0, 0.0, 2.0 * delta,
        0.0, 0.0, 0.0, -2.0 * delta,
        0.0, 0.0, 0.0, 2.0 * u,
        -delta, delta, -2.0 * u, 0.0,
    )
}

fn commutator_du() -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m[(2, 3)] = 2.0;
    m[(3, 2)] = -2.0;
    m
}

/// Jump generator in the instantaneous eigenframe.
fn dissipator(up: f64, down: f64, sum: f64) -> Matrix4<f64> {
    Matrix4::new(
        -up, down, 0.0, 0.0,
        up, -down, 0.0, 0.0,
        0.0, 0.0, -0.5 * sum, 0.0,
        0.0, 0.0, 0.0, -0.5 * sum,
    )
}

/// The dissipative part is trace-annihilating, so row 2 is exactly minus row 1.
fn enforce_trace_rows(m: &mut Matrix4<f64>) {
    for j in 0..4 {
        m[(1, j)] = -m[(0, j)];
    }
}

impl ModelSpec {
    pub fn spin_boson(delta: f64, beta: f64) -> Self {
        Self {
            kind: ModelKind::SpinBoson,
            delta,
            k: 1.0,
            gamma_tunnel: 1.0,
            beta,
        }
    }

    pub fn quantum_dot(beta: f64) -> Self {
        Self {
            kind: ModelKind::QuantumDot,
            delta: 0.0,
            k: 1.0,
            gamma_tunnel: 1.0,
            beta,
        }
    }

    pub fn with_k(mut self, k: f64) -> Self {
        self.k = k;
        self
    }

    pub fn with_gamma_tunnel(mut self, gamma: f64) -> Self {
        self.gamma_tunnel = gamma;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("delta", self.delta)?;
        ensure_finite("beta", self.beta)?;
        ensure_finite("k", self.k)?;
        ensure_finite("gamma_tunnel", self.gamma_tunnel)?;
        if self.beta <= 0.0 {
            return Err(Error::InvalidInput(format!("beta must be > 0, got {}", self.beta)));
        }
        match self.kind {
            ModelKind::SpinBoson if self.k <= 0.0 => {
                Err(Error::InvalidInput(format!("k must be > 0, got {}", self.k)))
            }
            ModelKind::QuantumDot if self.gamma_tunnel <= 0.0 => Err(Error::InvalidInput(
                format!("gamma_tunnel must be > 0, got {}", self.gamma_tunnel),
            )),
            ModelKind::QuantumDot if self.delta != 0.0 => Err(Error::InvalidInput(format!(
                "the quantum dot has no coherent coupling; delta must be 0, got {}",
                self.delta
            ))),
            _ => Ok(()),
        }
    }

    fn check(&self, u: f64) -> Result<()> {
        self.validate()?;
        ensure_finite("u", u)
    }

    /// Energy gap `E = sqrt(u² + Δ²)` of `H(u)` (half the level splitting).
    pub fn gap(&self, u: f64) -> f64 {
        u.hypot(self.delta)
    }

    /// Transition rates at control value `u`.
    pub fn rates(&self, u: f64) -> Result<RatePair> {
        self.check(u)?;
        Ok(self.rates_unchecked(u))
    }

    fn rates_unchecked(&self, u: f64) -> RatePair {
        match self.kind {
            ModelKind::SpinBoson => {
                let e = self.gap(u);
                if e == 0.0 {
                    return RatePair { gamma_up: 0.0, gamma_down: 0.0, gamma_sum: 0.0 };
                }
                let gamma = self.k * e * e * e;
                let p = bose(self.beta, e);
                let gamma_up = gamma * p;
                let gamma_down = gamma * (p + 1.0);
                RatePair { gamma_up, gamma_down, gamma_sum: gamma_up + gamma_down }
            }
            ModelKind::QuantumDot => {
                let g = self.gamma_tunnel;
                RatePair {
                    gamma_up: g * fermi(self.beta, u),
                    gamma_down: g * fermi(self.beta, -u),
                    gamma_sum: g,
                }
            }
        }
    }

    fn rate_slopes(&self, u: f64) -> RateSlopes {
        match self.kind {
            ModelKind::SpinBoson => {
                let e = self.gap(u);
                if e == 0.0 {
                    return RateSlopes { up: 0.0, down: 0.0 };
                }
                let gamma = self.k * e * e * e;
                let dgamma = 3.0 * self.k * e * e;
                let p = bose(self.beta, e);
                let dp = -2.0 * self.beta * p * (p + 1.0);
                RateSlopes {
                    up: dgamma * p + gamma * dp,
                    down: dgamma * (p + 1.0) + gamma * dp,
                }
            }
            ModelKind::QuantumDot => {
                let f = fermi(self.beta, u);
                let df = -2.0 * self.beta * f * fermi(self.beta, -u);
                RateSlopes {
                    up: self.gamma_tunnel * df,
                    down: -self.gamma_tunnel * df,
                }
            }
        }
    }

    /// Vectorized generator `A(u) = C(u) + R(θ) L(E) R(-θ)`.
    pub fn generator(&self, u: f64) -> Result<Generator> {
        self.check(u)?;
        Ok(self.generator_unchecked(u))
    }

    pub(crate) fn generator_unchecked(&self, u: f64) -> Generator {
        let rates = self.rates_unchecked(u);
        let diss = dissipator(rates.gamma_up, rates.gamma_down, rates.gamma_sum);
        let mut rotated = match self.kind {
            ModelKind::QuantumDot => diss,
            ModelKind::SpinBoson => {
                let e = self.gap(u);
                if e == 0.0 {
                    diss
                } else if self.delta == 0.0 && u > 0.0 {
                    // θ = 0: the rotation is the identity.
                    diss
                } else {
                    let (c, s) = (u / e, self.delta / e);
                    rotation(c, s) * diss * rotation(c, -s)
                }
            }
        };
        enforce_trace_rows(&mut rotated);
        commutator(u, self.delta) + rotated
    }

    /// Analytic derivative `∂A/∂u`.
    ///
    /// At the spin–boson point `Δ = 0, u = 0` the rates vanish like `E²` and
    /// the limit is `∂C/∂u` alone.
    pub fn generator_derivative(&self, u: f64) -> Result<Generator> {
        self.check(u)?;
        let d = self.generator_derivative_unchecked(u);
        if d.iter().all(|v| v.is_finite()) {
            Ok(d)
        } else {
            Err(Error::NumericalDomain(format!("non-finite dA/du at u = {u}")))
        }
    }

    pub(crate) fn generator_derivative_unchecked(&self, u: f64) -> Generator {
        let mut d = match self.kind {
            ModelKind::QuantumDot => {
                let slopes = self.rate_slopes(u);
                dissipator(slopes.up, slopes.down, 0.0)
            }
            ModelKind::SpinBoson => {
                let e = self.gap(u);
                if e == 0.0 {
                    return commutator_du();
                }
                let rates = self.rates_unchecked(u);
                let slopes = self.rate_slopes(u);
                let de = u / e;
                let diss = dissipator(rates.gamma_up, rates.gamma_down, rates.gamma_sum);
                let ddiss = dissipator(slopes.up, slopes.down, slopes.up + slopes.down) * de;
                if self.delta == 0.0 {
                    // cos θ = ±1, sin θ = 0 and both are locally constant.
                    let r = rotation(u.signum(), 0.0);
                    r * ddiss * r
                } else {
                    let (c, s) = (u / e, self.delta / e);
                    let e3 = e * e * e;
                    let dc = self.delta * self.delta / e3;
                    let ds = -u * self.delta / e3;
                    let r_plus = rotation(c, s);
                    let r_minus = rotation(c, -s);
                    let dr_plus = rotation_dc() * dc + rotation_ds() * ds;
                    let dr_minus = rotation_dc() * dc - rotation_ds() * ds;
                    dr_plus * diss * r_minus + r_plus * ddiss * r_minus + r_plus * diss * dr_minus
                }
            }
        };
        enforce_trace_rows(&mut d);
        commutator_du() + d
    }

    /// Vectorized Gibbs state of `H(u)` at inverse temperature β.
    pub fn gibbs_vector(&self, u: f64) -> Result<StateVector> {
        self.check(u)?;
        Ok(self.gibbs_unchecked(u))
    }

    pub(crate) fn gibbs_unchecked(&self, u: f64) -> StateVector {
        let e = self.gap(u);
        if e == 0.0 {
            return StateVector::new(0.5, 0.5, 0.0, 0.0);
        }
        let b = self.beta;
        let ground = 1.0 / (1.0 + (-2.0 * b * e).exp());
        let excited = 1.0 / (1.0 + (2.0 * b * e).exp());
        rotation(u / e, self.delta / e) * StateVector::new(ground, excited, 0.0, 0.0)
    }

    /// Equilibrium free energy `F = -β⁻¹ ln(2 cosh βE)`.
    pub fn free_energy(&self, u: f64) -> Result<f64> {
        self.check(u)?;
        Ok(self.free_energy_unchecked(u))
    }

    pub(crate) fn free_energy_unchecked(&self, u: f64) -> f64 {
        let e = self.gap(u);
        -e - (-2.0 * self.beta * e).exp().ln_1p() / self.beta
    }

    /// `∂F/∂u = -tanh(βE) u / E`.
    pub fn free_energy_slope(&self, u: f64) -> f64 {
        let e = self.gap(u);
        if e == 0.0 {
            0.0
        } else {
            -(self.beta * e).tanh() * u / e
        }
    }

    /// Terminal value of the control costate,
    /// `p(T) = (1-α) tanh(βE_T) u_T / E_T + κ (u(T) - u_target)`.
    pub fn terminal_adjoint(&self, u_final: f64, u_target: f64, alpha: f64, kappa: f64) -> Result<f64> {
        self.check(u_final)?;
        ensure_finite("u_target", u_target)?;
        check_weights(alpha, kappa)?;
        Ok(self.terminal_adjoint_unchecked(u_final, u_target, alpha, kappa))
    }

    pub(crate) fn terminal_adjoint_unchecked(&self, u_final: f64, u_target: f64, alpha: f64, kappa: f64) -> f64 {
        -(1.0 - alpha) * self.free_energy_slope(u_final) + kappa * (u_final - u_target)
    }
}

pub(crate) fn check_weights(alpha: f64, kappa: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidInput(format!("kappa must be finite and >= 0, got {kappa}")));
    }
    Ok(())
}
