//! Optimal control of driven two-level open quantum systems: minimal
//! dissipation and minimal work fluctuations under slow or fast driving.
//!
//! The state is a vectorized density matrix `[ρ_gg, ρ_ee, Re ρ_eg, Im ρ_eg]`
//! evolving under a Markovian generator `A(u)` for a control field `u(t)`.

pub mod error;
pub mod grape;
pub mod model;
pub mod oracle;
pub mod propagation;
pub mod rapid;

pub use error::{Error, Result};
pub use grape::{
    alpha_grid, backward_pass, control_gradient, default_learning_rate, non_dominated, optimize, optimize_from,
    sweep_alpha, sweep_alpha_detailed, sweep_alpha_warm, AdjointTrajectory, BoundActivity, CostRecord,
    OptimizeResult, OptimizerConfig, ParetoPoint,
};
pub use model::{Generator, ModelKind, ModelSpec, RatePair, StateVector};
pub use propagation::{
    control_vector, evaluate_cost, propagate, s_jacobian, s_vector, ControlProtocol, CostBreakdown, TimeGrid,
    Trajectory, DEFAULT_STEPS_PER_UNIT_TIME, POSITIVITY_TOLERANCE,
};
pub use rapid::{optimal_jumps, rapid_cost, rgb_coefficients, RapidCost, RapidDriveSolution, Rgb};
