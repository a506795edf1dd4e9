//! Adjoint gradient and single-sum variance against brute-force references.

use proptest::prelude::*;
use qdissip_core::oracle::{
    central_differences, finite_difference_gradient, variance_double_sum, variance_double_sum_with, PropagatorCache,
};
use qdissip_core::{
    backward_pass, control_gradient, control_vector, evaluate_cost, propagate, ControlProtocol, ModelSpec,
    OptimizerConfig, TimeGrid,
};

fn single_sum(p: &ControlProtocol, traj: &qdissip_core::Trajectory) -> f64 {
    let g = control_vector();
    let dt = p.grid.dt();
    2.0 * p.v.iter().zip(&traj.y).map(|(v, y)| dt * v * g.dot(y)).sum::<f64>()
}

fn wiggly(n: usize, u0: f64, u_target: f64, phase: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let s = k as f64 / n as f64;
            (u_target - u0) + 2.0 * (7.0 * s + phase).sin() - 1.1 * (17.0 * s).cos()
        })
        .collect()
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / (b.abs() + 1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn variance_single_equals_double(
        dot in any::<bool>(),
        delta in 0.0f64..1.5,
        u0 in -2.0f64..2.0,
        v in prop::collection::vec(-6.0f64..6.0, 200),
    ) {
        let model = if dot { ModelSpec::quantum_dot(1.0) } else { ModelSpec::spin_boson(delta, 1.0) };
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let p = ControlProtocol::new(grid, u0, v, 0.0).unwrap();
        let traj = propagate(&model, &p).unwrap();
        let single = single_sum(&p, &traj);
        let double = variance_double_sum(&model, &p, &traj).unwrap();
        prop_assert!(relative(single, double) < 1e-12, "{} vs {}", single, double);
    }
}

#[test]
fn frozen_generator_scaling() {
    // With A frozen and x fixed, doubling v quadruples the double sum.
    let model = ModelSpec::spin_boson(0.5, 1.0);
    let n = 80;
    let a = model.generator(0.7).unwrap();
    let cache = PropagatorCache::from_generators(0.01, vec![a; n]);
    let states = vec![model.gibbs_vector(0.2).unwrap(); n];
    let v: Vec<f64> = (0..n).map(|k| (k as f64 * 0.3).sin()).collect();
    let twice: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
    let base = variance_double_sum_with(&cache, &v, &states).unwrap();
    let scaled = variance_double_sum_with(&cache, &twice, &states).unwrap();
    assert!(base.abs() > 1e-6);
    assert!(relative(scaled, 4.0 * base) < 1e-13);
}

fn check_gradient(model: &ModelSpec, u0: f64, u_target: f64, alpha: f64, n: usize) -> f64 {
    let grid = TimeGrid::new(1.0, n).unwrap();
    let p = ControlProtocol::new(grid, u0, wiggly(n, u0, u_target, alpha), u_target).unwrap();
    let traj = propagate(model, &p).unwrap();
    let config = OptimizerConfig::default().with_alpha(alpha);
    let adj = backward_pass(model, &p, &traj, alpha, config.kappa).unwrap();
    let grad = control_gradient(model, &p, &traj, &adj, alpha).unwrap();
    let indices: Vec<usize> = (0..20).map(|i| i * (n - 1) / 19).collect();
    let fd = finite_difference_gradient(model, grid, u0, u_target, &config, &p, 1e-6, &indices).unwrap();
    indices.iter().zip(&fd).map(|(&k, &f)| relative(grad[k] * grid.dt(), f)).fold(0.0, f64::max)
}

#[test]
fn gradient_matches_finite_differences() {
    for alpha in [0.0, 0.5, 1.0] {
        let sb = check_gradient(&ModelSpec::spin_boson(1.0, 1.0), 0.0, 1.0, alpha, 100);
        let sb0 = check_gradient(&ModelSpec::spin_boson(0.0, 1.0), 0.0, 1.0, alpha, 100);
        let qd = check_gradient(&ModelSpec::quantum_dot(1.0), 2.0, -2.0, alpha, 100);
        assert!(sb < 1e-6 && sb0 < 1e-6 && qd < 1e-6, "alpha {alpha}: {sb:e} {sb0:e} {qd:e}");
    }
}

#[test]
fn penalty_gradient_alone() {
    // Undriven with u far from the target: only the penalty and the free
    // energy slope act, uniformly over k.
    let model = ModelSpec::spin_boson(0.0, 1.0);
    let grid = TimeGrid::new(1.0, 50).unwrap();
    let p = ControlProtocol::new(grid, 0.4, vec![0.0; 50], 1.0).unwrap();
    let traj = propagate(&model, &p).unwrap();
    let config = OptimizerConfig::default().with_alpha(1.0);
    let adj = backward_pass(&model, &p, &traj, 1.0, config.kappa).unwrap();
    let grad = control_gradient(&model, &p, &traj, &adj, 1.0).unwrap();
    for g in &grad {
        assert!((g - 10.0 * (0.4 - 1.0)).abs() < 1e-12);
    }
    let fd = finite_difference_gradient(&model, grid, 0.4, 1.0, &config, &p, 1e-6, &[0, 25, 49]).unwrap();
    for f in fd {
        assert!((f - grid.dt() * 10.0 * (0.4 - 1.0)).abs() < 1e-9);
    }
}

#[test]
fn quantum_dot_mirror_symmetry() {
    // u -> -u swaps the levels; J is invariant, so the gradient flips sign.
    let model = ModelSpec::quantum_dot(1.3);
    let grid = TimeGrid::new(1.0, 60).unwrap();
    let v = wiggly(60, 1.0, -1.5, 0.2);
    let mirrored: Vec<f64> = v.iter().map(|x| -x).collect();
    let p = ControlProtocol::new(grid, 1.0, v, -1.5).unwrap();
    let q = ControlProtocol::new(grid, -1.0, mirrored, 1.5).unwrap();
    let grads: Vec<Vec<f64>> = [&p, &q]
        .iter()
        .map(|pr| {
            let traj = propagate(&model, pr).unwrap();
            let adj = backward_pass(&model, pr, &traj, 0.5, 10.0).unwrap();
            let cost = evaluate_cost(&model, pr, &traj, 0.5, 10.0).unwrap();
            assert!(cost.total_j.is_finite());
            control_gradient(&model, pr, &traj, &adj, 0.5).unwrap()
        })
        .collect();
    let jp = {
        let t = propagate(&model, &p).unwrap();
        evaluate_cost(&model, &p, &t, 0.5, 10.0).unwrap().total_j
    };
    let jq = {
        let t = propagate(&model, &q).unwrap();
        evaluate_cost(&model, &q, &t, 0.5, 10.0).unwrap().total_j
    };
    assert!(relative(jq, jp) < 1e-13);
    for (a, b) in grads[0].iter().zip(&grads[1]) {
        assert!((a + b).abs() < 1e-12 * (1.0 + a.abs()));
    }
}

#[test]
fn central_differences_of_quadratic() {
    let f = |v: &[f64]| Ok(v.iter().enumerate().map(|(i, x)| (i as f64 + 1.0) * x * x).sum::<f64>());
    let d = central_differences(f, &[1.0, -2.0, 0.5], 1e-4, &[0, 1, 2]).unwrap();
    let want = [2.0, -8.0, 3.0];
    for (a, b) in d.iter().zip(want) {
        assert!((a - b).abs() < 1e-9);
    }
}
