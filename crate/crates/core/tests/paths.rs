use approx::assert_abs_diff_eq;
use bismut_mc::estimators::run_batch;
use bismut_mc::paths::{simulate, simulate_in, step, EstimatorSet, Limits, SimConfig, StepContext, Trajectory};
use bismut_mc::stats::Welford;
use bismut_mc::{Drift, Error, EstimatorKind, FieldSpec, ManifoldModel, Payoff, Potential};
use nalgebra::{DMatrix, DVector};

fn flat(n: usize, drift: Drift, potential: Potential, horizon: f64, dt: f64) -> SimConfig {
    SimConfig::new(
        ManifoldModel::euclidean(n).unwrap(),
        FieldSpec::new(potential, drift, Payoff::Constant(1.0)),
        DVector::zeros(n),
        horizon,
        dt,
    )
}

#[test]
fn brownian_scaling_of_the_terminal_point() {
    let horizon = 0.7;
    let mut cfg = flat(2, Drift::Zero, Potential::Zero, horizon, 0.05).with_estimators(EstimatorSet::default());
    cfg.x0 = DVector::from_vec(vec![0.4, -1.0]);
    let n_paths = 100_000;
    let mut ctx = StepContext::new(&cfg).unwrap();
    let mut mean = [Welford::new(), Welford::new()];
    let mut cov = [Welford::new(), Welford::new(), Welford::new()];
    for p in 0..n_paths {
        let t = simulate_in(&mut ctx, p, |_, _, _| {}).unwrap();
        let d = [t.x[0] - 0.4, t.x[1] + 1.0];
        mean[0].push(d[0]);
        mean[1].push(d[1]);
        cov[0].push(d[0] * d[0]);
        cov[1].push(d[1] * d[1]);
        cov[2].push(d[0] * d[1]);
    }
    for m in &mean {
        assert!(m.mean().abs() <= 4.0 * m.std_error(), "mean {} ± {}", m.mean(), m.std_error());
    }
    for (w, target) in cov.iter().zip([horizon, horizon, 0.0]) {
        assert!((w.mean() - target).abs() <= 4.0 * w.std_error(), "{} vs {target}", w.mean());
    }
}

#[test]
fn ito_isometry_for_the_gradient_integral() {
    let horizon = 2.0;
    let cfg = flat(1, Drift::Zero, Potential::Zero, horizon, 0.02).with_estimators(EstimatorSet::only(EstimatorKind::Gradient));
    let mut ctx = StepContext::new(&cfg).unwrap();
    let mut sq = Welford::new();
    for p in 0..100_000 {
        let t = simulate_in(&mut ctx, p, |_, _, _| {}).unwrap();
        sq.push(t.acc_grad * t.acc_grad);
    }
    // k = (T - s)/T, so ∫ k̇² ds = 1/T
    let target = 1.0 / horizon;
    assert!((sq.mean() - target).abs() <= 4.0 * sq.std_error(), "{} ± {}", sq.mean(), sq.std_error());
}

#[test]
fn sphere_walk_reproduces_first_eigenfunction_decay() {
    let cfg = SimConfig::new(
        ManifoldModel::sphere(2, 1.0).unwrap(),
        FieldSpec::new(Potential::Zero, Drift::Zero, Payoff::Coordinate(2)),
        DVector::from_vec(vec![0.6, 0.0, 0.8]),
        0.5,
        1e-2,
    )
    .with_paths(40_000)
    .with_estimators(EstimatorSet::only(EstimatorKind::Semigroup));
    let r = run_batch(&cfg, &[EstimatorKind::Semigroup], 1, 0.0).unwrap().remove(0);
    let target = 0.8 * (-0.5f64).exp();
    assert!(r.within(target, 4.0), "{} ± {} vs {target}", r.estimate, r.std_error);
}

#[test]
fn damped_transport_closed_forms() {
    let cfg = flat(1, Drift::OrnsteinUhlenbeck(1.0), Potential::Zero, 1.5, 1e-2);
    let t = simulate(&cfg, 3).unwrap();
    assert!((t.w_hat[(0, 0)] - (-1.5f64).exp()).abs() <= 10.0 * cfg.dt);
    assert_eq!(t.w_hat_prime, DMatrix::zeros(1, 1));

    let cfg = flat(3, Drift::Zero, Potential::Zero, 1.0, 1e-2);
    let t = simulate(&cfg, 0).unwrap();
    assert_eq!(t.w_hat, DMatrix::identity(3, 3));
    assert_eq!(t.w_hat_prime, DMatrix::zeros(3, 3));

    let h = SimConfig::new(
        ManifoldModel::hyperbolic(2, -1.0).unwrap(),
        FieldSpec::new(Potential::Zero, Drift::Zero, Payoff::Constant(1.0)),
        DVector::from_vec(vec![1.0, 0.0, 0.0]),
        1.0,
        1e-2,
    );
    // Ric^♯ = -I on the hyperbolic plane, so Ŵ_t = e^{t/2} I
    let t = simulate(&h, 0).unwrap();
    assert_abs_diff_eq!(t.w_hat, DMatrix::identity(2, 2) * 0.5f64.exp(), epsilon = 10.0 * h.dt * h.dt);
    assert!(h.model.frame_defect(&t.x, &t.frame) < 1e-8);
}

#[test]
fn weights_are_exact_for_trivial_potentials() {
    let cfg = flat(1, Drift::Zero, Potential::Zero, 1.0, 1e-2);
    assert_eq!(simulate(&cfg, 0).unwrap().fk_weight(), 1.0);
    let c = 0.8;
    let cfg = flat(1, Drift::Zero, Potential::Constant(c), 1.0, 1e-2);
    let w = simulate(&cfg, 0).unwrap().fk_weight();
    assert_abs_diff_eq!(w, (-c).exp(), epsilon = 1e-14);
}

#[test]
fn weight_bound_holds_along_paths() {
    let mut cfg = flat(1, Drift::Zero, Potential::Quadratic(0.5), 1.0, 1e-2);
    cfg.limits.v_min = Some(0.0);
    let mut ctx = StepContext::new(&cfg).unwrap();
    for p in 0..50 {
        simulate_in(&mut ctx, p, |t, _, _| {
            let w = t.fk_weight();
            assert!(w > 0.0 && w <= 1.0);
        })
        .unwrap();
    }
}

#[test]
fn declared_lower_bound_is_enforced() {
    let mut cfg = flat(1, Drift::Zero, Potential::Constant(-0.5), 1.0, 1e-2);
    cfg.limits.v_min = Some(0.0);
    assert!(matches!(simulate(&cfg, 0), Err(Error::PotentialBelowBound { .. })));
}

#[test]
fn explosion_guard_is_reported_and_counted() {
    let mut cfg = flat(1, Drift::Zero, Potential::Zero, 1.0, 1e-2).with_paths(500);
    cfg.limits = Limits { position_bound: 0.5, ..Limits::default() };
    match run_batch(&cfg, &[EstimatorKind::Semigroup], 1, 0.01) {
        Err(Error::PathFailures { failed, total, .. }) => {
            assert_eq!(total, 500);
            assert!(failed > 5);
        }
        other => panic!("expected path failures, got {other:?}"),
    }
    let r = run_batch(&cfg, &[EstimatorKind::Semigroup], 1, 1.0).unwrap().remove(0);
    assert_eq!(r.n_paths_used + r.n_paths_failed, 500);
    assert_eq!(r.failures.get("explosion"), Some(&r.n_paths_failed));
}

#[test]
fn simulate_is_a_function_of_seed_and_index() {
    let cfg = SimConfig::new(
        ManifoldModel::sphere(2, 1.0).unwrap(),
        FieldSpec::new(Potential::Zero, Drift::Zero, Payoff::Coordinate(2)),
        DVector::from_vec(vec![0.0, 0.6, 0.8]),
        0.5,
        1e-2,
    )
    .with_seed(42);
    let a = simulate(&cfg, 7).unwrap();
    let b = simulate(&cfg, 7).unwrap();
    assert_eq!(a, b);
    let c = simulate(&cfg, 8).unwrap();
    assert_ne!(a.x, c.x);
    let d = simulate(&cfg.clone().with_seed(43), 7).unwrap();
    assert_ne!(a.x, d.x);
}

#[test]
fn single_step_matches_driver() {
    let cfg = flat(2, Drift::OrnsteinUhlenbeck(0.5), Potential::Quadratic(0.3), 0.1, 0.1);
    let mut seen = Vec::new();
    let last = {
        let mut ctx = StepContext::new(&cfg).unwrap();
        simulate_in(&mut ctx, 11, |t, db, _| seen.push((t.clone(), db.to_vec()))).unwrap()
    };
    let (start, db): &(Trajectory, Vec<f64>) = &seen[0];
    let next = step(start, db, &cfg).unwrap();
    assert_abs_diff_eq!(next.x, last.x, epsilon = 1e-15);
    assert_abs_diff_eq!(next.acc_grad, last.acc_grad, epsilon = 1e-15);
    assert_abs_diff_eq!(next.log_weight, last.log_weight, epsilon = 1e-15);
}
