use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use bismut_mc::estimators::{
    estimate_gradient, estimate_semigroup, martingale_drift, merge_chunks, path_functionals, run_batch, ChunkResult,
};
use bismut_mc::oracles::{oracle_for, reference};
use bismut_mc::paths::{simulate, EstimatorSet, ScheduleSet, SimConfig};
use bismut_mc::stats::Welford;
use bismut_mc::{Drift, EstimatorKind, FieldSpec, ManifoldModel, Payoff, Potential, Schedule, ScheduleRole};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ALL: [EstimatorKind; 4] =
    [EstimatorKind::Semigroup, EstimatorKind::Gradient, EstimatorKind::Generator, EstimatorKind::Hessian];

fn flat(n: usize, potential: Potential, drift: Drift, payoff: Payoff, x0: &[f64], dt: f64) -> SimConfig {
    SimConfig::new(
        ManifoldModel::euclidean(n).unwrap(),
        FieldSpec::new(potential, drift, payoff),
        DVector::from_column_slice(x0),
        1.0,
        dt,
    )
    .with_seed(99)
}

fn check_against_oracle(cfg: &SimConfig, kind: EstimatorKind, k: f64) {
    let r = run_batch(cfg, &[kind], 1, 0.0).unwrap().remove(0);
    let o = oracle_for(&cfg.model, &cfg.fields).unwrap();
    let truth = reference(cfg, kind, o.as_ref()).unwrap();
    assert!(r.within(truth, k), "{kind}: {} ± {} vs {truth}", r.estimate, r.std_error);
}

#[test]
fn trivial_payoff_gives_exact_semigroup_and_null_derivatives() {
    let cfg = flat(2, Potential::Zero, Drift::Zero, Payoff::Constant(1.0), &[0.1, 0.2], 1e-2).with_paths(4000);
    let r = estimate_semigroup(&cfg, 1).unwrap();
    assert_eq!((r.estimate, r.std_error), (1.0, 0.0));
    for kind in [EstimatorKind::Gradient, EstimatorKind::Generator, EstimatorKind::Hessian] {
        let r = run_batch(&cfg, &[kind], 1, 0.0).unwrap().remove(0);
        assert!(r.within(0.0, 3.0), "{kind}: {} ± {}", r.estimate, r.std_error);
    }
}

#[test]
fn linear_payoff_has_null_hessian() {
    let cfg = flat(1, Potential::Zero, Drift::Zero, Payoff::Coordinate(0), &[0.4], 1e-2).with_paths(20_000);
    let r = run_batch(&cfg, &[EstimatorKind::Hessian], 1, 0.0).unwrap().remove(0);
    assert!(r.within(0.0, 3.0), "{} ± {}", r.estimate, r.std_error);
}

#[test]
fn flat_sine_hessian_at_crest() {
    let cfg = flat(1, Potential::Zero, Drift::Zero, Payoff::Sin(0), &[FRAC_PI_2], 5e-3).with_paths(40_000);
    check_against_oracle(&cfg, EstimatorKind::Hessian, 3.0);
}

#[test]
fn ou_generator_with_nonzero_drift_term() {
    // L P f involves ∫ k̇ ⟨Z, //dB⟩ here; the Mehler value is 0.1110
    let cfg = flat(1, Potential::Zero, Drift::OrnsteinUhlenbeck(1.0), Payoff::Quadratic, &[0.3], 5e-3).with_paths(40_000);
    check_against_oracle(&cfg, EstimatorKind::Generator, 3.0);
    let r = run_batch(&cfg, &[EstimatorKind::Generator], 1, 0.0).unwrap().remove(0);
    assert!(r.terms.iter().any(|t| t.name == "drift" && t.estimate.abs() > 5.0 * t.std_error));
}

#[test]
fn harmonic_potential_all_estimators() {
    let cfg = flat(1, Potential::Quadratic(0.5), Drift::Zero, Payoff::Constant(1.0), &[1.0], 5e-3).with_paths(40_000);
    for kind in ALL {
        check_against_oracle(&cfg, kind, 3.0);
    }
}

#[test]
fn constant_potential_scales_every_functional_pathwise() {
    let c = 0.45;
    let base = flat(2, Potential::Zero, Drift::OrnsteinUhlenbeck(0.6), Payoff::GaussianBump, &[0.3, -0.4], 2e-2)
        .with_directions(&[0.6, 0.8], &[0.0, 1.0]);
    let mut shifted = base.clone();
    shifted.fields = FieldSpec::new(Potential::Constant(c), Drift::OrnsteinUhlenbeck(0.6), Payoff::GaussianBump);
    let scale = (-c * base.horizon).exp();
    for p in 0..100 {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        path_functionals(&ALL, &base, &simulate(&base, p).unwrap(), &mut a);
        path_functionals(&ALL, &shifted, &simulate(&shifted, p).unwrap(), &mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((scale * x - y).abs() <= 1e-12 * (scale * x).abs().max(1e-300), "{x} {y}");
        }
    }
}

#[test]
fn hessian_is_symmetric_with_a_potential() {
    let cfg = flat(2, Potential::Quadratic(0.3), Drift::Zero, Payoff::GaussianBump, &[0.5, -0.4], 1e-2).with_paths(20_000);
    let a = run_batch(&cfg.clone().with_directions(&[1.0, 0.0], &[0.0, 1.0]), &[EstimatorKind::Hessian], 1, 0.0)
        .unwrap()
        .remove(0);
    let b = run_batch(&cfg.with_directions(&[0.0, 1.0], &[1.0, 0.0]), &[EstimatorKind::Hessian], 1, 0.0).unwrap().remove(0);
    let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
    assert!((a.estimate - b.estimate).abs() <= 3.0 * se, "{} vs {}", a.estimate, b.estimate);
}

#[test]
fn gradient_schedules_agree() {
    let cfg = flat(1, Potential::Zero, Drift::OrnsteinUhlenbeck(1.0), Payoff::Sin(0), &[0.2], 1e-2).with_paths(20_000);
    let knee = Schedule::new(vec![0.0, 0.3, 1.0], vec![1.0, 0.2, 0.0], ScheduleRole::GradientK, 1.0).unwrap();
    let mut s = ScheduleSet::defaults(1.0);
    s.gradient_k = knee;
    let a = estimate_gradient(&cfg, 1).unwrap();
    let b = estimate_gradient(&cfg.clone().with_schedules(s), 1).unwrap();
    let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
    assert!((a.estimate - b.estimate).abs() <= 3.0 * se);
}

#[test]
fn martingale_trivial_cases() {
    let cfg = flat(1, Potential::Zero, Drift::Zero, Payoff::Sin(0), &[0.3], 1e-2).with_paths(2000);
    let o = oracle_for(&cfg.model, &cfg.fields).unwrap();
    let mut zero = ScheduleSet::defaults(1.0);
    zero.gradient_k = Schedule::zero(1.0);
    let reps = martingale_drift(&cfg.clone().with_schedules(zero), o.as_ref(), &[0.25, 0.5, 0.75], 1, 0.0).unwrap();
    for r in reps {
        assert_eq!((r.estimate, r.std_error), (0.0, 0.0));
    }

    let c = flat(1, Potential::Constant(0.4), Drift::Zero, Payoff::Constant(1.0), &[0.3], 1e-2).with_paths(4000);
    let o = oracle_for(&c.model, &c.fields).unwrap();
    for r in martingale_drift(&c, o.as_ref(), &[0.25, 0.5, 0.75], 1, 0.0).unwrap() {
        assert!(r.within(0.0, 3.0), "t={}: {} ± {}", r.t, r.estimate, r.std_error);
    }
}

#[test]
fn martingale_with_potential_is_constant_in_time() {
    let cfg = flat(1, Potential::Quadratic(0.5), Drift::Zero, Payoff::Constant(1.0), &[1.0], 1e-2).with_paths(20_000);
    let o = oracle_for(&cfg.model, &cfg.fields).unwrap();
    let truth = reference(&cfg, EstimatorKind::Gradient, o.as_ref()).unwrap();
    for r in martingale_drift(&cfg, o.as_ref(), &[0.0, 0.5, 1.0], 1, 0.0).unwrap() {
        assert!(r.within(truth, 3.0), "t={}: {} ± {} vs {truth}", r.t, r.estimate, r.std_error);
    }
}

#[test]
fn martingale_without_oracle_is_reported() {
    let h = SimConfig::new(
        ManifoldModel::hyperbolic(2, -1.0).unwrap(),
        FieldSpec::new(Potential::Zero, Drift::Zero, Payoff::Coordinate(1)),
        DVector::from_vec(vec![1.0, 0.0, 0.0]),
        1.0,
        0.1,
    );
    assert!(matches!(oracle_for(&h.model, &h.fields), Err(bismut_mc::Error::OracleMissing(_))));
}

#[test]
fn worker_count_does_not_change_results() {
    let cfg = SimConfig::new(
        ManifoldModel::sphere(2, 1.0).unwrap(),
        FieldSpec::new(Potential::Constant(0.1), Drift::Zero, Payoff::Coordinate(0)),
        DVector::from_vec(vec![0.6, 0.0, 0.8]),
        0.5,
        2e-2,
    )
    .with_paths(3000)
    .with_estimators(EstimatorSet::all());
    let one = run_batch(&cfg, &ALL, 1, 0.0).unwrap();
    let three = run_batch(&cfg, &ALL, 3, 0.0).unwrap();
    assert_eq!(one, three);
}

fn chunk(values: &[f64]) -> ChunkResult {
    let mut w = Welford::new();
    for v in values {
        w.push(*v);
    }
    ChunkResult { channels: vec![w], failures: BTreeMap::new(), first_failure: None }
}

#[test]
fn merge_is_independent_of_arrival_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let parts: Vec<(u64, ChunkResult)> = (0..40)
        .map(|i| {
            let len = rng.random_range(1..200);
            let vals: Vec<f64> = (0..len).map(|_| rng.random::<f64>() * 1e3 - 5e2).collect();
            (i, chunk(&vals))
        })
        .collect();
    let reference = merge_chunks(parts.clone());
    for _ in 0..10 {
        let mut shuffled = parts.clone();
        shuffled.shuffle(&mut rng);
        let m = merge_chunks(shuffled);
        assert_eq!(m.channels[0].mean().to_bits(), reference.channels[0].mean().to_bits());
        assert_eq!(m.channels[0].variance().to_bits(), reference.channels[0].variance().to_bits());
    }
}

proptest! {
    #[test]
    fn welford_merge_matches_a_single_pass(xs in prop::collection::vec(-1e3f64..1e3, 2..300), cut in 0usize..300) {
        let cut = cut.min(xs.len());
        let whole = chunk(&xs).channels[0];
        let mut left = chunk(&xs[..cut]).channels[0];
        left.merge(&chunk(&xs[cut..]).channels[0]);
        prop_assert_eq!(left.count(), whole.count());
        prop_assert!((left.mean() - whole.mean()).abs() <= 1e-9 * (1.0 + whole.mean().abs()));
        prop_assert!((left.variance() - whole.variance()).abs() <= 1e-8 * (1.0 + whole.variance()));
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        prop_assert!((whole.variance() - var).abs() <= 1e-8 * (1.0 + var));
        prop_assert!((whole.std_error() - (var / n).sqrt()).abs() <= 1e-8 * (1.0 + var));
    }

    #[test]
    fn path_accounting_adds_up(n_paths in 1usize..300, bound in 0.3f64..3.0) {
        let mut cfg = flat(1, Potential::Zero, Drift::Zero, Payoff::Sin(0), &[0.0], 0.1).with_paths(n_paths);
        cfg.limits.position_bound = bound;
        let r = run_batch(&cfg, &[EstimatorKind::Gradient], 1, 1.0).unwrap().remove(0);
        prop_assert_eq!(r.n_paths_used + r.n_paths_failed, n_paths as u64);
        prop_assert_eq!(r.failures.values().sum::<u64>(), r.n_paths_failed);
    }

    #[test]
    fn constant_potential_scales_semigroup_mean(c in 0.0f64..2.0, seed in 0u64..1000) {
        let base = flat(1, Potential::Zero, Drift::Zero, Payoff::Sin(0), &[0.5], 0.1).with_paths(64).with_seed(seed);
        let mut shifted = base.clone();
        shifted.fields = FieldSpec::new(Potential::Constant(c), Drift::Zero, Payoff::Sin(0));
        let a = estimate_semigroup(&base, 1).unwrap();
        let b = estimate_semigroup(&shifted, 1).unwrap();
        prop_assert!(((-c).exp() * a.estimate - b.estimate).abs() <= 1e-12);
    }
}
