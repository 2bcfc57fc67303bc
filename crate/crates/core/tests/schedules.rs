use bismut_mc::{Schedule, ScheduleRole};
use proptest::prelude::*;

#[test]
fn default_schedules_at_reference_points() {
    assert_eq!(Schedule::default_gradient_k(1.0).eval(0.0).unwrap(), (1.0, -1.0));
    assert_eq!(Schedule::default_second_order_k(1.0).eval(0.75).unwrap(), (0.0, 0.0));
    assert_eq!(Schedule::default_second_order_l(1.0).eval(0.25).unwrap(), (1.0, 0.0));
    let (v, d) = Schedule::default_second_order_l(2.0).eval(1.5).unwrap();
    assert!((v - 0.5).abs() < 1e-15 && (d + 1.0).abs() < 1e-15);
}

#[test]
fn right_derivative_at_breakpoints() {
    let k = Schedule::default_second_order_k(1.0);
    assert_eq!(k.eval(0.5).unwrap(), (0.0, 0.0));
    let l = Schedule::default_second_order_l(1.0);
    assert_eq!(l.eval(0.5).unwrap(), (1.0, -2.0));
}

#[test]
fn out_of_range_times_are_rejected() {
    let k = Schedule::default_gradient_k(1.0);
    assert!(k.eval(-1e-9).is_err());
    assert!(k.eval(1.0 + 1e-6).is_err());
}

#[test]
fn roles_enforce_boundary_values() {
    let t = 1.0;
    assert!(Schedule::new(vec![0.0, 1.0], vec![1.0, 0.0], ScheduleRole::GradientK, t).is_ok());
    assert!(Schedule::new(vec![0.0, 1.0], vec![0.9, 0.0], ScheduleRole::GradientK, t).is_err());
    assert!(Schedule::new(vec![0.0, 1.0], vec![1.0, 0.1], ScheduleRole::GradientK, t).is_err());
    // second-order k must vanish from T/2 on
    assert!(Schedule::new(vec![0.0, 1.0], vec![1.0, 0.0], ScheduleRole::SecondOrderK, t).is_err());
    assert!(Schedule::new(vec![0.0, 0.3, 1.0], vec![1.0, 0.0, 0.0], ScheduleRole::SecondOrderK, t).is_ok());
    // l must stay at 1 up to T/2 and end at 0
    assert!(Schedule::new(vec![0.0, 0.4, 1.0], vec![1.0, 1.0, 0.0], ScheduleRole::SecondOrderL, t).is_err());
    assert!(Schedule::new(vec![0.0, 0.7, 1.0], vec![1.0, 1.0, 0.0], ScheduleRole::SecondOrderL, t).is_ok());
    // breakpoints must be ordered and cover [0, T]
    assert!(Schedule::new(vec![0.0, 0.6, 0.5, 1.0], vec![1.0, 0.5, 0.4, 0.0], ScheduleRole::GradientK, t).is_err());
    assert!(Schedule::new(vec![0.0, 0.9], vec![1.0, 0.0], ScheduleRole::GradientK, t).is_err());
}

proptest! {
    #[test]
    fn derivative_integrates_to_value(knee in 0.05f64..0.95, level in -2.0f64..2.0, horizon in 0.1f64..5.0) {
        let s = Schedule::new(vec![0.0, knee * horizon, horizon], vec![1.0, level, 0.0], ScheduleRole::GradientK, horizon).unwrap();
        let knots = [0.0, knee * horizon, horizon];
        let mut acc = 1.0;
        for w in knots.windows(2) {
            acc += s.eval(0.5 * (w[0] + w[1])).unwrap().1 * (w[1] - w[0]);
        }
        prop_assert!(acc.abs() < 1e-9);
        prop_assert!((s.eval(0.5 * knee * horizon).unwrap().0 - 0.5 * (1.0 + level)).abs() < 1e-12);
        let expected = (level - 1.0).powi(2) / (knee * horizon) + level * level / ((1.0 - knee) * horizon);
        prop_assert!((s.energy() - expected).abs() < 1e-9 * expected.max(1.0));
    }
}
