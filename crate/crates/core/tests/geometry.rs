use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use approx::assert_abs_diff_eq;
use bismut_mc::geometry::{curvature_pack, ConformalConstantCurvature, FnMetric};
use bismut_mc::{Drift, ManifoldModel};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn north() -> DVector<f64> {
    dv(&[0.0, 0.0, 1.0])
}

fn pole_frame() -> DMatrix<f64> {
    DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
}

#[test]
fn euclidean_exp_is_translation() {
    let m = ManifoldModel::euclidean(2).unwrap();
    let y = m.exp_map(&dv(&[0.0, 0.0]), &dv(&[1.0, 2.0])).unwrap();
    assert_eq!(y.as_slice(), &[1.0, 2.0]);
    let f = DMatrix::identity(2, 2);
    let (_, g) = m.parallel_transport_step(&dv(&[0.3, 0.1]), &dv(&[1.0, -2.0]), &f).unwrap();
    assert_eq!(f, g);
}

#[test]
fn sphere_exp_reaches_antipode_and_equator() {
    let m = ManifoldModel::sphere(2, 1.0).unwrap();
    let s = m.exp_map(&north(), &dv(&[PI, 0.0, 0.0])).unwrap();
    assert_abs_diff_eq!(s, dv(&[0.0, 0.0, -1.0]), epsilon = 1e-12);
    let dir = dv(&[0.6, 0.8, 0.0]);
    let e = m.exp_map(&north(), &(&dir * FRAC_PI_2)).unwrap();
    assert_abs_diff_eq!(e, dir, epsilon = 1e-12);
}

/// RK4 on `x'' = -|x'|^2 x` for the unit sphere.
fn geodesic_ode(x0: &DVector<f64>, v0: &DVector<f64>, steps: usize) -> DVector<f64> {
    let rhs = |x: &DVector<f64>, v: &DVector<f64>| (v.clone(), -x * v.norm_squared());
    let h = 1.0 / steps as f64;
    let (mut x, mut v) = (x0.clone(), v0.clone());
    for _ in 0..steps {
        let (k1x, k1v) = rhs(&x, &v);
        let (k2x, k2v) = rhs(&(&x + &k1x * (h / 2.0)), &(&v + &k1v * (h / 2.0)));
        let (k3x, k3v) = rhs(&(&x + &k2x * (h / 2.0)), &(&v + &k2v * (h / 2.0)));
        let (k4x, k4v) = rhs(&(&x + &k3x * h), &(&v + &k3v * h));
        x += (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
        v += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
    }
    x
}

#[test]
fn sphere_exp_matches_geodesic_ode() {
    let m = ManifoldModel::sphere(2, 1.0).unwrap();
    let x0 = dv(&[0.6, 0.0, 0.8]);
    for v in [dv(&[-0.8, 0.0, 0.6]) * 1.3, dv(&[0.0, 1.1, 0.0]), dv(&[-0.4, 0.5, 0.3])] {
        let exact = m.exp_map(&x0, &v).unwrap();
        assert_abs_diff_eq!(exact, geodesic_ode(&x0, &v, 4000), epsilon = 1e-10);
    }
}

#[test]
fn great_circle_holonomy_is_trivial() {
    let m = ManifoldModel::sphere(2, 1.0).unwrap();
    let (mut x, mut f) = (north(), pole_frame());
    let step = dv(&[2.0 * PI / 100.0, 0.0, 0.0]);
    for _ in 0..100 {
        // tangent direction along the circle through the pole in the x-z plane
        let t = dv(&[x[2], 0.0, -x[0]]) * step[0];
        m.advance(&mut x, &mut f, &t).unwrap();
    }
    assert_abs_diff_eq!(x, north(), epsilon = 1e-10);
    assert_abs_diff_eq!(f, pole_frame(), epsilon = 1e-10);
}

#[test]
fn right_angled_triangle_rotates_frame_by_its_area() {
    let m = ManifoldModel::sphere(2, 1.0).unwrap();
    for pieces in [1usize, 50] {
        let (mut x, mut f) = (north(), pole_frame());
        let corners = [dv(&[1.0, 0.0, 0.0]), dv(&[0.0, 1.0, 0.0]), north()];
        for target in &corners {
            // unit tangent at x towards the next corner, a quarter great circle away
            let start = x.clone();
            let dir = (target - &start * start.dot(target)).normalize();
            let h = FRAC_PI_2 / pieces as f64;
            for k in 0..pieces {
                let s = k as f64 * h;
                let tangent = &dir * s.cos() - &start * s.sin();
                m.advance(&mut x, &mut f, &(tangent * h)).unwrap();
            }
            assert_abs_diff_eq!(x, target.clone(), epsilon = 1e-10);
        }
        let e1 = f.column(0);
        let angle = e1.dot(&pole_frame().column(1)).atan2(e1.dot(&pole_frame().column(0)));
        assert_abs_diff_eq!(angle.abs(), FRAC_PI_2, epsilon = 1e-10);
    }
}

#[test]
fn curvature_pack_examples() {
    let e = ManifoldModel::euclidean(3).unwrap();
    let x = dv(&[0.3, -0.2, 0.5]);
    let id = DMatrix::identity(3, 3);
    let flat = curvature_pack(&e, &Drift::Zero, true).unwrap();
    assert_eq!(flat.ricci_z(&x, &id).unwrap(), DMatrix::zeros(3, 3));
    assert_eq!(flat.riemann(&x, &id, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(), DVector::zeros(3));
    let ou = curvature_pack(&e, &Drift::OrnsteinUhlenbeck(1.0), true).unwrap();
    assert_abs_diff_eq!(ou.ricci_z(&x, &id).unwrap(), id.clone() * 2.0, epsilon = 1e-14);

    let s = ManifoldModel::sphere(2, 1.0).unwrap();
    let x = dv(&[0.6, 0.0, 0.8]);
    let f = s.initial_frame(&x).unwrap();
    let pack = curvature_pack(&s, &Drift::Zero, true).unwrap();
    assert_abs_diff_eq!(pack.ricci_z(&x, &f).unwrap(), DMatrix::identity(2, 2), epsilon = 1e-14);
}

fn constant_curvature_riemann(c: f64, u: &[f64], v: &[f64], w: &[f64]) -> DVector<f64> {
    let (u, v, w) = (dv(u), dv(v), dv(w));
    (&u * v.dot(&w) - &v * u.dot(&w)) * c
}

#[test]
fn chart_curvature_matches_constant_curvature_closed_form() {
    for c in [1.0, -1.0, 0.5] {
        let n = 3;
        let model = ManifoldModel::chart(Arc::new(ConformalConstantCurvature { dim: n, curvature: c })).unwrap();
        let pack = curvature_pack(&model, &Drift::Zero, true).unwrap();
        for x in [dv(&[0.1, -0.2, 0.15]), dv(&[0.3, 0.1, -0.25])] {
            let f = model.initial_frame(&x).unwrap();
            let ric = pack.ricci_z(&x, &f).unwrap();
            assert_abs_diff_eq!(ric, DMatrix::identity(n, n) * (c * (n as f64 - 1.0)), epsilon = 1e-4);
            let basis: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
            for a in &basis {
                for b in &basis {
                    let d = pack.dstar_r(&x, &f, a, b).unwrap();
                    assert!(d.amax() < 1e-4, "d*R = {d}");
                    let nr = pack.nabla_ricci_z(&x, &f, a, b).unwrap();
                    assert!(nr.amax() < 1e-4, "∇Ric = {nr}");
                    for w in &basis {
                        let r = pack.riemann(&x, &f, a, b, w).unwrap();
                        assert_abs_diff_eq!(r, constant_curvature_riemann(c, a, b, w), epsilon = 1e-4);
                    }
                }
            }
        }
    }
}

fn warped() -> ManifoldModel {
    let metric = FnMetric::new(3, 1.0, |x: &[f64]| {
        DMatrix::from_diagonal(&dv(&[
            1.0 + 0.3 * x[1] * x[1],
            1.0 + 0.2 * x[0] * x[0] + 0.1 * x[2],
            (0.4 * x[0] - 0.2 * x[1] * x[2]).exp(),
        ]))
    });
    ManifoldModel::chart(Arc::new(metric)).unwrap()
}

#[test]
fn dstar_r_identity_on_a_curved_chart() {
    let model = warped();
    let pack = curvature_pack(&model, &Drift::Zero, true).unwrap();
    let x = dv(&[0.2, -0.1, 0.3]);
    let f = model.initial_frame(&x).unwrap();
    let e = |i: usize| -> Vec<f64> { (0..3).map(|j| f64::from(u8::from(i == j))).collect() };
    let mut scale: f64 = 0.0;
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let d = pack.dstar_r(&x, &f, &e(i), &e(j)).unwrap();
            for k in 0..3 {
                let lhs = d[k];
                let rhs = pack.nabla_ricci_z(&x, &f, &e(k), &e(i)).unwrap()[j]
                    - pack.nabla_ricci_z(&x, &f, &e(j), &e(k)).unwrap()[i];
                scale = scale.max(lhs.abs());
                worst = worst.max((lhs - rhs).abs());
            }
        }
    }
    assert!(scale > 1e-2, "identity is vacuous here");
    assert!(worst < 1e-4 * scale.max(1.0), "worst {worst}, scale {scale}");
}

#[test]
fn riemann_is_antisymmetric_on_a_curved_chart() {
    let model = warped();
    let pack = curvature_pack(&model, &Drift::Zero, false).unwrap();
    let x = dv(&[-0.1, 0.2, 0.05]);
    let f = model.initial_frame(&x).unwrap();
    let (u, v, w) = ([0.3, -1.0, 0.2], [1.0, 0.5, -0.7], [0.1, 0.4, 0.9]);
    let a = pack.riemann(&x, &f, &u, &v, &w).unwrap();
    let b = pack.riemann(&x, &f, &v, &u, &w).unwrap();
    assert_abs_diff_eq!(a, -b, epsilon = 1e-9);
}

#[test]
fn chart_geodesic_leaving_region_is_an_error() {
    let model = ManifoldModel::chart(Arc::new(ConformalConstantCurvature { dim: 2, curvature: -1.0 })).unwrap();
    assert!(model.exp_map(&dv(&[0.9, 0.0]), &dv(&[5.0, 0.0])).is_err());
}

fn unit(v: [f64; 3]) -> DVector<f64> {
    let v = dv(&v);
    let n = v.norm();
    if n < 1e-3 {
        dv(&[0.0, 0.0, 1.0])
    } else {
        v / n
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sphere_transport_keeps_frame_orthonormal(p in prop::array::uniform3(-1.0f64..1.0), q in prop::array::uniform3(-1.0f64..1.0), c in 0.3f64..3.0) {
        let m = ManifoldModel::sphere(2, c).unwrap();
        let x = unit(p) / c.sqrt();
        let f = m.initial_frame(&x).unwrap();
        let mut v = dv(&q) * 0.3;
        m.project_tangent(&x, &mut v);
        let (y, g) = m.parallel_transport_step(&x, &v, &f).unwrap();
        prop_assert!(m.frame_defect(&y, &g) <= 1e-8);
        prop_assert!((y.norm() - 1.0 / c.sqrt()).abs() <= 1e-12);
    }

    #[test]
    fn hyperbolic_transport_keeps_frame_orthonormal(p in prop::array::uniform2(-2.0f64..2.0), q in prop::array::uniform3(-1.0f64..1.0)) {
        let m = ManifoldModel::hyperbolic(2, -1.0).unwrap();
        let x = dv(&[(1.0 + p[0] * p[0] + p[1] * p[1]).sqrt(), p[0], p[1]]);
        let f = m.initial_frame(&x).unwrap();
        let mut v = dv(&q) * 0.3;
        m.project_tangent(&x, &mut v);
        let (y, g) = m.parallel_transport_step(&x, &v, &f).unwrap();
        prop_assert!(m.frame_defect(&y, &g) <= 1e-8);
        prop_assert!(m.check_point(&y).is_ok());
    }

    #[test]
    fn chart_transport_defect_is_second_order(p in prop::array::uniform2(-0.3f64..0.3), q in prop::array::uniform2(-1.0f64..1.0)) {
        let dt: f64 = 1e-2;
        let m = ManifoldModel::chart(Arc::new(ConformalConstantCurvature { dim: 2, curvature: 1.0 })).unwrap();
        let x = dv(&p);
        let f = m.initial_frame(&x).unwrap();
        let v = &f * dv(&q) * dt.sqrt();
        let (y, g) = m.parallel_transport_step(&x, &v, &f).unwrap();
        prop_assert!(m.frame_defect(&y, &g) <= 10.0 * dt * dt);
    }
}
