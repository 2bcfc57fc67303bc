//! Curvature of a conformal chart computed by finite differences of the metric.

use std::sync::Arc;

use bismut_mc::geometry::{curvature_pack, ConformalConstantCurvature};
use bismut_mc::{Drift, ManifoldModel};
use nalgebra::DVector;

fn main() -> bismut_mc::Result<()> {
    for c in [1.0, -1.0] {
        let model = ManifoldModel::chart(Arc::new(ConformalConstantCurvature { dim: 2, curvature: c }))?;
        let x = DVector::from_vec(vec![0.2, -0.1]);
        let frame = model.initial_frame(&x)?;
        let pack = curvature_pack(&model, &Drift::Zero, true)?;
        let ric = pack.ricci_z(&x, &frame)?;
        let r = pack.riemann(&x, &frame, &[1.0, 0.0], &[0.0, 1.0], &[0.0, 1.0])?;
        let d = pack.dstar_r(&x, &frame, &[1.0, 0.0], &[0.0, 1.0])?;
        println!("c = {c:+}: Ric = {:?}, R(e1,e2)e2 = {:?}, |d*R| = {:.2e}", ric.as_slice(), r.as_slice(), d.norm());
    }
    Ok(())
}
