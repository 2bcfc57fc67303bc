//! Off-diagonal Hessian on the sphere, estimated in both argument orders.

use bismut_mc::estimators::estimate_hessian;
use bismut_mc::oracles::{oracle_for, reference};
use bismut_mc::{Drift, EstimatorKind, FieldSpec, ManifoldModel, Payoff, Potential, SimConfig};
use nalgebra::DVector;

fn main() -> bismut_mc::Result<()> {
    let model = ManifoldModel::sphere(2, 1.0)?;
    let fields = FieldSpec::new(Potential::Zero, Drift::Zero, Payoff::Coordinate(2));
    let oracle = oracle_for(&model, &fields)?;
    let (theta, phi) = (1.0f64, 0.7f64);
    let x0 = DVector::from_vec(vec![theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]);
    let base = SimConfig::new(model, fields, x0, 0.5, 1e-2).with_paths(20_000);
    for (v, w) in [([1.0, 0.0], [0.0, 1.0]), ([0.0, 1.0], [1.0, 0.0]), ([1.0, 0.0], [1.0, 0.0])] {
        let cfg = base.clone().with_directions(&v, &w);
        let r = estimate_hessian(&cfg, 0)?;
        let exact = reference(&cfg, EstimatorKind::Hessian, oracle.as_ref())?;
        println!("Hess(v={v:?}, w={w:?}) = {:>9.5} ± {:.5}  (exact {exact:.5})", r.estimate, r.std_error);
    }
    Ok(())
}
