//! Generator estimate on the unit sphere for a zonal payoff.

use bismut_mc::estimators::estimate_generator;
use bismut_mc::oracles::{oracle_for, reference};
use bismut_mc::{Drift, EstimatorKind, FieldSpec, ManifoldModel, Payoff, Potential, SimConfig};
use nalgebra::DVector;

fn main() -> bismut_mc::Result<()> {
    let model = ManifoldModel::sphere(2, 1.0)?;
    let fields = FieldSpec::new(Potential::Zero, Drift::Zero, Payoff::Coordinate(2));
    let oracle = oracle_for(&model, &fields)?;
    let theta = 1.0f64;
    let x0 = DVector::from_vec(vec![theta.sin(), 0.0, theta.cos()]);
    let cfg = SimConfig::new(model, fields, x0, 0.5, 1e-2).with_paths(20_000);
    let r = estimate_generator(&cfg, 0)?;
    let exact = reference(&cfg, EstimatorKind::Generator, oracle.as_ref())?;
    println!("L P_T f(x0) = {:.5} ± {:.5}  (exact {exact:.5})", r.estimate, r.std_error);
    for t in &r.terms {
        println!("  {:<13} {:>9.5} ± {:.5}", t.name, t.estimate, t.std_error);
    }
    Ok(())
}
