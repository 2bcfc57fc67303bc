//! Gradient of the heat semigroup on the line for f = sin.

use bismut_mc::estimators::estimate_gradient;
use bismut_mc::{Drift, FieldSpec, ManifoldModel, Payoff, Potential, SimConfig};
use nalgebra::DVector;

fn main() -> bismut_mc::Result<()> {
    let fields = FieldSpec::new(Potential::Zero, Drift::Zero, Payoff::Sin(0));
    let cfg = SimConfig::new(ManifoldModel::euclidean(1)?, fields, DVector::zeros(1), 1.0, 1e-2).with_paths(20_000);
    let r = estimate_gradient(&cfg, 0)?;
    println!("dP_T f(x0) = {:.5} ± {:.5}  (exact {:.5})", r.estimate, r.std_error, (-0.5f64).exp());
    Ok(())
}
