//! Feynman-Kac semigroup with a harmonic potential against the Mehler formula.

use bismut_mc::estimators::estimate_semigroup;
use bismut_mc::oracles::{oracle_for, reference};
use bismut_mc::{Drift, EstimatorKind, FieldSpec, ManifoldModel, Payoff, Potential, SimConfig};
use nalgebra::DVector;

fn main() -> bismut_mc::Result<()> {
    let model = ManifoldModel::euclidean(1)?;
    let fields = FieldSpec::new(Potential::Quadratic(0.5), Drift::Zero, Payoff::Constant(1.0));
    let oracle = oracle_for(&model, &fields)?;
    let cfg = SimConfig::new(model, fields, DVector::from_vec(vec![1.0]), 1.0, 1e-2).with_paths(20_000);
    let r = estimate_semigroup(&cfg, 0)?;
    let exact = reference(&cfg, EstimatorKind::Semigroup, oracle.as_ref())?;
    println!("P_T^V f(x0) = {:.5} ± {:.5}  (exact {exact:.5})", r.estimate, r.std_error);
    Ok(())
}
