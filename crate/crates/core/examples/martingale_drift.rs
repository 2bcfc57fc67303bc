//! The gradient martingale has constant mean; a drift in its mean flags a scheme error.

use bismut_mc::estimators::martingale_drift;
use bismut_mc::oracles::oracle_for;
use bismut_mc::{Drift, FieldSpec, ManifoldModel, Payoff, Potential, SimConfig};
use nalgebra::DVector;

fn main() -> bismut_mc::Result<()> {
    let model = ManifoldModel::euclidean(1)?;
    let fields = FieldSpec::new(Potential::Constant(0.3), Drift::OrnsteinUhlenbeck(0.5), Payoff::Sin(0));
    let oracle = oracle_for(&model, &fields)?;
    let cfg = SimConfig::new(model, fields, DVector::from_vec(vec![0.2]), 1.0, 1e-2).with_paths(10_000);
    for r in martingale_drift(&cfg, oracle.as_ref(), &[0.0, 0.25, 0.5, 0.75, 1.0], 0, 0.0)? {
        println!("E M_{:.2} = {:.5} ± {:.5}", r.t, r.estimate, r.std_error);
    }
    Ok(())
}
