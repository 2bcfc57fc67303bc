//! Damped transport and derivative estimates under an Ornstein-Uhlenbeck drift.

use bismut_mc::estimators::run_batch;
use bismut_mc::oracles::{oracle_for, reference};
use bismut_mc::paths::simulate;
use bismut_mc::{Drift, EstimatorKind, FieldSpec, ManifoldModel, Payoff, Potential, SimConfig};
use nalgebra::DVector;

fn main() -> bismut_mc::Result<()> {
    let lambda = 1.0;
    let model = ManifoldModel::euclidean(1)?;
    let fields = FieldSpec::new(Potential::Zero, Drift::OrnsteinUhlenbeck(lambda), Payoff::Sin(0));
    let oracle = oracle_for(&model, &fields)?;
    let cfg = SimConfig::new(model, fields, DVector::from_vec(vec![0.3]), 1.0, 1e-2).with_paths(20_000);

    let path = simulate(&cfg, 0)?;
    println!("W_T = {:.5}  (e^(-λT) = {:.5})", path.w_hat[(0, 0)], (-lambda * cfg.horizon).exp());

    let kinds = [EstimatorKind::Gradient, EstimatorKind::Generator, EstimatorKind::Hessian];
    for r in run_batch(&cfg, &kinds, 0, 0.0)? {
        let exact = reference(&cfg, r.estimator, oracle.as_ref())?;
        println!("{:<10} {:>9.5} ± {:.5}  (exact {exact:.5})", r.estimator.as_str(), r.estimate, r.std_error);
    }
    Ok(())
}
