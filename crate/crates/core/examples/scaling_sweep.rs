//! Small-time behaviour of the three derivative estimates for a discontinuous payoff.

use bismut_mc::estimators::run_batch;
use bismut_mc::{Drift, EstimatorKind, FieldSpec, ManifoldModel, Payoff, Potential, SimConfig};
use nalgebra::DVector;

fn main() -> bismut_mc::Result<()> {
    let model = ManifoldModel::sphere(2, 1.0)?;
    let fields = FieldSpec::new(Potential::Zero, Drift::Zero, Payoff::HalfSpace { index: 2, threshold: 0.0 });
    let theta = 1.3f64;
    let x0 = DVector::from_vec(vec![theta.sin(), 0.0, theta.cos()]);
    let kinds = [EstimatorKind::Gradient, EstimatorKind::Generator, EstimatorKind::Hessian];
    println!("{:>6} {:>12} {:>12} {:>12}", "T", "√T·SE(d)", "T·SE(L)", "T·SE(Hess)");
    for t in [0.05, 0.1, 0.2, 0.4] {
        let cfg = SimConfig::new(model.clone(), fields.clone(), x0.clone(), t, 5e-3).with_paths(5_000);
        let r = run_batch(&cfg, &kinds, 0, 0.0)?;
        println!(
            "{t:>6} {:>12.4} {:>12.4} {:>12.4}",
            t.sqrt() * r[0].std_error,
            t * r[1].std_error,
            t * r[2].std_error
        );
    }
    Ok(())
}
