//! Closed-form references for the estimators.
//!
//! Every oracle returns `P_t^V f` and its coordinate derivatives; Riemannian
//! quantities in frame components are assembled by [`reference`].

mod gaussian;
mod harmonic;
pub mod quadrature;
mod sphere;

use nalgebra::{DMatrix, DVector};

pub use gaussian::{GaussianHeat, OuMehler};
pub use harmonic::HarmonicFeynmanKac;
pub use sphere::{legendre_with_derivatives, SphereSpectral};

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::fields::{Drift, FieldSpec, Potential};
use crate::geometry::{ManifoldModel, ModelKind};
use crate::paths::SimConfig;

pub trait Oracle: Send + Sync {
    fn name(&self) -> &'static str;

    /// Fails if the oracle cannot meet its accuracy target at time `t`.
    fn check(&self, _t: f64) -> Result<()> {
        Ok(())
    }

    /// `P_t^V f(x)`.
    fn value(&self, t: f64, x: &[f64]) -> f64;

    /// Coordinate partials of `P_t^V f` at `x`.
    fn gradient(&self, t: f64, x: &[f64]) -> DVector<f64>;

    /// Coordinate second partials of `P_t^V f` at `x`.
    fn hessian(&self, t: f64, x: &[f64]) -> DMatrix<f64>;

    /// `(½Δ + Z) P_t^V f (x)`.
    fn generator(&self, t: f64, x: &[f64]) -> f64;
}

/// Multiplies an oracle by `e^{-c t}` for a constant potential `c`.
pub struct Discounted<O> {
    inner: O,
    rate: f64,
}

impl<O: Oracle> Discounted<O> {
    pub fn new(inner: O, rate: f64) -> Self {
        Self { inner, rate }
    }

    fn factor(&self, t: f64) -> f64 {
        (-self.rate * t).exp()
    }
}

impl<O: Oracle> Oracle for Discounted<O> {
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    fn check(&self, t: f64) -> Result<()> {
        self.inner.check(t)
    }

    fn value(&self, t: f64, x: &[f64]) -> f64 {
        self.factor(t) * self.inner.value(t, x)
    }

    fn gradient(&self, t: f64, x: &[f64]) -> DVector<f64> {
        self.inner.gradient(t, x) * self.factor(t)
    }

    fn hessian(&self, t: f64, x: &[f64]) -> DMatrix<f64> {
        self.inner.hessian(t, x) * self.factor(t)
    }

    fn generator(&self, t: f64, x: &[f64]) -> f64 {
        self.factor(t) * self.inner.generator(t, x)
    }
}

fn wrap<O: Oracle + 'static>(o: O, rate: f64) -> Box<dyn Oracle> {
    if rate == 0.0 {
        Box::new(o)
    } else {
        Box::new(Discounted::new(o, rate))
    }
}

/// Selects the closed-form oracle for a model and field combination.
pub fn oracle_for(model: &ManifoldModel, fields: &FieldSpec) -> Result<Box<dyn Oracle>> {
    let missing = || {
        Error::OracleMissing(format!(
            "{} model with potential {:?}, drift {:?}, payoff {:?}",
            model.kind(),
            fields.potential,
            fields.drift,
            fields.payoff
        ))
    };
    let rate = match fields.potential {
        Potential::Zero => 0.0,
        Potential::Constant(c) => c,
        Potential::Quadratic(a) => {
            if model.kind() != ModelKind::Euclidean || !fields.drift.is_zero() {
                return Err(missing());
            }
            return Ok(Box::new(HarmonicFeynmanKac::new(a, &fields.payoff).map_err(|_| missing())?));
        }
        Potential::Custom(_) => return Err(missing()),
    };
    let unsupported = |e: Error| match e {
        Error::UnsupportedPayoff(_) => missing(),
        other => other,
    };
    match (model.kind(), &fields.drift) {
        (ModelKind::Euclidean, Drift::Zero) => Ok(wrap(GaussianHeat::new(&fields.payoff).map_err(unsupported)?, rate)),
        (ModelKind::Euclidean, Drift::OrnsteinUhlenbeck(l)) => {
            Ok(wrap(OuMehler::new(*l, &fields.payoff).map_err(unsupported)?, rate))
        }
        (ModelKind::Sphere, Drift::Zero) if model.dim() == 2 => {
            Ok(wrap(SphereSpectral::new(model.curvature(), &fields.payoff).map_err(unsupported)?, rate))
        }
        _ => Err(missing()),
    }
}

/// Reference value of `kind` for `cfg` (at `x0`, horizon `T`, directions `v`, `w`).
pub fn reference(cfg: &SimConfig, kind: EstimatorKind, oracle: &dyn Oracle) -> Result<f64> {
    let t = cfg.horizon;
    oracle.check(t)?;
    let x = cfg.x0.as_slice();
    let frame = cfg.initial_frame()?;
    Ok(match kind {
        EstimatorKind::Semigroup => oracle.value(t, x),
        EstimatorKind::Gradient | EstimatorKind::MartingaleDrift => oracle.gradient(t, x).dot(&(&frame * &cfg.v)),
        EstimatorKind::Generator => oracle.generator(t, x),
        EstimatorKind::Hessian => {
            let g = oracle.gradient(t, x);
            let h = oracle.hessian(t, x);
            let hf = cfg.model.hessian_to_frame(&cfg.x0, &frame, &g, &h);
            cfg.v.dot(&(hf * &cfg.w))
        }
    })
}
