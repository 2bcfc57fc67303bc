//! Feynman-Kac semigroup of Brownian motion with `V(x) = a |x|^2` acting on
//! constants: `P_t^V 1(x) = Π_i (cosh ω t)^{-1/2} exp(-b x_i^2 / 2)` with
//! `ω = sqrt(2 a)` and `b = ω tanh(ω t)`.

use nalgebra::{DMatrix, DVector};

use super::Oracle;
use crate::error::{Error, Result};
use crate::fields::Payoff;

pub struct HarmonicFeynmanKac {
    omega: f64,
    scale: f64,
}

impl HarmonicFeynmanKac {
    pub fn new(a: f64, payoff: &Payoff) -> Result<Self> {
        let scale = match payoff {
            Payoff::Constant(c) => *c,
            other => return Err(Error::UnsupportedPayoff(format!("{other:?} with a quadratic potential"))),
        };
        if !(a >= 0.0) {
            return Err(Error::Config("quadratic potential needs a >= 0".into()));
        }
        Ok(Self { omega: (2.0 * a).sqrt(), scale })
    }

    fn b(&self, t: f64) -> f64 {
        self.omega * (self.omega * t).tanh()
    }
}

impl Oracle for HarmonicFeynmanKac {
    fn name(&self) -> &'static str {
        "harmonic_feynman_kac"
    }

    fn value(&self, t: f64, x: &[f64]) -> f64 {
        let n = x.len() as f64;
        let r2: f64 = x.iter().map(|v| v * v).sum();
        self.scale * (self.omega * t).cosh().powf(-0.5 * n) * (-0.5 * self.b(t) * r2).exp()
    }

    fn gradient(&self, t: f64, x: &[f64]) -> DVector<f64> {
        let phi = self.value(t, x);
        let b = self.b(t);
        DVector::from_iterator(x.len(), x.iter().map(|xi| -b * xi * phi))
    }

    fn hessian(&self, t: f64, x: &[f64]) -> DMatrix<f64> {
        let phi = self.value(t, x);
        let b = self.b(t);
        let n = x.len();
        DMatrix::from_fn(n, n, |i, j| (b * b * x[i] * x[j] - if i == j { b } else { 0.0 }) * phi)
    }

    fn generator(&self, t: f64, x: &[f64]) -> f64 {
        0.5 * self.hessian(t, x).trace()
    }
}
