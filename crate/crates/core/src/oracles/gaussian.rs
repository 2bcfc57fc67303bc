//! Closed forms for Gaussian transition laws: Brownian motion and the
//! Ornstein-Uhlenbeck process `dx = dB - λ x dt`.
//!
//! Both have `x_t ~ N(a x, σ² I)`, so `P_t f(x) = E f(a x + σ ξ)` and the
//! coordinate derivatives follow from the chain rule in `x`.

use nalgebra::{DMatrix, DVector};

use super::quadrature::GaussHermite;
use super::Oracle;
use crate::error::{Error, Result};
use crate::fields::Payoff;

/// Supported payoffs for the Gaussian oracles.
#[derive(Debug, Clone)]
enum Kind {
    Constant(f64),
    Coordinate(usize),
    Sin(usize),
    Quadratic,
    Bump,
}

fn classify(payoff: &Payoff) -> Result<Kind> {
    Ok(match payoff {
        Payoff::Constant(c) => Kind::Constant(*c),
        Payoff::Coordinate(i) => Kind::Coordinate(*i),
        Payoff::Sin(i) => Kind::Sin(*i),
        Payoff::Quadratic => Kind::Quadratic,
        Payoff::GaussianBump => Kind::Bump,
        other => return Err(Error::UnsupportedPayoff(format!("{other:?} has no Gaussian closed form"))),
    })
}

/// Value, gradient and Hessian of `E f(a x + σ ξ)`.
struct Moments {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

fn moments(kind: &Kind, quad: &GaussHermite, x: &[f64], a: f64, var: f64) -> Moments {
    let n = x.len();
    let s = var.sqrt();
    let mut grad = DVector::zeros(n);
    let mut hess = DMatrix::zeros(n, n);
    let value = match *kind {
        Kind::Constant(c) => c,
        Kind::Coordinate(i) => {
            grad[i] = a;
            a * x[i]
        }
        Kind::Sin(i) => {
            let damp = (-0.5 * var).exp();
            let m = a * x[i];
            grad[i] = a * damp * m.cos();
            hess[(i, i)] = -a * a * damp * m.sin();
            damp * m.sin()
        }
        Kind::Quadratic => {
            for i in 0..n {
                grad[i] = 2.0 * a * a * x[i];
                hess[(i, i)] = 2.0 * a * a;
            }
            a * a * x.iter().map(|v| v * v).sum::<f64>() + n as f64 * var
        }
        Kind::Bump => {
            // product of one-dimensional factors q(m) = E exp(-(m + s ξ)^2 / 2)
            let q: Vec<[f64; 3]> = x
                .iter()
                .map(|&xi| {
                    let m = a * xi;
                    let g = |y: f64| (-0.5 * y * y).exp();
                    [
                        quad.expect(m, s, g),
                        quad.expect(m, s, |y| -y * g(y)),
                        quad.expect(m, s, |y| (y * y - 1.0) * g(y)),
                    ]
                })
                .collect();
            let prod_except = |skip: &[usize]| -> f64 {
                (0..n).filter(|j| !skip.contains(j)).map(|j| q[j][0]).product()
            };
            for i in 0..n {
                grad[i] = a * q[i][1] * prod_except(&[i]);
                for j in 0..n {
                    hess[(i, j)] = if i == j {
                        a * a * q[i][2] * prod_except(&[i])
                    } else {
                        a * a * q[i][1] * q[j][1] * prod_except(&[i, j])
                    };
                }
            }
            prod_except(&[])
        }
    };
    Moments { value, grad, hess }
}

/// `P_t f` for standard Brownian motion in `R^n`.
pub struct GaussianHeat {
    kind: Kind,
    quad: GaussHermite,
}

impl GaussianHeat {
    pub fn new(payoff: &Payoff) -> Result<Self> {
        Ok(Self { kind: classify(payoff)?, quad: GaussHermite::new(64) })
    }
}

impl Oracle for GaussianHeat {
    fn name(&self) -> &'static str {
        "gaussian_heat"
    }

    fn value(&self, t: f64, x: &[f64]) -> f64 {
        moments(&self.kind, &self.quad, x, 1.0, t).value
    }

    fn gradient(&self, t: f64, x: &[f64]) -> DVector<f64> {
        moments(&self.kind, &self.quad, x, 1.0, t).grad
    }

    fn hessian(&self, t: f64, x: &[f64]) -> DMatrix<f64> {
        moments(&self.kind, &self.quad, x, 1.0, t).hess
    }

    fn generator(&self, t: f64, x: &[f64]) -> f64 {
        0.5 * self.hessian(t, x).trace()
    }
}

/// Mehler formula for `dx = dB - λ x dt`.
pub struct OuMehler {
    lambda: f64,
    kind: Kind,
    quad: GaussHermite,
}

impl OuMehler {
    pub fn new(lambda: f64, payoff: &Payoff) -> Result<Self> {
        Ok(Self { lambda, kind: classify(payoff)?, quad: GaussHermite::new(64) })
    }

    /// `(e^{-λ t}, (1 - e^{-2 λ t}) / (2 λ))`.
    fn law(&self, t: f64) -> (f64, f64) {
        let a = (-self.lambda * t).exp();
        let var = if self.lambda.abs() < 1e-12 { t } else { -(-2.0 * self.lambda * t).exp_m1() / (2.0 * self.lambda) };
        (a, var)
    }
}

impl Oracle for OuMehler {
    fn name(&self) -> &'static str {
        "ou_mehler"
    }

    fn value(&self, t: f64, x: &[f64]) -> f64 {
        let (a, var) = self.law(t);
        moments(&self.kind, &self.quad, x, a, var).value
    }

    fn gradient(&self, t: f64, x: &[f64]) -> DVector<f64> {
        let (a, var) = self.law(t);
        moments(&self.kind, &self.quad, x, a, var).grad
    }

    fn hessian(&self, t: f64, x: &[f64]) -> DMatrix<f64> {
        let (a, var) = self.law(t);
        moments(&self.kind, &self.quad, x, a, var).hess
    }

    fn generator(&self, t: f64, x: &[f64]) -> f64 {
        let (a, var) = self.law(t);
        let m = moments(&self.kind, &self.quad, x, a, var);
        let drift: f64 = x.iter().zip(m.grad.iter()).map(|(xi, g)| -self.lambda * xi * g).sum();
        0.5 * m.hess.trace() + drift
    }
}
