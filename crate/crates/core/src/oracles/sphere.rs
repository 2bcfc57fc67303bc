//! Zonal functions on the round 2-sphere of curvature `c`, expanded in
//! Legendre polynomials of `μ = x_3 / |x|`. Each mode decays by
//! `exp(-ℓ(ℓ+1) c t / 2)`.

use nalgebra::{DMatrix, DVector};

use super::Oracle;
use crate::error::{Error, Result};
use crate::fields::Payoff;

/// Largest degree considered before giving up on a truncation bound.
const MAX_DEGREE: usize = 4000;
/// Target bound on the neglected tail, including second derivatives.
const TAIL_TOL: f64 = 1e-11;

pub struct SphereSpectral {
    curvature: f64,
    radius: f64,
    coeffs: Coeffs,
    sup: f64,
}

enum Coeffs {
    Finite(Vec<f64>),
    /// Indicator of `μ >= a`.
    Cap(f64),
}

impl SphereSpectral {
    pub fn new(curvature: f64, payoff: &Payoff) -> Result<Self> {
        if !(curvature > 0.0) {
            return Err(Error::Config("sphere oracle needs positive curvature".into()));
        }
        let radius = 1.0 / curvature.sqrt();
        let (coeffs, sup) = match payoff {
            Payoff::Constant(c) => (Coeffs::Finite(vec![*c]), c.abs()),
            Payoff::Zonal(c) => (Coeffs::Finite(c.clone()), c.iter().map(|v| v.abs()).sum()),
            Payoff::Coordinate(2) => (Coeffs::Finite(vec![0.0, radius]), radius),
            Payoff::HalfSpace { index: 2, threshold } => (Coeffs::Cap((threshold / radius).clamp(-1.0, 1.0)), 1.0),
            other => return Err(Error::UnsupportedPayoff(format!("{other:?} is not zonal about the last axis"))),
        };
        Ok(Self { curvature, radius, coeffs, sup })
    }

    fn decay(&self, l: usize) -> f64 {
        0.5 * (l * (l + 1)) as f64 * self.curvature
    }

    /// Degree needed at time `t` and the resulting tail bound.
    pub fn truncation(&self, t: f64) -> (usize, f64) {
        match &self.coeffs {
            Coeffs::Finite(c) => (c.len().saturating_sub(1), 0.0),
            Coeffs::Cap(_) => {
                // |c_l| <= (2l+1) sup|f|, |P_l^(k)| <= l^(2k)
                let term = |l: usize| {
                    let lf = l as f64;
                    self.sup * (2.0 * lf + 1.0) * (1.0 + lf.powi(4)) * (-self.decay(l) * t).exp()
                };
                let mut l = 1;
                while l < MAX_DEGREE {
                    // terms decrease beyond the peak; sum a geometric-dominated tail
                    let tail: f64 = (l + 1..(l + 200).min(MAX_DEGREE + 200)).map(term).sum();
                    if tail < TAIL_TOL && term(l + 1) < term(l) {
                        return (l, tail);
                    }
                    l += 1;
                }
                (MAX_DEGREE, (MAX_DEGREE + 1..MAX_DEGREE + 200).map(term).sum())
            }
        }
    }

    fn coefficients(&self, lmax: usize) -> Vec<f64> {
        match &self.coeffs {
            Coeffs::Finite(c) => c.clone(),
            Coeffs::Cap(a) => {
                let (p, _, _) = legendre_with_derivatives(*a, lmax + 1);
                let mut c = vec![0.5 * (1.0 - a)];
                for l in 1..=lmax {
                    c.push(0.5 * (p[l - 1] - p[l + 1]));
                }
                c
            }
        }
    }

    /// `(u, u', u'', L u)` of the series in `μ` at time `t`.
    fn series(&self, t: f64, mu: f64) -> [f64; 4] {
        let (lmax, _) = self.truncation(t);
        let c = self.coefficients(lmax);
        let (p, dp, ddp) = legendre_with_derivatives(mu, lmax.max(1));
        let mut out = [0.0; 4];
        for (l, cl) in c.iter().enumerate() {
            let e = cl * (-self.decay(l) * t).exp();
            out[0] += e * p[l];
            out[1] += e * dp[l];
            out[2] += e * ddp[l];
            out[3] -= e * self.decay(l) * p[l];
        }
        out
    }

    fn mu_derivatives(&self, x: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let n = x.len();
        let last = n - 1;
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let r = r2.sqrt();
        let r3 = r2 * r;
        let r5 = r3 * r2;
        let xn = x[last];
        let mu = (xn / r).clamp(-1.0, 1.0);
        let grad = DVector::from_fn(n, |i, _| if i == last { 1.0 / r } else { 0.0 } - xn * x[i] / r3);
        let hess = DMatrix::from_fn(n, n, |i, j| {
            let mut v = 3.0 * xn * x[i] * x[j] / r5;
            if i == last {
                v -= x[j] / r3;
            }
            if j == last {
                v -= x[i] / r3;
            }
            if i == j {
                v -= xn / r3;
            }
            v
        });
        (mu, grad, hess)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

/// `P_l`, `P_l'` and `P_l''` for `l = 0..=lmax`.
pub fn legendre_with_derivatives(mu: f64, lmax: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut p = vec![0.0; lmax + 2];
    let mut dp = vec![0.0; lmax + 2];
    let mut ddp = vec![0.0; lmax + 2];
    p[0] = 1.0;
    p[1] = mu;
    dp[1] = 1.0;
    for l in 1..=lmax {
        let lf = l as f64;
        p[l + 1] = ((2.0 * lf + 1.0) * mu * p[l] - lf * p[l - 1]) / (lf + 1.0);
        dp[l + 1] = dp[l - 1] + (2.0 * lf + 1.0) * p[l];
        ddp[l + 1] = ddp[l - 1] + (2.0 * lf + 1.0) * dp[l];
    }
    p.truncate(lmax + 1);
    dp.truncate(lmax + 1);
    ddp.truncate(lmax + 1);
    (p, dp, ddp)
}

impl Oracle for SphereSpectral {
    fn name(&self) -> &'static str {
        "sphere_spectral"
    }

    fn check(&self, t: f64) -> Result<()> {
        let (_, tail) = self.truncation(t);
        if tail > TAIL_TOL {
            return Err(Error::OracleTruncation { bound: tail, tol: TAIL_TOL });
        }
        Ok(())
    }

    fn value(&self, t: f64, x: &[f64]) -> f64 {
        let (mu, _, _) = self.mu_derivatives(x);
        self.series(t, mu)[0]
    }

    fn gradient(&self, t: f64, x: &[f64]) -> DVector<f64> {
        let (mu, g, _) = self.mu_derivatives(x);
        g * self.series(t, mu)[1]
    }

    fn hessian(&self, t: f64, x: &[f64]) -> DMatrix<f64> {
        let (mu, g, h) = self.mu_derivatives(x);
        let s = self.series(t, mu);
        &g * g.transpose() * s[2] + h * s[1]
    }

    fn generator(&self, t: f64, x: &[f64]) -> f64 {
        let (mu, _, _) = self.mu_derivatives(x);
        self.series(t, mu)[3]
    }
}
