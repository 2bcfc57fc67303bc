//! Problem data: potential `V(t, x)`, drift `Z(x)` and payoff `f(x)`.
//!
//! All fields are evaluated in model coordinates (embedding coordinates for
//! the sphere and hyperboloid). Derivatives are coordinate partials of the
//! given expression; the geometry layer turns them into Riemannian objects in
//! frame components.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{ManifoldModel, ModelKind};

pub trait PotentialField: Send + Sync {
    fn value(&self, t: f64, x: &[f64]) -> f64;
    fn gradient(&self, t: f64, x: &[f64], out: &mut [f64]);
    fn hessian(&self, t: f64, x: &[f64], out: &mut DMatrix<f64>);
    /// Declared lower bound `v_min`.
    fn lower_bound(&self) -> f64;
}

pub trait DriftField: Send + Sync {
    fn value(&self, x: &[f64], out: &mut [f64]);
    /// `out[(k, j)] = ∂_j Z^k`.
    fn jacobian(&self, x: &[f64], out: &mut DMatrix<f64>);
    /// `Σ_ij ∂_i ∂_j Z^k a^i b^j` if the field can supply it.
    fn second_derivative(&self, _x: &[f64], _a: &[f64], _b: &[f64], _out: &mut [f64]) -> bool {
        false
    }
}

pub type PayoffFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

#[derive(Clone)]
pub enum Potential {
    Zero,
    Constant(f64),
    /// `V(x) = a |x|^2`, `a >= 0`.
    Quadratic(f64),
    Custom(Arc<dyn PotentialField>),
}

#[derive(Clone)]
pub enum Drift {
    Zero,
    /// `Z(x) = -λ x` (Euclidean only).
    OrnsteinUhlenbeck(f64),
    Custom(Arc<dyn DriftField>),
}

#[derive(Clone)]
pub enum Payoff {
    Constant(f64),
    /// `f(x) = x_i`.
    Coordinate(usize),
    /// `f(x) = sin(x_i)`.
    Sin(usize),
    /// `f(x) = |x|^2`.
    Quadratic,
    /// `f(x) = exp(-|x|^2 / 2)`.
    GaussianBump,
    /// `f = Σ_l c_l P_l(cos θ)` with `cos θ = x_last / |x|` (zonal about the last axis).
    Zonal(Vec<f64>),
    /// `f(x) = 1{x_index >= threshold}`.
    HalfSpace { index: usize, threshold: f64 },
    Custom(Arc<PayoffFn>),
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::Zero => write!(f, "Zero"),
            Potential::Constant(c) => write!(f, "Constant({c})"),
            Potential::Quadratic(a) => write!(f, "Quadratic({a})"),
            Potential::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Drift::Zero => write!(f, "Zero"),
            Drift::OrnsteinUhlenbeck(l) => write!(f, "OrnsteinUhlenbeck({l})"),
            Drift::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl fmt::Debug for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payoff::Constant(c) => write!(f, "Constant({c})"),
            Payoff::Coordinate(i) => write!(f, "Coordinate({i})"),
            Payoff::Sin(i) => write!(f, "Sin({i})"),
            Payoff::Quadratic => write!(f, "Quadratic"),
            Payoff::GaussianBump => write!(f, "GaussianBump"),
            Payoff::Zonal(c) => write!(f, "Zonal({c:?})"),
            Payoff::HalfSpace { index, threshold } => write!(f, "HalfSpace({index}, {threshold})"),
            Payoff::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Potential {
    pub fn is_zero(&self) -> bool {
        matches!(self, Potential::Zero) || matches!(self, Potential::Constant(c) if *c == 0.0)
    }

    /// True when `dV` and `∇dV` vanish identically.
    pub fn is_spatially_constant(&self) -> bool {
        matches!(self, Potential::Zero | Potential::Constant(_))
    }

    pub fn lower_bound(&self) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Constant(c) => *c,
            Potential::Quadratic(_) => 0.0,
            Potential::Custom(p) => p.lower_bound(),
        }
    }

    #[inline]
    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Constant(c) => *c,
            Potential::Quadratic(a) => a * x.iter().map(|v| v * v).sum::<f64>(),
            Potential::Custom(p) => p.value(t, x),
        }
    }

    #[inline]
    pub fn gradient(&self, t: f64, x: &[f64], out: &mut [f64]) {
        match self {
            Potential::Zero | Potential::Constant(_) => out.iter_mut().for_each(|o| *o = 0.0),
            Potential::Quadratic(a) => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = 2.0 * a * xi;
                }
            }
            Potential::Custom(p) => p.gradient(t, x, out),
        }
    }

    pub fn hessian(&self, t: f64, x: &[f64], out: &mut DMatrix<f64>) {
        match self {
            Potential::Zero | Potential::Constant(_) => out.fill(0.0),
            Potential::Quadratic(a) => {
                out.fill(0.0);
                out.fill_diagonal(2.0 * a);
            }
            Potential::Custom(p) => p.hessian(t, x, out),
        }
    }
}

impl Drift {
    pub fn is_zero(&self) -> bool {
        matches!(self, Drift::Zero) || matches!(self, Drift::OrnsteinUhlenbeck(l) if *l == 0.0)
    }

    /// True when the coordinate second derivative of `Z` vanishes.
    pub fn is_affine(&self) -> bool {
        matches!(self, Drift::Zero | Drift::OrnsteinUhlenbeck(_))
    }

    #[inline]
    pub fn value(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Drift::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            Drift::OrnsteinUhlenbeck(l) => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -l * xi;
                }
            }
            Drift::Custom(z) => z.value(x, out),
        }
    }

    pub fn jacobian(&self, x: &[f64], out: &mut DMatrix<f64>) {
        match self {
            Drift::Zero => out.fill(0.0),
            Drift::OrnsteinUhlenbeck(l) => {
                out.fill(0.0);
                out.fill_diagonal(-l);
            }
            Drift::Custom(z) => z.jacobian(x, out),
        }
    }

    /// Coordinate second derivative `D^2 Z[a, b]`; exact for built-ins,
    /// field-supplied or central differences of the Jacobian for custom drifts.
    pub fn second_derivative(&self, x: &[f64], a: &[f64], b: &[f64], out: &mut [f64]) {
        match self {
            Drift::Zero | Drift::OrnsteinUhlenbeck(_) => out.iter_mut().for_each(|o| *o = 0.0),
            Drift::Custom(z) => {
                if z.second_derivative(x, a, b, out) {
                    return;
                }
                let m = x.len();
                let h = 1e-5 * x.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                for i in 0..m {
                    xp[i] += h * a[i];
                    xm[i] -= h * a[i];
                }
                let mut jp = DMatrix::zeros(m, m);
                let mut jm = DMatrix::zeros(m, m);
                z.jacobian(&xp, &mut jp);
                z.jacobian(&xm, &mut jm);
                let d = (jp - jm) / (2.0 * h);
                let r = d * DVector::from_column_slice(b);
                out.copy_from_slice(r.as_slice());
            }
        }
    }
}

/// Legendre polynomial values `P_0..P_L` at `mu`.
pub(crate) fn legendre_values(mu: f64, lmax: usize, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if lmax == 0 {
        return;
    }
    out.push(mu);
    for l in 1..lmax {
        let lf = l as f64;
        let next = ((2.0 * lf + 1.0) * mu * out[l] - lf * out[l - 1]) / (lf + 1.0);
        out.push(next);
    }
}

impl Payoff {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Payoff::Constant(c) => *c,
            Payoff::Coordinate(i) => x[*i],
            Payoff::Sin(i) => x[*i].sin(),
            Payoff::Quadratic => x.iter().map(|v| v * v).sum(),
            Payoff::GaussianBump => (-0.5 * x.iter().map(|v| v * v).sum::<f64>()).exp(),
            Payoff::Zonal(coeffs) => {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let mu = (x[x.len() - 1] / r).clamp(-1.0, 1.0);
                let mut p = Vec::with_capacity(coeffs.len());
                legendre_values(mu, coeffs.len().saturating_sub(1), &mut p);
                coeffs.iter().zip(&p).map(|(c, p)| c * p).sum()
            }
            Payoff::HalfSpace { index, threshold } => {
                if x[*index] >= *threshold {
                    1.0
                } else {
                    0.0
                }
            }
            Payoff::Custom(f) => f(x),
        }
    }

    /// `sup |f|` where finite (used by scaling diagnostics).
    pub fn sup_norm(&self) -> Option<f64> {
        match self {
            Payoff::Constant(c) => Some(c.abs()),
            Payoff::Sin(_) | Payoff::GaussianBump | Payoff::HalfSpace { .. } => Some(1.0),
            Payoff::Zonal(c) => Some(c.iter().map(|v| v.abs()).sum()),
            _ => None,
        }
    }

    fn max_index(&self) -> Option<usize> {
        match self {
            Payoff::Coordinate(i) | Payoff::Sin(i) => Some(*i),
            Payoff::HalfSpace { index, .. } => Some(*index),
            _ => None,
        }
    }
}

/// The complete problem data for one run.
#[derive(Clone, Debug)]
pub struct FieldSpec {
    pub potential: Potential,
    pub drift: Drift,
    pub payoff: Payoff,
}

impl FieldSpec {
    pub fn new(potential: Potential, drift: Drift, payoff: Payoff) -> Self {
        Self { potential, drift, payoff }
    }

    /// Structural checks plus finite-difference probes of `dV` and `∇dV`
    /// (relative tolerance `1e-4`) and of the declared lower bound, at points
    /// scattered around `center`.
    pub fn validate(&self, model: &ManifoldModel, center: &DVector<f64>, seed: u64) -> Result<()> {
        let m = model.coord_dim();
        if let Some(i) = self.payoff.max_index() {
            if i >= m {
                return Err(Error::Config(format!("payoff coordinate index {i} out of range (coordinates: {m})")));
            }
        }
        if let Payoff::Zonal(c) = &self.payoff {
            if c.is_empty() {
                return Err(Error::Config("zonal payoff needs at least one coefficient".into()));
            }
        }
        match &self.potential {
            Potential::Quadratic(a) if !(*a >= 0.0) => {
                return Err(Error::Config(format!("quadratic potential needs a >= 0, got {a}")));
            }
            Potential::Constant(c) if !c.is_finite() => {
                return Err(Error::Config("constant potential must be finite".into()));
            }
            _ => {}
        }
        match &self.drift {
            Drift::OrnsteinUhlenbeck(l) => {
                if model.kind() != ModelKind::Euclidean {
                    return Err(Error::Config("the OU drift is only defined on the Euclidean model".into()));
                }
                if !l.is_finite() {
                    return Err(Error::Config("OU rate must be finite".into()));
                }
            }
            Drift::Custom(_) | Drift::Zero => {}
        }
        self.probe_potential(model, center, seed)
    }

    fn probe_potential(&self, model: &ManifoldModel, center: &DVector<f64>, seed: u64) -> Result<()> {
        let m = model.coord_dim();
        let v_min = self.potential.lower_bound();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f1e1d);
        let mut grad = vec![0.0; m];
        let mut hess = DMatrix::zeros(m, m);
        for _ in 0..8 {
            let x: Vec<f64> = (0..m).map(|i| center[i] + rng.random_range(-0.5..0.5)).collect();
            let t: f64 = rng.random_range(0.0..1.0);
            let v = self.potential.value(t, &x);
            if v < v_min - 1e-12 * v_min.abs().max(1.0) {
                return Err(Error::PotentialBelowBound { value: v, v_min });
            }
            if self.potential.is_spatially_constant() {
                continue;
            }
            self.potential.gradient(t, &x, &mut grad);
            self.potential.hessian(t, &x, &mut hess);
            let mut y = x.clone();
            for i in 0..m {
                let h = 1e-4 * x[i].abs().max(1.0);
                y[i] = x[i] + h;
                let vp = self.potential.value(t, &y);
                let mut gp = vec![0.0; m];
                self.potential.gradient(t, &y, &mut gp);
                y[i] = x[i] - h;
                let vm = self.potential.value(t, &y);
                let mut gm = vec![0.0; m];
                self.potential.gradient(t, &y, &mut gm);
                y[i] = x[i];
                let fd = (vp - vm) / (2.0 * h);
                check_close(fd, grad[i], "dV")?;
                for j in 0..m {
                    let fd2 = (gp[j] - gm[j]) / (2.0 * h);
                    check_close(fd2, hess[(j, i)], "∇dV")?;
                }
            }
        }
        Ok(())
    }
}

fn check_close(fd: f64, analytic: f64, what: &str) -> Result<()> {
    let scale = fd.abs().max(analytic.abs()).max(1.0);
    if (fd - analytic).abs() > 1e-4 * scale {
        return Err(Error::Config(format!(
            "{what} disagrees with finite differences: analytic {analytic}, numeric {fd}"
        )));
    }
    Ok(())
}
