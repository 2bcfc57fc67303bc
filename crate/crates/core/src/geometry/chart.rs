//! Numeric geometry for a single coordinate chart with a user-supplied metric.
//!
//! Christoffel symbols come from central differences of `g` (relative step
//! `1e-5`). Curvature and its covariant derivatives are obtained by further
//! fourth-order central differences of the lower-level quantities; the nested
//! steps grow so that round-off stays well below truncation error.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const METRIC_STEP: f64 = 1e-5;
const CHRISTOFFEL_STEP: f64 = 1e-3;
const CURVATURE_STEP: f64 = 1e-2;
const GEODESIC_SUBSTEP: f64 = 0.05;

/// A Riemannian metric in coordinates.
pub trait ChartMetric: Send + Sync {
    fn dim(&self) -> usize;

    /// Symmetric positive-definite `g_ij(x)`.
    fn metric(&self, x: &[f64]) -> DMatrix<f64>;

    /// The chart's validity region.
    fn contains(&self, _x: &[f64]) -> bool {
        true
    }
}

/// `g = 4 / (1 + c|x|^2)^2 · δ`: stereographic sphere (`c > 0`) or Poincaré
/// ball (`c < 0`) of sectional curvature `c`.
#[derive(Debug, Clone, Copy)]
pub struct ConformalConstantCurvature {
    pub dim: usize,
    pub curvature: f64,
}

impl ChartMetric for ConformalConstantCurvature {
    fn dim(&self) -> usize {
        self.dim
    }

    fn metric(&self, x: &[f64]) -> DMatrix<f64> {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let s = 2.0 / (1.0 + self.curvature * r2);
        DMatrix::from_diagonal_element(self.dim, self.dim, s * s)
    }

    fn contains(&self, x: &[f64]) -> bool {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if self.curvature >= 0.0 {
            r2 < 1e6
        } else {
            // stay clear of the ideal boundary
            r2 < 0.9 / -self.curvature
        }
    }
}

/// Metric given by a closure, valid inside a coordinate ball.
pub struct FnMetric<F> {
    dim: usize,
    radius: f64,
    f: F,
}

impl<F> FnMetric<F>
where
    F: Fn(&[f64]) -> DMatrix<f64> + Send + Sync,
{
    pub fn new(dim: usize, radius: f64, f: F) -> Self {
        Self { dim, radius, f }
    }
}

impl<F> ChartMetric for FnMetric<F>
where
    F: Fn(&[f64]) -> DMatrix<f64> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn metric(&self, x: &[f64]) -> DMatrix<f64> {
        (self.f)(x)
    }

    fn contains(&self, x: &[f64]) -> bool {
        x.iter().map(|v| v * v).sum::<f64>() < self.radius * self.radius
    }
}

/// Dense `n^3` array; `get(a, b, c)` is `Γ^a_{bc}` or an analogous component.
#[derive(Debug, Clone)]
pub struct Tensor3 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n * n] }
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.n + b) * self.n + c]
    }

    #[inline]
    fn at_mut(&mut self, a: usize, b: usize, c: usize) -> &mut f64 {
        &mut self.data[(a * self.n + b) * self.n + c]
    }
}

/// Dense `n^4` array; `get(l, i, j, k)` is `R^l_{ijk}`, i.e. `R(∂_i, ∂_j)∂_k = R^l_{ijk} ∂_l`.
#[derive(Debug, Clone)]
pub struct Tensor4 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor4 {
    fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n * n * n] }
    }

    #[inline]
    pub fn get(&self, l: usize, i: usize, j: usize, k: usize) -> f64 {
        let n = self.n;
        self.data[((l * n + i) * n + j) * n + k]
    }

    #[inline]
    fn at_mut(&mut self, l: usize, i: usize, j: usize, k: usize) -> &mut f64 {
        let n = self.n;
        &mut self.data[((l * n + i) * n + j) * n + k]
    }
}

pub struct ChartBackend {
    metric: Arc<dyn ChartMetric>,
    n: usize,
}

fn step_for(x: f64, base: f64) -> f64 {
    base * x.abs().max(1.0)
}

/// Fourth-order central difference of `f` along coordinate `i`.
fn d4<T, F>(x: &[f64], i: usize, h: f64, f: F, combine: impl Fn(&[T; 4], f64) -> T) -> T
where
    F: Fn(&[f64]) -> T,
{
    let mut y = x.to_vec();
    let mut eval = |off: f64| {
        y[i] = x[i] + off;
        f(&y)
    };
    let vals = [eval(-2.0 * h), eval(-h), eval(h), eval(2.0 * h)];
    combine(&vals, h)
}

fn combine_scalar_weights(h: f64) -> [f64; 4] {
    let s = 1.0 / (12.0 * h);
    [s, -8.0 * s, 8.0 * s, -s]
}

impl ChartBackend {
    pub fn new(metric: Arc<dyn ChartMetric>) -> Self {
        let n = metric.dim();
        Self { metric, n }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn metric_at(&self, x: &[f64]) -> DMatrix<f64> {
        self.metric.metric(x)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.metric.contains(x)
    }

    fn inverse_metric(&self, x: &[f64]) -> DMatrix<f64> {
        self.metric
            .metric(x)
            .try_inverse()
            .expect("chart metric must be invertible")
    }

    /// `Γ^k_{ij}` at `x`.
    pub fn christoffel(&self, x: &[f64]) -> Tensor3 {
        let n = self.n;
        let ginv = self.inverse_metric(x);
        let mut dg = Vec::with_capacity(n);
        let mut y = x.to_vec();
        for i in 0..n {
            let h = step_for(x[i], METRIC_STEP);
            y[i] = x[i] + h;
            let gp = self.metric.metric(&y);
            y[i] = x[i] - h;
            let gm = self.metric.metric(&y);
            y[i] = x[i];
            dg.push((gp - gm) / (2.0 * h));
        }
        let mut gamma = Tensor3::zeros(n);
        for k in 0..n {
            for i in 0..n {
                for j in i..n {
                    let mut s = 0.0;
                    for l in 0..n {
                        s += ginv[(k, l)] * (dg[i][(l, j)] + dg[j][(l, i)] - dg[l][(i, j)]);
                    }
                    *gamma.at_mut(k, i, j) = 0.5 * s;
                    *gamma.at_mut(k, j, i) = 0.5 * s;
                }
            }
        }
        gamma
    }

    fn christoffel_derivatives(&self, x: &[f64]) -> Vec<Tensor3> {
        (0..self.n)
            .map(|m| {
                let h = step_for(x[m], CHRISTOFFEL_STEP);
                d4(x, m, h, |y| self.christoffel(y), |v, h| {
                    let w = combine_scalar_weights(h);
                    let mut out = Tensor3::zeros(self.n);
                    for (idx, o) in out.data.iter_mut().enumerate() {
                        *o = w[0] * v[0].data[idx]
                            + w[1] * v[1].data[idx]
                            + w[2] * v[2].data[idx]
                            + w[3] * v[3].data[idx];
                    }
                    out
                })
            })
            .collect()
    }

    /// `R^l_{ijk}` at `x`.
    pub fn riemann(&self, x: &[f64]) -> Tensor4 {
        let n = self.n;
        let gamma = self.christoffel(x);
        let dgamma = self.christoffel_derivatives(x);
        let mut r = Tensor4::zeros(n);
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let mut s = dgamma[i].get(l, j, k) - dgamma[j].get(l, i, k);
                        for m in 0..n {
                            s += gamma.get(l, i, m) * gamma.get(m, j, k)
                                - gamma.get(l, j, m) * gamma.get(m, i, k);
                        }
                        *r.at_mut(l, i, j, k) = s;
                    }
                }
            }
        }
        r
    }

    /// `Ric^a_k = g^{aj} R^i_{ijk}` as a coordinate (1,1) tensor.
    pub fn ricci_sharp(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let r = self.riemann(x);
        let ginv = self.inverse_metric(x);
        let mut ric = DMatrix::zeros(n, n);
        for j in 0..n {
            for k in 0..n {
                ric[(j, k)] = (0..n).map(|i| r.get(i, i, j, k)).sum();
            }
        }
        ginv * ric
    }

    /// Coordinate (1,1) tensor `(∇Z)^k_j = ∂_j Z^k + Γ^k_{jm} Z^m`.
    pub fn covariant_jacobian(&self, x: &[f64], z: &DVector<f64>, dz: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n;
        let gamma = self.christoffel(x);
        let mut out = dz.clone();
        for k in 0..n {
            for j in 0..n {
                for m in 0..n {
                    out[(k, j)] += gamma.get(k, j, m) * z[m];
                }
            }
        }
        out
    }

    /// `(∇_i T)^k_j` for a (1,1) tensor field `T`; returned as `out[i]`.
    pub fn covariant_derivative_11<F>(&self, x: &[f64], field: F) -> Vec<DMatrix<f64>>
    where
        F: Fn(&[f64]) -> DMatrix<f64>,
    {
        let n = self.n;
        let gamma = self.christoffel(x);
        let t = field(x);
        (0..n)
            .map(|i| {
                let h = step_for(x[i], CURVATURE_STEP);
                let mut d = d4(x, i, h, &field, |v, h| {
                    let w = combine_scalar_weights(h);
                    &v[0] * w[0] + &v[1] * w[1] + &v[2] * w[2] + &v[3] * w[3]
                });
                for k in 0..n {
                    for j in 0..n {
                        let mut s = 0.0;
                        for m in 0..n {
                            s += gamma.get(k, i, m) * t[(m, j)] - gamma.get(m, i, j) * t[(k, m)];
                        }
                        d[(k, j)] += s;
                    }
                }
                d
            })
            .collect()
    }

    /// `(∇_m R)^l_{ijk}`, returned as `out[m]`.
    pub fn covariant_riemann_derivative(&self, x: &[f64]) -> Vec<Tensor4> {
        let n = self.n;
        let gamma = self.christoffel(x);
        let r = self.riemann(x);
        (0..n)
            .map(|m| {
                let h = step_for(x[m], CURVATURE_STEP);
                let mut d = d4(x, m, h, |y| self.riemann(y), |v, h| {
                    let w = combine_scalar_weights(h);
                    let mut out = Tensor4::zeros(n);
                    for (idx, o) in out.data.iter_mut().enumerate() {
                        *o = w[0] * v[0].data[idx]
                            + w[1] * v[1].data[idx]
                            + w[2] * v[2].data[idx]
                            + w[3] * v[3].data[idx];
                    }
                    out
                });
                for l in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            for k in 0..n {
                                let mut s = 0.0;
                                for p in 0..n {
                                    s += gamma.get(l, m, p) * r.get(p, i, j, k)
                                        - gamma.get(p, m, i) * r.get(l, p, j, k)
                                        - gamma.get(p, m, j) * r.get(l, i, p, k)
                                        - gamma.get(p, m, k) * r.get(l, i, j, p);
                                }
                                *d.at_mut(l, i, j, k) += s;
                            }
                        }
                    }
                }
                d
            })
            .collect()
    }

    fn geodesic_rhs(&self, state: &[f64], out: &mut [f64], ncols: usize) {
        let n = self.n;
        let x = &state[..n];
        let v = &state[n..2 * n];
        let gamma = self.christoffel(x);
        out[..n].copy_from_slice(v);
        for k in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += gamma.get(k, i, j) * v[i] * v[j];
                }
            }
            out[n + k] = -acc;
        }
        for c in 0..ncols {
            let base = 2 * n + c * n;
            for k in 0..n {
                let mut acc = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        acc += gamma.get(k, i, j) * v[i] * state[base + j];
                    }
                }
                out[base + k] = -acc;
            }
        }
    }

    /// RK4 integration of the geodesic and transport equations over unit time.
    pub fn geodesic_step(&self, x: &mut DVector<f64>, frame: &mut DMatrix<f64>, v: &DVector<f64>) -> Result<()> {
        let n = self.n;
        let ncols = frame.ncols();
        let g = self.metric.metric(x.as_slice());
        let speed = (v.transpose() * &g * v)[(0, 0)].max(0.0).sqrt();
        if speed == 0.0 {
            return Ok(());
        }
        let substeps = ((speed / GEODESIC_SUBSTEP).ceil() as usize).max(1);
        let h = 1.0 / substeps as f64;
        let len = 2 * n + ncols * n;
        let mut state = vec![0.0; len];
        state[..n].copy_from_slice(x.as_slice());
        state[n..2 * n].copy_from_slice(v.as_slice());
        for c in 0..ncols {
            for k in 0..n {
                state[2 * n + c * n + k] = frame[(k, c)];
            }
        }
        let mut k1 = vec![0.0; len];
        let mut k2 = vec![0.0; len];
        let mut k3 = vec![0.0; len];
        let mut k4 = vec![0.0; len];
        let mut tmp = vec![0.0; len];
        for _ in 0..substeps {
            self.geodesic_rhs(&state, &mut k1, ncols);
            for i in 0..len {
                tmp[i] = state[i] + 0.5 * h * k1[i];
            }
            self.check_region(&tmp[..n])?;
            self.geodesic_rhs(&tmp, &mut k2, ncols);
            for i in 0..len {
                tmp[i] = state[i] + 0.5 * h * k2[i];
            }
            self.geodesic_rhs(&tmp, &mut k3, ncols);
            for i in 0..len {
                tmp[i] = state[i] + h * k3[i];
            }
            self.check_region(&tmp[..n])?;
            self.geodesic_rhs(&tmp, &mut k4, ncols);
            for i in 0..len {
                state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            self.check_region(&state[..n])?;
        }
        x.copy_from_slice(&state[..n]);
        for c in 0..ncols {
            for k in 0..n {
                frame[(k, c)] = state[2 * n + c * n + k];
            }
        }
        Ok(())
    }

    fn check_region(&self, x: &[f64]) -> Result<()> {
        if x.iter().all(|v| v.is_finite()) && self.metric.contains(x) {
            Ok(())
        } else {
            Err(Error::OutsideChart { point: x.to_vec() })
        }
    }
}
