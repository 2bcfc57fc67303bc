//! Model manifolds: metric, geodesic steps, parallel transport and curvature.
//!
//! Points live in the model's coordinate space. For the sphere this is the
//! embedding `R^{n+1}` with `|x|^2 = 1/c`; for hyperbolic space it is the
//! upper sheet of the hyperboloid `-x_0^2 + |x_1..x_n|^2 = 1/c` in Minkowski
//! space (time-like axis first). Euclidean and chart models use `R^n` directly.
//!
//! Tangent vectors are given in the same coordinates. A frame is a
//! `coord_dim x dim` matrix whose columns are orthonormal tangent vectors;
//! "frame components" of a vector `u` are `F^T G u`.
//!
//! Curvature convention: `R(X,Y)Z = ∇_X∇_Y Z - ∇_Y∇_X Z - ∇_[X,Y] Z` and
//! `Ric(Y,Z) = tr(X -> R(X,Y)Z)`, so a space of constant curvature `c` has
//! `Ric = (n-1) c g`.

mod chart;
mod curvature;

pub use chart::{ChartBackend, ChartMetric, ConformalConstantCurvature, FnMetric};
pub use curvature::{curvature_pack, CurvaturePack, LocalCurvature};

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Euclidean,
    Sphere,
    Hyperbolic,
    Chart,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelKind::Euclidean => "euclidean",
            ModelKind::Sphere => "sphere",
            ModelKind::Hyperbolic => "hyperbolic",
            ModelKind::Chart => "chart",
        };
        f.write_str(s)
    }
}

/// A supported Riemannian manifold.
#[derive(Clone)]
pub struct ManifoldModel {
    kind: ModelKind,
    dim: usize,
    curvature: f64,
    chart: Option<Arc<ChartBackend>>,
}

impl fmt::Debug for ManifoldModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ManifoldModel")
            .field("kind", &self.kind)
            .field("dim", &self.dim)
            .field("curvature", &self.curvature)
            .finish()
    }
}

impl ManifoldModel {
    pub fn euclidean(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self { kind: ModelKind::Euclidean, dim, curvature: 0.0, chart: None })
    }

    /// Sphere of constant sectional curvature `c > 0` (radius `1/sqrt(c)`).
    pub fn sphere(dim: usize, c: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Config(format!("sphere needs curvature > 0, got {c}")));
        }
        Ok(Self { kind: ModelKind::Sphere, dim, curvature: c, chart: None })
    }

    /// Hyperbolic space of constant sectional curvature `c < 0`.
    pub fn hyperbolic(dim: usize, c: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(c < 0.0 && c.is_finite()) {
            return Err(Error::Config(format!("hyperbolic needs curvature < 0, got {c}")));
        }
        Ok(Self { kind: ModelKind::Hyperbolic, dim, curvature: c, chart: None })
    }

    /// A single coordinate chart with a user metric; all geometry is numeric.
    pub fn chart(metric: Arc<dyn ChartMetric>) -> Result<Self> {
        let dim = metric.dim();
        check_dim(dim)?;
        Ok(Self {
            kind: ModelKind::Chart,
            dim,
            curvature: 0.0,
            chart: Some(Arc::new(ChartBackend::new(metric))),
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// Intrinsic dimension `n`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Sectional curvature for the constant-curvature kinds; 0 otherwise.
    pub fn curvature(&self) -> f64 {
        self.curvature
    }

    /// Length of a point's coordinate vector.
    pub fn coord_dim(&self) -> usize {
        match self.kind {
            ModelKind::Sphere | ModelKind::Hyperbolic => self.dim + 1,
            _ => self.dim,
        }
    }

    pub fn chart_backend(&self) -> Option<&ChartBackend> {
        self.chart.as_deref()
    }

    pub fn is_constant_curvature(&self) -> bool {
        self.kind != ModelKind::Chart
    }

    /// Coordinate inner product of two tangent vectors at `x`.
    pub fn inner(&self, x: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        match self.kind {
            ModelKind::Euclidean | ModelKind::Sphere => a.dot(b),
            ModelKind::Hyperbolic => minkowski(a, b),
            ModelKind::Chart => {
                let g = self.chart.as_ref().expect("chart model").metric_at(x.as_slice());
                (a.transpose() * g * b)[(0, 0)]
            }
        }
    }

    /// Gram matrix of the coordinate inner product at `x`.
    pub fn gram(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let m = self.coord_dim();
        match self.kind {
            ModelKind::Euclidean | ModelKind::Sphere => DMatrix::identity(m, m),
            ModelKind::Hyperbolic => {
                let mut g = DMatrix::identity(m, m);
                g[(0, 0)] = -1.0;
                g
            }
            ModelKind::Chart => self.chart.as_ref().expect("chart model").metric_at(x.as_slice()),
        }
    }

    /// Checks that `x` is a point of the model (within `1e-8` relative).
    pub fn check_point(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.coord_dim() {
            return Err(Error::Geometry(format!(
                "point has {} coordinates, model expects {}",
                x.len(),
                self.coord_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Geometry("non-finite point".into()));
        }
        match self.kind {
            ModelKind::Euclidean => Ok(()),
            ModelKind::Sphere => {
                let target = 1.0 / self.curvature;
                let r2 = x.norm_squared();
                if (r2 - target).abs() > 1e-8 * target {
                    return Err(Error::Geometry(format!(
                        "point off sphere: |x|^2 = {r2}, expected {target}"
                    )));
                }
                Ok(())
            }
            ModelKind::Hyperbolic => {
                let target = 1.0 / self.curvature;
                let q = minkowski(x, x);
                if (q - target).abs() > 1e-8 * target.abs() || x[0] <= 0.0 {
                    return Err(Error::Geometry(format!(
                        "point off upper hyperboloid sheet: <x,x> = {q}, expected {target}"
                    )));
                }
                Ok(())
            }
            ModelKind::Chart => {
                if self.chart.as_ref().expect("chart model").contains(x.as_slice()) {
                    Ok(())
                } else {
                    Err(Error::OutsideChart { point: x.as_slice().to_vec() })
                }
            }
        }
    }

    /// Removes the normal component of `v` at `x` (identity for flat coordinates).
    pub fn project_tangent(&self, x: &DVector<f64>, v: &mut DVector<f64>) {
        match self.kind {
            ModelKind::Sphere => {
                let s = x.dot(v) * self.curvature;
                v.axpy(-s, x, 1.0);
            }
            ModelKind::Hyperbolic => {
                let s = minkowski(x, v) * self.curvature;
                v.axpy(-s, x, 1.0);
            }
            _ => {}
        }
    }

    /// The canonical orthonormal frame at `x`: Gram-Schmidt (in the model
    /// metric) of the tangential projections of the coordinate axes, taken in
    /// order and skipping degenerate ones. For the hyperboloid the time-like
    /// axis is skipped. On the unit 2-sphere at polar angle `θ ∈ (0, π)` from
    /// the last axis and azimuth 0 this gives `(∂_θ, ∂_φ/sin θ)`.
    pub fn initial_frame(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_point(x)?;
        let m = self.coord_dim();
        let n = self.dim;
        let g = self.gram(x);
        let ip = |a: &DVector<f64>, b: &DVector<f64>| (a.transpose() * &g * b)[(0, 0)];
        let mut cols: Vec<DVector<f64>> = Vec::with_capacity(n);
        let start = if self.kind == ModelKind::Hyperbolic { 1 } else { 0 };
        for axis in start..m {
            let mut u = DVector::zeros(m);
            u[axis] = 1.0;
            self.project_tangent(x, &mut u);
            for c in &cols {
                let p = ip(&u, c);
                u.axpy(-p, c, 1.0);
            }
            let nrm2 = ip(&u, &u);
            if nrm2 > 1e-12 {
                u /= nrm2.sqrt();
                cols.push(u);
            }
            if cols.len() == n {
                break;
            }
        }
        if cols.len() < n {
            return Err(Error::Geometry("could not build an orthonormal frame".into()));
        }
        Ok(DMatrix::from_columns(&cols))
    }

    /// `max |F^T G F - I|` at `x`.
    pub fn frame_defect(&self, x: &DVector<f64>, frame: &DMatrix<f64>) -> f64 {
        let g = self.gram(x);
        let gram = frame.transpose() * g * frame;
        let n = gram.nrows();
        (gram - DMatrix::<f64>::identity(n, n)).amax()
    }

    /// Frame components `F^T G u` of a tangent vector.
    pub fn to_frame(&self, x: &DVector<f64>, frame: &DMatrix<f64>, u: &DVector<f64>) -> DVector<f64> {
        match self.kind {
            ModelKind::Euclidean | ModelKind::Sphere => frame.tr_mul(u),
            _ => frame.tr_mul(&(self.gram(x) * u)),
        }
    }

    /// Frame components of the Riemannian Hessian of a function given its
    /// coordinate partials `grad` and coordinate second derivatives `hess` at `x`.
    pub fn hessian_to_frame(
        &self,
        x: &DVector<f64>,
        frame: &DMatrix<f64>,
        grad: &DVector<f64>,
        hess: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        let mut h = frame.transpose() * hess * frame;
        match self.kind {
            ModelKind::Euclidean => {}
            // Second fundamental form of the embedding: geodesics accelerate by -c|u|^2 x.
            ModelKind::Sphere | ModelKind::Hyperbolic => {
                let s = self.curvature * grad.dot(x);
                for i in 0..self.dim {
                    h[(i, i)] -= s;
                }
            }
            ModelKind::Chart => {
                let chart = self.chart.as_ref().expect("chart model");
                let gamma = chart.christoffel(x.as_slice());
                let n = self.dim;
                let mut corr = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        let mut s = 0.0;
                        for k in 0..n {
                            s += gamma.get(k, i, j) * grad[k];
                        }
                        corr[(i, j)] = s;
                    }
                }
                h -= frame.transpose() * corr * frame;
            }
        }
        h
    }

    /// Point reached at unit time along the geodesic from `x` with velocity `v`.
    pub fn exp_map(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        let mut y = x.clone();
        let mut frame = DMatrix::zeros(self.coord_dim(), 0);
        self.advance(&mut y, &mut frame, v)?;
        Ok(y)
    }

    /// Parallel transport of `frame` along the geodesic `t -> exp_x(t v)`,
    /// returning the end point and the transported frame.
    pub fn parallel_transport_step(
        &self,
        x: &DVector<f64>,
        v: &DVector<f64>,
        frame: &DMatrix<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let mut y = x.clone();
        let mut f = frame.clone();
        self.advance(&mut y, &mut f, v)?;
        Ok((y, f))
    }

    /// In-place geodesic step of `x` with velocity `v`, transporting `frame`.
    pub fn advance(&self, x: &mut DVector<f64>, frame: &mut DMatrix<f64>, v: &DVector<f64>) -> Result<()> {
        match self.kind {
            ModelKind::Euclidean => {
                *x += v;
                Ok(())
            }
            ModelKind::Sphere => {
                sphere_step(self.curvature, x, frame, v);
                Ok(())
            }
            ModelKind::Hyperbolic => {
                hyperbolic_step(self.curvature, x, frame, v);
                Ok(())
            }
            ModelKind::Chart => self.chart.as_ref().expect("chart model").geodesic_step(x, frame, v),
        }
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        Err(Error::Config("dimension must be at least 1".into()))
    } else {
        Ok(())
    }
}

pub(crate) fn minkowski(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let mut s = -a[0] * b[0];
    for i in 1..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn sphere_step(c: f64, x: &mut DVector<f64>, frame: &mut DMatrix<f64>, v: &DVector<f64>) {
    let speed = v.norm();
    if speed == 0.0 {
        return;
    }
    let sc = c.sqrt();
    let (s, co) = (sc * speed).sin_cos();
    let inv = 1.0 / speed;
    let m = x.len();
    let n = frame.ncols();
    let x = x.as_mut_slice();
    let v = v.as_slice();
    let f = frame.as_mut_slice();
    for col in f.chunks_exact_mut(m) {
        let a = dot(col, v) * inv;
        if a != 0.0 {
            for i in 0..m {
                col[i] += a * ((co - 1.0) * v[i] * inv - s * sc * x[i]);
            }
        }
    }
    for i in 0..m {
        x[i] = co * x[i] + s / sc * v[i] * inv;
    }
    // exact retraction back onto the sphere and its tangent bundle
    let r = 1.0 / (dot(x, x).sqrt() * sc);
    x.iter_mut().for_each(|xi| *xi *= r);
    for col in f.chunks_exact_mut(m) {
        let p = dot(col, x) * c;
        for i in 0..m {
            col[i] -= p * x[i];
        }
    }
    gram_schmidt_slices(f, m, n, dot);
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn minkowski_slices(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) - 2.0 * a[0] * b[0]
}

/// Gram-Schmidt on the `n` columns (length `m`) of a column-major buffer.
fn gram_schmidt_slices(f: &mut [f64], m: usize, n: usize, ip: fn(&[f64], &[f64]) -> f64) {
    for j in 0..n {
        let (done, rest) = f.split_at_mut(j * m);
        let col = &mut rest[..m];
        for k in 0..j {
            let prev = &done[k * m..(k + 1) * m];
            let p = ip(col, prev);
            for i in 0..m {
                col[i] -= p * prev[i];
            }
        }
        let nrm = 1.0 / ip(col, col).sqrt();
        col.iter_mut().for_each(|c| *c *= nrm);
    }
}

fn hyperbolic_step(c: f64, x: &mut DVector<f64>, frame: &mut DMatrix<f64>, v: &DVector<f64>) {
    let q = minkowski(v, v);
    if q <= 0.0 {
        return;
    }
    let speed = q.sqrt();
    let a = (-c).sqrt();
    let theta = a * speed;
    let (sh, ch) = (theta.sinh(), theta.cosh());
    let inv = 1.0 / speed;
    let m = x.len();
    for mut col in frame.column_iter_mut() {
        let mut p = -col[0] * v[0];
        for i in 1..m {
            p += col[i] * v[i];
        }
        let p = p * inv;
        if p != 0.0 {
            for i in 0..m {
                col[i] += p * ((ch - 1.0) * v[i] * inv + a * sh * x[i]);
            }
        }
    }
    for i in 0..m {
        x[i] = ch * x[i] + sh / a * v[i] * inv;
    }
    let q = minkowski(x, x);
    let scale = 1.0 / (a * (-q).sqrt());
    *x *= scale;
    for mut col in frame.column_iter_mut() {
        let mut p = -col[0] * x[0];
        for i in 1..m {
            p += col[i] * x[i];
        }
        // <x,x> = 1/c, so the projection coefficient is p c
        let s = p * c;
        col.axpy(-s, x, 1.0);
    }
    let n = frame.ncols();
    gram_schmidt_slices(frame.as_mut_slice(), m, n, minkowski_slices);
}
