//! Curvature data in frame components, as consumed by the path simulator.

use nalgebra::{DMatrix, DVector};

use super::{ManifoldModel, ModelKind};
use crate::error::{Error, Result};
use crate::fields::Drift;

/// Curvature evaluators for a model and drift.
///
/// `ricci_z` is the Bakry-Émery endomorphism `Ric^♯ - 2∇Z`. The second-order
/// pieces `d*R` and `∇Ric_Z^♯` are only available when the pack is built with
/// `second_order = true`.
#[derive(Clone, Debug)]
pub struct CurvaturePack {
    model: ManifoldModel,
    drift: Drift,
    second_order: bool,
}

/// Everything the path step needs at one point, in frame components.
#[derive(Clone, Debug)]
pub struct LocalCurvature {
    n: usize,
    /// `ricci_z[(i, j)] = <e_i, Ric_Z^♯ e_j>`.
    pub ricci_z: DMatrix<f64>,
    /// Sectional curvature when `R` has the constant-curvature closed form.
    constant: Option<f64>,
    /// `riemann[((l n + i) n + j) n + k] = <e_l, R(e_i, e_j) e_k>`; unused when `constant` is set.
    riemann: Vec<f64>,
    /// `<e_l, (d*R + ∇Ric_Z^♯)(e_i, e_j)>` at `[(l n + i) n + j]`; `None` when it vanishes identically.
    second: Option<Vec<f64>>,
}

/// Builds the curvature evaluators. With `second_order`, fails if `∇Ric_Z^♯`
/// cannot be supplied for this backend (embedded sphere or hyperboloid with a
/// non-zero drift).
pub fn curvature_pack(model: &ManifoldModel, drift: &Drift, second_order: bool) -> Result<CurvaturePack> {
    if second_order
        && matches!(model.kind(), ModelKind::Sphere | ModelKind::Hyperbolic)
        && !drift.is_zero()
    {
        return Err(Error::CurvatureUnavailable(format!(
            "∇Ric_Z is not available on the {} model with a non-zero drift",
            model.kind()
        )));
    }
    Ok(CurvaturePack { model: model.clone(), drift: drift.clone(), second_order })
}

impl LocalCurvature {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            ricci_z: DMatrix::zeros(n, n),
            constant: Some(0.0),
            riemann: Vec::new(),
            second: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// True when `R`, `d*R` and `∇Ric_Z` all vanish at this point.
    pub fn is_flat_second_order(&self) -> bool {
        self.constant == Some(0.0) && self.second.is_none()
    }

    /// `out = R(a, b) c` in frame components.
    #[inline]
    pub fn riemann_apply(&self, a: &[f64], b: &[f64], c: &[f64], out: &mut [f64]) {
        let n = self.n;
        match self.constant {
            Some(k) => {
                if k == 0.0 {
                    out.iter_mut().for_each(|o| *o = 0.0);
                    return;
                }
                let bc: f64 = b.iter().zip(c).map(|(x, y)| x * y).sum();
                let ac: f64 = a.iter().zip(c).map(|(x, y)| x * y).sum();
                for l in 0..n {
                    out[l] = k * (bc * a[l] - ac * b[l]);
                }
            }
            None => {
                for l in 0..n {
                    let mut s = 0.0;
                    for i in 0..n {
                        if a[i] == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            for k in 0..n {
                                s += self.riemann[((l * n + i) * n + j) * n + k] * a[i] * b[j] * c[k];
                            }
                        }
                    }
                    out[l] = s;
                }
            }
        }
    }

    /// `out = (d*R + ∇Ric_Z^♯)(a, b)`; returns false (and zeroes `out`) when identically zero.
    #[inline]
    pub fn second_order_apply(&self, a: &[f64], b: &[f64], out: &mut [f64]) -> bool {
        let n = self.n;
        match &self.second {
            None => {
                out.iter_mut().for_each(|o| *o = 0.0);
                false
            }
            Some(s) => {
                for l in 0..n {
                    let mut acc = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            acc += s[(l * n + i) * n + j] * a[i] * b[j];
                        }
                    }
                    out[l] = acc;
                }
                true
            }
        }
    }
}

impl CurvaturePack {
    pub fn model(&self) -> &ManifoldModel {
        &self.model
    }

    pub fn has_second_order(&self) -> bool {
        self.second_order
    }

    /// Fills `out` with the curvature at `x` in the frame `frame`.
    pub fn evaluate(&self, x: &DVector<f64>, frame: &DMatrix<f64>, out: &mut LocalCurvature) -> Result<()> {
        let n = self.model.dim();
        let m = self.model.coord_dim();
        match self.model.kind() {
            ModelKind::Euclidean | ModelKind::Sphere | ModelKind::Hyperbolic => {
                let c = self.model.curvature();
                out.constant = Some(c);
                out.ricci_z.fill(0.0);
                out.ricci_z.fill_diagonal(c * (n as f64 - 1.0));
                if !self.drift.is_zero() {
                    let mut dz = DMatrix::zeros(m, m);
                    self.drift.jacobian(x.as_slice(), &mut dz);
                    if self.model.kind() == ModelKind::Hyperbolic {
                        dz.row_mut(0).neg_mut();
                    }
                    let grad_z = frame.transpose() * dz * frame;
                    out.ricci_z -= &grad_z * 2.0;
                }
                out.second = None;
                if self.second_order && !self.drift.is_affine() {
                    // only reachable on the Euclidean model: ∇Ric^♯ = 0, ∇Ric_Z^♯ = -2 D²Z
                    let mut s = vec![0.0; n * n * n];
                    let mut buf = vec![0.0; m];
                    for i in 0..n {
                        for j in 0..n {
                            let a: Vec<f64> = frame.column(i).iter().copied().collect();
                            let b: Vec<f64> = frame.column(j).iter().copied().collect();
                            self.drift.second_derivative(x.as_slice(), &a, &b, &mut buf);
                            let comp = frame.tr_mul(&DVector::from_column_slice(&buf));
                            for l in 0..n {
                                s[(l * n + i) * n + j] = -2.0 * comp[l];
                            }
                        }
                    }
                    out.second = Some(s);
                }
                Ok(())
            }
            ModelKind::Chart => self.evaluate_chart(x, frame, out),
        }
    }

    fn evaluate_chart(&self, x: &DVector<f64>, frame: &DMatrix<f64>, out: &mut LocalCurvature) -> Result<()> {
        let chart = self.model.chart_backend().expect("chart model");
        let n = self.model.dim();
        let xs = x.as_slice();
        let g = chart.metric_at(xs);
        let ft_g = frame.transpose() * &g;

        let ric_z_coord = |y: &[f64]| -> DMatrix<f64> {
            let mut t = chart.ricci_sharp(y);
            if !self.drift.is_zero() {
                let mut z = vec![0.0; n];
                self.drift.value(y, &mut z);
                let mut dz = DMatrix::zeros(n, n);
                self.drift.jacobian(y, &mut dz);
                let cov = chart.covariant_jacobian(y, &DVector::from_vec(z), &dz);
                t -= &cov * 2.0;
            }
            t
        };
        out.ricci_z = &ft_g * ric_z_coord(xs) * frame;

        let r = chart.riemann(xs);
        let mut rf = vec![0.0; n * n * n * n];
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let mut s = 0.0;
                        for a in 0..n {
                            for b in 0..n {
                                let fb = frame[(b, i)];
                                if fb == 0.0 {
                                    continue;
                                }
                                for c in 0..n {
                                    for d in 0..n {
                                        s += ft_g[(l, a)] * r.get(a, b, c, d) * fb * frame[(c, j)] * frame[(d, k)];
                                    }
                                }
                            }
                        }
                        rf[((l * n + i) * n + j) * n + k] = s;
                    }
                }
            }
        }
        out.constant = None;
        out.riemann = rf;
        out.second = None;

        if self.second_order {
            let ginv = g.clone().try_inverse().expect("chart metric must be invertible");
            let nabla_r = chart.covariant_riemann_derivative(xs);
            let nabla_t = chart.covariant_derivative_11(xs, ric_z_coord);
            // d*R(v1) v2 = Σ_a (∇_{e_a} R)(e_a, v1) v2, coordinate components D^l_{jk}
            let mut dstar = vec![0.0; n * n * n];
            for l in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let mut s = 0.0;
                        for m in 0..n {
                            for a in 0..n {
                                s += ginv[(m, a)] * nabla_r[m].get(l, a, j, k);
                            }
                        }
                        dstar[(l * n + j) * n + k] = s;
                    }
                }
            }
            let mut s = vec![0.0; n * n * n];
            for i in 0..n {
                for j in 0..n {
                    // coordinate vector (d*R(F_i) F_j + (∇_{F_i} T)(F_j))
                    let mut v = DVector::zeros(n);
                    for l in 0..n {
                        let mut acc = 0.0;
                        for p in 0..n {
                            for q in 0..n {
                                acc += dstar[(l * n + p) * n + q] * frame[(p, i)] * frame[(q, j)];
                                acc += frame[(p, i)] * nabla_t[p][(l, q)] * frame[(q, j)];
                            }
                        }
                        v[l] = acc;
                    }
                    let comp = &ft_g * v;
                    for l in 0..n {
                        s[(l * n + i) * n + j] = comp[l];
                    }
                }
            }
            out.second = Some(s);
        }
        Ok(())
    }

    /// Frame components of `Ric_Z^♯` at `x`.
    pub fn ricci_z(&self, x: &DVector<f64>, frame: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut lc = LocalCurvature::new(self.model.dim());
        self.evaluate(x, frame, &mut lc)?;
        Ok(lc.ricci_z)
    }

    /// `R(u, v) w` in frame components.
    pub fn riemann(&self, x: &DVector<f64>, frame: &DMatrix<f64>, u: &[f64], v: &[f64], w: &[f64]) -> Result<DVector<f64>> {
        let mut lc = LocalCurvature::new(self.model.dim());
        self.evaluate(x, frame, &mut lc)?;
        let mut out = DVector::zeros(self.model.dim());
        lc.riemann_apply(u, v, w, out.as_mut_slice());
        Ok(out)
    }

    /// `d*R(v1) v2` in frame components, with `d*R` normalised so that
    /// `<d*R(v1)v2, v3> = <(∇_{v3}Ric^♯)v1, v2> - <(∇_{v2}Ric^♯)v3, v1>`.
    pub fn dstar_r(&self, x: &DVector<f64>, frame: &DMatrix<f64>, v1: &[f64], v2: &[f64]) -> Result<DVector<f64>> {
        let n = self.model.dim();
        if self.model.is_constant_curvature() {
            return Ok(DVector::zeros(n));
        }
        let chart = self.model.chart_backend().expect("chart model");
        let xs = x.as_slice();
        let g = chart.metric_at(xs);
        let ginv = g.clone().try_inverse().expect("chart metric must be invertible");
        let nabla_r = chart.covariant_riemann_derivative(xs);
        let a = frame * DVector::from_column_slice(v1);
        let b = frame * DVector::from_column_slice(v2);
        let mut out = DVector::zeros(n);
        for l in 0..n {
            let mut s = 0.0;
            for m in 0..n {
                for p in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            s += ginv[(m, p)] * nabla_r[m].get(l, p, j, k) * a[j] * b[k];
                        }
                    }
                }
            }
            out[l] = s;
        }
        Ok(frame.transpose() * g * out)
    }

    /// `(∇_a Ric_Z^♯)(b)` in frame components (differentiating direction first).
    pub fn nabla_ricci_z(&self, x: &DVector<f64>, frame: &DMatrix<f64>, a: &[f64], b: &[f64]) -> Result<DVector<f64>> {
        let n = self.model.dim();
        let m = self.model.coord_dim();
        match self.model.kind() {
            ModelKind::Chart => {
                let chart = self.model.chart_backend().expect("chart model");
                let xs = x.as_slice();
                let g = chart.metric_at(xs);
                let drift = self.drift.clone();
                let nabla_t = chart.covariant_derivative_11(xs, |y| {
                    let mut t = chart.ricci_sharp(y);
                    if !drift.is_zero() {
                        let mut z = vec![0.0; n];
                        drift.value(y, &mut z);
                        let mut dz = DMatrix::zeros(n, n);
                        drift.jacobian(y, &mut dz);
                        t -= chart.covariant_jacobian(y, &DVector::from_vec(z), &dz) * 2.0;
                    }
                    t
                });
                let av = frame * DVector::from_column_slice(a);
                let bv = frame * DVector::from_column_slice(b);
                let mut out = DVector::zeros(n);
                for i in 0..n {
                    out += &nabla_t[i] * &bv * av[i];
                }
                Ok(frame.transpose() * g * out)
            }
            _ => {
                if self.drift.is_zero() || self.drift.is_affine() {
                    return Ok(DVector::zeros(n));
                }
                if self.model.kind() != ModelKind::Euclidean {
                    return Err(Error::CurvatureUnavailable("∇∇Z on an embedded model".into()));
                }
                let av: Vec<f64> = (frame * DVector::from_column_slice(a)).iter().copied().collect();
                let bv: Vec<f64> = (frame * DVector::from_column_slice(b)).iter().copied().collect();
                let mut buf = vec![0.0; m];
                self.drift.second_derivative(x.as_slice(), &av, &bv, &mut buf);
                Ok(frame.tr_mul(&DVector::from_vec(buf)) * -2.0)
            }
        }
    }
}
