//! Geodesic random walk for the diffusion with generator `½Δ + Z`, carrying the
//! parallel frame, the damped transport `W`, its second-order companion `W'`,
//! the Feynman-Kac weight and the stochastic integrals used by the estimators.
//!
//! All integrals use left-point (Itô) evaluation on a uniform grid of `[0, T]`.
//! `W` and `W'` are stored in parallel-frame components, `Ŵ = //⁻¹ W` and
//! `Ŵ' = //⁻¹ W'(·, w)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::FieldSpec;
use crate::geometry::{curvature_pack, CurvaturePack, LocalCurvature, ManifoldModel, ModelKind};
use crate::rng::PathNormals;
use crate::schedules::{Schedule, ScheduleRole};

/// Which estimators a run feeds; controls which accumulators are advanced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorSet {
    pub semigroup: bool,
    pub gradient: bool,
    pub generator: bool,
    pub hessian: bool,
}

impl EstimatorSet {
    pub fn all() -> Self {
        Self { semigroup: true, gradient: true, generator: true, hessian: true }
    }

    pub fn only(kind: crate::estimators::EstimatorKind) -> Self {
        use crate::estimators::EstimatorKind as K;
        let mut s = Self::default();
        match kind {
            K::Semigroup => s.semigroup = true,
            K::Gradient | K::MartingaleDrift => s.gradient = true,
            K::Generator => s.generator = true,
            K::Hessian => s.hessian = true,
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSet {
    pub gradient_k: Schedule,
    pub second_order_k: Schedule,
    pub l: Schedule,
}

impl ScheduleSet {
    pub fn defaults(horizon: f64) -> Self {
        Self {
            gradient_k: Schedule::default_gradient_k(horizon),
            second_order_k: Schedule::default_second_order_k(horizon),
            l: Schedule::default_second_order_l(horizon),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    /// Paths whose coordinate norm exceeds this are aborted as exploded.
    pub position_bound: f64,
    /// Bound on the 1-norm condition number of `Ŵ` (generator estimator only).
    pub condition_bound: f64,
    /// Declared lower bound of `V`, asserted along every path; defaults to the
    /// potential's own bound.
    pub v_min: Option<f64>,
}

impl Default for Limits {
    fn default() -> Self {
        Self { position_bound: 1e6, condition_bound: 1e8, v_min: None }
    }
}

/// Everything needed to simulate one batch of paths.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub model: ManifoldModel,
    pub fields: FieldSpec,
    pub x0: DVector<f64>,
    /// Unit tangent directions at `x0` in components of the initial frame.
    pub v: DVector<f64>,
    pub w: DVector<f64>,
    pub schedules: ScheduleSet,
    pub estimators: EstimatorSet,
    pub limits: Limits,
    /// Initial frame; defaults to [`ManifoldModel::initial_frame`].
    pub frame0: Option<DMatrix<f64>>,
}

impl SimConfig {
    /// A configuration with default schedules, `v = w = e_1`, and all estimators enabled.
    pub fn new(model: ManifoldModel, fields: FieldSpec, x0: DVector<f64>, horizon: f64, dt: f64) -> Self {
        let n = model.dim();
        let mut e1 = DVector::zeros(n);
        e1[0] = 1.0;
        Self {
            horizon,
            dt,
            n_paths: 1000,
            seed: 0,
            model,
            fields,
            x0,
            v: e1.clone(),
            w: e1,
            schedules: ScheduleSet::defaults(horizon),
            estimators: EstimatorSet::all(),
            limits: Limits::default(),
            frame0: None,
        }
    }

    pub fn with_paths(mut self, n_paths: usize) -> Self {
        self.n_paths = n_paths;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_directions(mut self, v: &[f64], w: &[f64]) -> Self {
        self.v = DVector::from_column_slice(v);
        self.w = DVector::from_column_slice(w);
        self
    }

    pub fn with_estimators(mut self, e: EstimatorSet) -> Self {
        self.estimators = e;
        self
    }

    pub fn with_schedules(mut self, s: ScheduleSet) -> Self {
        self.schedules = s;
        self
    }

    /// Number of grid steps `N` with `N dt = T`.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round().max(1.0) as usize
    }

    /// The grid spacing actually used, `T / N`.
    pub fn step_size(&self) -> f64 {
        self.horizon / self.steps() as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.dt > 0.0 && self.dt <= self.horizon) {
            return Err(Error::Config(format!("dt must lie in (0, T], got {}", self.dt)));
        }
        let ratio = self.horizon / self.dt;
        if (ratio - ratio.round()).abs() > 1e-6 * ratio.max(1.0) {
            return Err(Error::Config(format!("dt = {} does not divide T = {}", self.dt, self.horizon)));
        }
        if self.n_paths == 0 {
            return Err(Error::Config("n_paths must be at least 1".into()));
        }
        self.model.check_point(&self.x0)?;
        let n = self.model.dim();
        for (name, d) in [("v", &self.v), ("w", &self.w)] {
            if d.len() != n {
                return Err(Error::Config(format!("{name} has {} components, dimension is {n}", d.len())));
            }
            if (d.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("{name} must be a unit vector")));
            }
        }
        self.schedules.gradient_k.check_role(self.horizon)?;
        self.schedules.second_order_k.check_role(self.horizon)?;
        self.schedules.l.check_role(self.horizon)?;
        for s in [&self.schedules.gradient_k, &self.schedules.second_order_k, &self.schedules.l] {
            if (s.horizon() - self.horizon).abs() > 1e-12 * self.horizon.max(1.0) {
                return Err(Error::Config("schedule horizon differs from T".into()));
            }
        }
        let gk = self.schedules.gradient_k.role();
        if self.estimators.gradient && gk != ScheduleRole::GradientK && gk != ScheduleRole::Free {
            return Err(Error::Config("gradient estimator needs a gradient-role k".into()));
        }
        if self.estimators.generator || self.estimators.hessian {
            if self.schedules.second_order_k.role() != ScheduleRole::SecondOrderK
                || self.schedules.l.role() != ScheduleRole::SecondOrderL
            {
                return Err(Error::Config("generator/Hessian estimators need second-order k and l".into()));
            }
        }
        if let Some(f) = &self.frame0 {
            if self.model.frame_defect(&self.x0, f) > 1e-9 {
                return Err(Error::Config("initial frame is not orthonormal".into()));
            }
        }
        self.fields.validate(&self.model, &self.x0, self.seed)
    }

    pub fn initial_frame(&self) -> Result<DMatrix<f64>> {
        match &self.frame0 {
            Some(f) => Ok(f.clone()),
            None => self.model.initial_frame(&self.x0),
        }
    }
}

/// State of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub step: usize,
    pub t: f64,
    pub x: DVector<f64>,
    /// Columns realise `//_t e_i`.
    pub frame: DMatrix<f64>,
    /// `Ŵ = //⁻¹ W`.
    pub w_hat: DMatrix<f64>,
    /// `Ŵ⁻¹`, carried only when the generator estimator is enabled.
    pub w_hat_inv: DMatrix<f64>,
    /// `Ŵ' = //⁻¹ W'(·, w)`.
    pub w_hat_prime: DMatrix<f64>,
    /// `-∫_0^t V_{T-s}(x_s) ds`.
    pub log_weight: f64,
    /// `∫⟨Ŵ k̇ v, dB⟩ + dV(Ŵ k v) ds` with the gradient `k`.
    pub acc_grad: f64,
    /// `∫ l̇ Ŵᵀ dB`.
    pub acc_gen_a: DVector<f64>,
    /// `∫ k̇ Ŵ⁻¹ dB`.
    pub acc_gen_b: DVector<f64>,
    /// `∫ l ⟨Ŵᵀ dV, B_s⟩ ds` where `B_s` is the running value of `acc_gen_b`.
    pub acc_gen_c: f64,
    /// `∫ k (dV(//dB) + LV ds)` with the second-order `k`.
    pub acc_gen_v: f64,
    /// `∫ k̇ ⟨Z, //dB⟩`.
    pub acc_gen_z: f64,
    /// `∫ ⟨Ŵ'(k̇ v), dB⟩`.
    pub acc_hess_wp: f64,
    /// `∫ [∇dV(Ŵ k v, Ŵ w) + dV(Ŵ'(k v))] ds`.
    pub acc_hess_v: f64,
    /// `∫ ⟨Ŵ l̇ w, dB⟩ + dV(Ŵ l w) ds`.
    pub acc_hess_l: f64,
    /// `∫ ⟨Ŵ k̇ v, dB⟩ + dV(Ŵ k v) ds` with the second-order `k`.
    pub acc_hess_k: f64,
}

impl Trajectory {
    pub fn start(x0: DVector<f64>, frame: DMatrix<f64>) -> Self {
        let n = frame.ncols();
        Self {
            step: 0,
            t: 0.0,
            x: x0,
            frame,
            w_hat: DMatrix::identity(n, n),
            w_hat_inv: DMatrix::identity(n, n),
            w_hat_prime: DMatrix::zeros(n, n),
            log_weight: 0.0,
            acc_grad: 0.0,
            acc_gen_a: DVector::zeros(n),
            acc_gen_b: DVector::zeros(n),
            acc_gen_c: 0.0,
            acc_gen_v: 0.0,
            acc_gen_z: 0.0,
            acc_hess_wp: 0.0,
            acc_hess_v: 0.0,
            acc_hess_l: 0.0,
            acc_hess_k: 0.0,
        }
    }

    /// Feynman-Kac weight `𝕍_t`.
    pub fn fk_weight(&self) -> f64 {
        self.log_weight.exp()
    }

    fn is_finite(&self) -> Option<&'static str> {
        if !self.x.iter().all(|v| v.is_finite()) {
            return Some("position");
        }
        if !self.frame.iter().all(|v| v.is_finite()) {
            return Some("frame");
        }
        if !self.w_hat.iter().all(|v| v.is_finite()) {
            return Some("damped transport");
        }
        if !self.w_hat_prime.iter().all(|v| v.is_finite()) {
            return Some("second-order transport");
        }
        let scalars = [
            self.log_weight,
            self.acc_grad,
            self.acc_gen_z,
            self.acc_gen_c,
            self.acc_gen_v,
            self.acc_hess_wp,
            self.acc_hess_v,
            self.acc_hess_l,
            self.acc_hess_k,
        ];
        if !scalars.iter().all(|v| v.is_finite())
            || !self.acc_gen_a.iter().all(|v| v.is_finite())
            || !self.acc_gen_b.iter().all(|v| v.is_finite())
        {
            return Some("accumulator");
        }
        None
    }
}

/// Precomputed tables and scratch space shared by all steps of one path.
pub struct StepContext<'a> {
    cfg: &'a SimConfig,
    pack: CurvaturePack,
    h: f64,
    sched_gk: Vec<(f64, f64)>,
    sched_k: Vec<(f64, f64)>,
    sched_l: Vec<(f64, f64)>,
    curv: LocalCurvature,
    curv_is_constant: bool,
    /// Midpoint step matrix and its inverse, fixed when `Ric_Z` is constant in the frame.
    const_step: Option<(Vec<f64>, Vec<f64>)>,
    v_min: f64,
    ws: Scratch,
}

struct Scratch {
    n: usize,
    m: usize,
    dv: Vec<f64>,
    coord_grad: Vec<f64>,
    coord_hess: DMatrix<f64>,
    zc: Vec<f64>,
    zf: Vec<f64>,
    wv: Vec<f64>,
    ww: Vec<f64>,
    wpv: Vec<f64>,
    tmp: Vec<f64>,
    tmp2: Vec<f64>,
    col: Vec<f64>,
    inc: DVector<f64>,
    mat: Vec<f64>,
    mat2: Vec<f64>,
    ric_prev: Vec<f64>,
    step: Vec<f64>,
    step_inv: Vec<f64>,
    prod: Vec<f64>,
    aux: Vec<f64>,
}

impl Scratch {
    fn new(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            dv: vec![0.0; n],
            coord_grad: vec![0.0; m],
            coord_hess: DMatrix::zeros(m, m),
            zc: vec![0.0; m],
            zf: vec![0.0; n],
            wv: vec![0.0; n],
            ww: vec![0.0; n],
            wpv: vec![0.0; n],
            tmp: vec![0.0; n],
            tmp2: vec![0.0; n],
            col: vec![0.0; n],
            inc: DVector::zeros(m),
            mat: vec![0.0; n * n],
            mat2: vec![0.0; n * n],
            ric_prev: vec![0.0; n * n],
            step: vec![0.0; n * n],
            step_inv: vec![0.0; n * n],
            prod: vec![0.0; n * n],
            aux: vec![0.0; n * n],
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out = M a` for a column-major `n x n` matrix.
#[inline]
fn matvec(m: &[f64], n: usize, a: &[f64], out: &mut [f64]) {
    for i in 0..n {
        out[i] = 0.0;
    }
    for j in 0..n {
        let aj = a[j];
        if aj == 0.0 {
            continue;
        }
        let col = &m[j * n..(j + 1) * n];
        for i in 0..n {
            out[i] += col[i] * aj;
        }
    }
}

/// `out = Mᵀ a` for a column-major `n x n` matrix.
#[inline]
fn matvec_t(m: &[f64], n: usize, a: &[f64], out: &mut [f64]) {
    for j in 0..n {
        out[j] = dot(&m[j * n..(j + 1) * n], a);
    }
}

/// In-place inverse of a column-major `n x n` matrix by Gauss-Jordan with
/// partial pivoting; returns false if singular.
fn invert_in_place(a: &mut [f64], inv: &mut [f64], n: usize) -> bool {
    for i in 0..n * n {
        inv[i] = 0.0;
    }
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    let idx = |r: usize, c: usize| c * n + r;
    for c in 0..n {
        let mut p = c;
        let mut best = a[idx(c, c)].abs();
        for r in c + 1..n {
            if a[idx(r, c)].abs() > best {
                best = a[idx(r, c)].abs();
                p = r;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return false;
        }
        if p != c {
            for k in 0..n {
                a.swap(idx(p, k), idx(c, k));
                inv.swap(idx(p, k), idx(c, k));
            }
        }
        let d = 1.0 / a[idx(c, c)];
        for k in 0..n {
            a[idx(c, k)] *= d;
            inv[idx(c, k)] *= d;
        }
        for r in 0..n {
            if r != c {
                let f = a[idx(r, c)];
                if f != 0.0 {
                    for k in 0..n {
                        a[idx(r, k)] -= f * a[idx(c, k)];
                        inv[idx(r, k)] -= f * inv[idx(c, k)];
                    }
                }
            }
        }
    }
    true
}

/// `out = A B` for column-major `n x n` matrices.
fn matmul(a: &[f64], b: &[f64], n: usize, out: &mut [f64]) {
    for j in 0..n {
        matvec(a, n, &b[j * n..(j + 1) * n], &mut out[j * n..(j + 1) * n]);
    }
}

/// Implicit midpoint step for `dŴ = -½ A Ŵ dt`: `step = (I + A h/4)⁻¹ (I - A h/4)`
/// and, if requested, `step_inv = (I - A h/4)⁻¹ (I + A h/4)`.
fn midpoint_step(ric_old: &[f64], ric_new: &[f64], h: f64, n: usize, inverse: bool, ws: &mut Scratch) -> bool {
    let q = 0.25 * h;
    let (plus, minus) = (&mut ws.mat, &mut ws.mat2);
    for idx in 0..n * n {
        let a = 0.5 * (ric_old[idx] + ric_new[idx]);
        let id = if idx % (n + 1) == 0 { 1.0 } else { 0.0 };
        plus[idx] = id + q * a;
        minus[idx] = id - q * a;
    }
    ws.aux.copy_from_slice(plus);
    if !invert_in_place(plus, &mut ws.prod, n) {
        return false;
    }
    matmul(&ws.prod, minus, n, &mut ws.step);
    if inverse {
        if !invert_in_place(minus, &mut ws.prod, n) {
            return false;
        }
        matmul(&ws.prod, &ws.aux, n, &mut ws.step_inv);
    }
    true
}

fn norm1(a: &[f64], n: usize) -> f64 {
    (0..n)
        .map(|j| a[j * n..(j + 1) * n].iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

impl<'a> StepContext<'a> {
    pub fn new(cfg: &'a SimConfig) -> Result<Self> {
        let n = cfg.model.dim();
        let m = cfg.model.coord_dim();
        let pack = curvature_pack(&cfg.model, &cfg.fields.drift, cfg.estimators.hessian)?;
        let steps = cfg.steps();
        let h = cfg.step_size();
        let curv_is_constant = cfg.model.is_constant_curvature() && cfg.fields.drift.is_affine();
        Ok(Self {
            cfg,
            pack,
            h,
            sched_gk: cfg.schedules.gradient_k.tabulate(h, steps),
            sched_k: cfg.schedules.second_order_k.tabulate(h, steps),
            sched_l: cfg.schedules.l.tabulate(h, steps),
            curv: LocalCurvature::new(n),
            curv_is_constant,
            const_step: None,
            v_min: cfg.limits.v_min.unwrap_or_else(|| cfg.fields.potential.lower_bound()),
            ws: Scratch::new(n, m),
        })
    }

    pub fn config(&self) -> &SimConfig {
        self.cfg
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    /// Gradient-role `(k, k̇)` at grid index `i`.
    pub fn gradient_k(&self, i: usize) -> (f64, f64) {
        self.sched_gk[i]
    }

    /// Fresh trajectory at `x0` with the curvature cache primed.
    pub fn start(&mut self) -> Result<Trajectory> {
        let frame = self.cfg.initial_frame()?;
        let traj = Trajectory::start(self.cfg.x0.clone(), frame);
        self.pack.evaluate(&traj.x, &traj.frame, &mut self.curv)?;
        if self.curv_is_constant && self.const_step.is_none() {
            let n = self.ws.n;
            let ric = self.curv.ricci_z.as_slice().to_vec();
            if !midpoint_step(&ric, &ric, self.h, n, true, &mut self.ws) {
                return Err(Error::NonFinite { step: 0, what: "damped transport" });
            }
            self.const_step = Some((self.ws.step.clone(), self.ws.step_inv.clone()));
        }
        Ok(traj)
    }

    /// Frame components of `dV_{T-t}` at the trajectory's current point.
    pub fn potential_differential(&self, traj: &Trajectory) -> DVector<f64> {
        let m = self.cfg.model.coord_dim();
        let mut g = vec![0.0; m];
        self.cfg.fields.potential.gradient(self.cfg.horizon - traj.t, traj.x.as_slice(), &mut g);
        traj.frame.tr_mul(&DVector::from_vec(g))
    }

    /// Advances `traj` by one grid step with Brownian increment `db` (frame components).
    pub fn advance(&mut self, traj: &mut Trajectory, db: &[f64]) -> Result<()> {
        let cfg = self.cfg;
        let n = self.ws.n;
        let m = self.ws.m;
        let h = self.h;
        let i = traj.step;
        if i >= self.sched_k.len() {
            return Err(Error::Config(format!("step {i} beyond the horizon")));
        }
        let est = cfg.estimators;
        let need_w = est.gradient || est.generator || est.hessian;
        let time_arg = cfg.horizon - traj.t;
        let xs = traj.x.as_slice();
        let ws = &mut self.ws;

        // potential at the left point, time argument T - t
        let pot = &cfg.fields.potential;
        let v_now = pot.value(time_arg, xs);
        if v_now < self.v_min {
            return Err(Error::PotentialBelowBound { value: v_now, v_min: self.v_min });
        }
        let has_dv = need_w && !pot.is_spatially_constant();
        if has_dv {
            pot.gradient(time_arg, xs, &mut ws.coord_grad);
            for a in 0..n {
                ws.dv[a] = (0..m).map(|r| traj.frame[(r, a)] * ws.coord_grad[r]).sum();
            }
        }

        let w_hat = traj.w_hat.as_slice();
        if need_w {
            matvec(w_hat, n, cfg.v.as_slice(), &mut ws.wv);
            matvec(w_hat, n, cfg.w.as_slice(), &mut ws.ww);
        }

        if est.gradient {
            let (k, kd) = self.sched_gk[i];
            let mut inc = kd * dot(&ws.wv, db);
            if has_dv {
                inc += k * dot(&ws.dv, &ws.wv) * h;
            }
            traj.acc_grad += inc;
        }

        if est.generator || est.hessian {
            let (k, kd) = self.sched_k[i];
            let (l, ld) = self.sched_l[i];
            let mut inc_k = kd * dot(&ws.wv, db);
            let mut inc_l = ld * dot(&ws.ww, db);
            if has_dv {
                inc_k += k * dot(&ws.dv, &ws.wv) * h;
                inc_l += l * dot(&ws.dv, &ws.ww) * h;
            }
            traj.acc_hess_k += inc_k;
            traj.acc_hess_l += inc_l;

            if est.generator {
                // A += l̇ Ŵᵀ dB, C += l ⟨Ŵᵀ dV, B⟩ h with B at the left point
                matvec_t(w_hat, n, db, &mut ws.tmp);
                for a in 0..n {
                    traj.acc_gen_a[a] += ld * ws.tmp[a];
                }
                if has_dv && l != 0.0 {
                    matvec_t(w_hat, n, &ws.dv, &mut ws.tmp);
                    traj.acc_gen_c += l * h * dot(&ws.tmp, traj.acc_gen_b.as_slice());
                }
                if has_dv && k != 0.0 {
                    // LV = ½ tr ∇dV + dV(Z)
                    pot.hessian(time_arg, xs, &mut ws.coord_hess);
                    let gvec = DVector::from_column_slice(&ws.coord_grad);
                    let mut lv = 0.5 * cfg.model.hessian_to_frame(&traj.x, &traj.frame, &gvec, &ws.coord_hess).trace();
                    if !cfg.fields.drift.is_zero() {
                        cfg.fields.drift.value(xs, &mut ws.zc);
                        lv += dot(&ws.coord_grad, &ws.zc);
                    }
                    traj.acc_gen_v += k * (dot(&ws.dv, db) + lv * h);
                }
                if kd != 0.0 {
                    let w_inv = traj.w_hat_inv.as_slice();
                    let cond = norm1(w_hat, n) * norm1(w_inv, n);
                    if !(cond <= cfg.limits.condition_bound) {
                        return Err(Error::IllConditioned { step: i, cond, bound: cfg.limits.condition_bound });
                    }
                    matvec(w_inv, n, db, &mut ws.tmp);
                    for a in 0..n {
                        traj.acc_gen_b[a] += kd * ws.tmp[a];
                    }
                    if !cfg.fields.drift.is_zero() {
                        cfg.fields.drift.value(xs, &mut ws.zc);
                        let g = cfg.model.gram(&traj.x);
                        for a in 0..n {
                            let mut s = 0.0;
                            for r in 0..m {
                                let mut gz = 0.0;
                                for c in 0..m {
                                    gz += g[(r, c)] * ws.zc[c];
                                }
                                s += traj.frame[(r, a)] * gz;
                            }
                            ws.zf[a] = s;
                        }
                        traj.acc_gen_z += kd * dot(&ws.zf, db);
                    }
                }
            }

            if est.hessian {
                matvec(traj.w_hat_prime.as_slice(), n, cfg.v.as_slice(), &mut ws.wpv);
                traj.acc_hess_wp += kd * dot(&ws.wpv, db);
                if has_dv && k != 0.0 {
                    let mut inc = dot(&ws.dv, &ws.wpv);
                    pot.hessian(time_arg, xs, &mut ws.coord_hess);
                    let gvec = DVector::from_column_slice(&ws.coord_grad);
                    let hf = cfg.model.hessian_to_frame(&traj.x, &traj.frame, &gvec, &ws.coord_hess);
                    for a in 0..n {
                        for b in 0..n {
                            inc += hf[(a, b)] * ws.wv[a] * ws.ww[b];
                        }
                    }
                    traj.acc_hess_v += k * inc * h;
                }
            }
        }

        traj.log_weight -= v_now * h;

        // Ŵ' by Itô-Euler with the left-point curvature
        if est.hessian && !self.curv.is_flat_second_order() {
            let wp = traj.w_hat_prime.as_mut_slice();
            // −½ Ric_Z Ŵ' h, computed before the update
            ws.mat.copy_from_slice(wp);
            let ric = self.curv.ricci_z.as_slice();
            for j in 0..n {
                matvec(ric, n, &ws.mat[j * n..(j + 1) * n], &mut ws.tmp);
                for a in 0..n {
                    wp[j * n + a] -= 0.5 * h * ws.tmp[a];
                }
            }
            for j in 0..n {
                ws.col.copy_from_slice(&w_hat[j * n..(j + 1) * n]);
                self.curv.riemann_apply(db, &ws.col, &ws.ww, &mut ws.tmp);
                let has_second = self.curv.second_order_apply(&ws.col, &ws.ww, &mut ws.tmp2);
                for a in 0..n {
                    let mut d = ws.tmp[a];
                    if has_second {
                        d -= 0.5 * h * ws.tmp2[a];
                    }
                    wp[j * n + a] += d;
                }
            }
        }

        // geodesic step with increment //dB + Z dt
        let frame = &traj.frame;
        for r in 0..m {
            ws.inc[r] = (0..n).map(|a| frame[(r, a)] * db[a]).sum();
        }
        if !cfg.fields.drift.is_zero() {
            cfg.fields.drift.value(xs, &mut ws.zc);
            for r in 0..m {
                ws.inc[r] += ws.zc[r] * h;
            }
        }
        if !self.curv_is_constant {
            ws.ric_prev.copy_from_slice(self.curv.ricci_z.as_slice());
        }
        cfg.model.advance(&mut traj.x, &mut traj.frame, &ws.inc)?;
        traj.step += 1;
        traj.t = traj.step as f64 * h;

        let norm = traj.x.norm();
        if !(norm <= cfg.limits.position_bound) {
            if !norm.is_finite() {
                return Err(Error::NonFinite { step: i, what: "position" });
            }
            return Err(Error::Explosion { step: i, norm, bound: cfg.limits.position_bound });
        }

        // curvature at the new point (reused as the left point of the next step)
        if !self.curv_is_constant {
            self.pack.evaluate(&traj.x, &traj.frame, &mut self.curv)?;
        }

        // Ŵ by the implicit midpoint rule: (I + A h/4) Ŵ⁺ = (I - A h/4) Ŵ, A = ½(Ric⁻ + Ric⁺)
        if need_w {
            let (step, step_inv): (&[f64], &[f64]) = match &self.const_step {
                Some((m, minv)) => (m, minv),
                None => {
                    let ric_old = std::mem::take(&mut ws.ric_prev);
                    let ok = midpoint_step(&ric_old, self.curv.ricci_z.as_slice(), h, n, est.generator, ws);
                    ws.ric_prev = ric_old;
                    if !ok {
                        return Err(Error::NonFinite { step: i, what: "damped transport" });
                    }
                    (&ws.step, &ws.step_inv)
                }
            };
            ws.prod.copy_from_slice(traj.w_hat.as_slice());
            matmul(step, &ws.prod, n, traj.w_hat.as_mut_slice());
            if est.generator {
                ws.prod.copy_from_slice(traj.w_hat_inv.as_slice());
                matmul(&ws.prod, step_inv, n, traj.w_hat_inv.as_mut_slice());
            }
        }

        if let Some(what) = traj.is_finite() {
            return Err(Error::NonFinite { step: i, what });
        }
        Ok(())
    }
}

/// One step of the path scheme (allocating convenience wrapper).
pub fn step(traj: &Trajectory, db: &[f64], cfg: &SimConfig) -> Result<Trajectory> {
    let mut ctx = StepContext::new(cfg)?;
    ctx.pack.evaluate(&traj.x, &traj.frame, &mut ctx.curv)?;
    let mut next = traj.clone();
    ctx.advance(&mut next, db)?;
    Ok(next)
}

/// Simulates path `path_index` over `[0, T]`; a pure function of `(cfg, path_index)`.
pub fn simulate(cfg: &SimConfig, path_index: u64) -> Result<Trajectory> {
    let mut ctx = StepContext::new(cfg)?;
    simulate_in(&mut ctx, path_index, |_, _, _| {})
}

/// Simulates with an observer called before every step with the current state,
/// the increment about to be applied and the grid index, and once at `T` with
/// an empty increment.
pub fn simulate_in<F>(ctx: &mut StepContext<'_>, path_index: u64, mut observe: F) -> Result<Trajectory>
where
    F: FnMut(&Trajectory, &[f64], &StepContext<'_>),
{
    let cfg = ctx.cfg;
    let n = cfg.model.dim();
    let steps = cfg.steps();
    let scale = ctx.h.sqrt();
    let mut normals = PathNormals::new(cfg.seed, path_index, n);
    let mut db = vec![0.0; n];
    let mut traj = ctx.start()?;
    for _ in 0..steps {
        normals.fill(&mut db, scale);
        observe(&traj, &db, ctx);
        ctx.advance(&mut traj, &db)?;
    }
    traj.t = cfg.horizon;
    observe(&traj, &[], ctx);
    Ok(traj)
}

/// True if `model` is one where the Ŵ' process is driven at all.
pub fn second_order_transport_is_trivial(model: &ManifoldModel, fields: &FieldSpec) -> bool {
    model.kind() == ModelKind::Euclidean && fields.drift.is_affine()
}
