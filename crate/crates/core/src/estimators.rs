//! Monte Carlo estimators of `P_T^V f`, its differential, `L P_T^V f` and its
//! Hessian, built from the path functionals in [`crate::paths`].
//!
//! Paths are grouped in fixed chunks of [`CHUNK`] consecutive indices. Each
//! chunk is accumulated sequentially and chunks are merged in index order, so
//! results are bit-identical for any worker count.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracles::Oracle;
use crate::paths::{simulate_in, EstimatorSet, SimConfig, StepContext, Trajectory};
use crate::stats::Welford;

/// Paths per deterministic aggregation chunk.
pub const CHUNK: u64 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Semigroup,
    Gradient,
    Generator,
    Hessian,
    MartingaleDrift,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Semigroup => "semigroup",
            EstimatorKind::Gradient => "gradient",
            EstimatorKind::Generator => "generator",
            EstimatorKind::Hessian => "hessian",
            EstimatorKind::MartingaleDrift => "martingale_drift",
        }
    }

    fn terms(self) -> &'static [&'static str] {
        match self {
            EstimatorKind::Generator => &["drift", "potential", "second_order"],
            EstimatorKind::Hessian => &["transport_derivative", "potential", "product"],
            _ => &[],
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermEstimate {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub estimator: EstimatorKind,
    /// Horizon `T`, or the check time for martingale-drift records.
    pub t: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub n_paths_used: u64,
    pub n_paths_failed: u64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub terms: Vec<TermEstimate>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub failures: BTreeMap<String, u64>,
}

impl EstimatorReport {
    /// `|estimate - reference| / std_error`.
    pub fn z_score(&self, reference: f64) -> f64 {
        (self.estimate - reference).abs() / self.std_error
    }

    /// True if `reference` lies within `k` standard errors.
    pub fn within(&self, reference: f64, k: f64) -> bool {
        (self.estimate - reference).abs() <= k * self.std_error
    }
}

/// Per-chunk accumulators, one Welford per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkResult {
    pub channels: Vec<Welford>,
    pub failures: BTreeMap<String, u64>,
    pub first_failure: Option<(u64, String)>,
}

impl ChunkResult {
    fn new(channels: usize) -> Self {
        Self { channels: vec![Welford::new(); channels], failures: BTreeMap::new(), first_failure: None }
    }

    fn fail(&mut self, path: u64, e: &Error) {
        *self.failures.entry(e.failure_kind().to_string()).or_default() += 1;
        if self.first_failure.is_none() {
            self.first_failure = Some((path, e.to_string()));
        }
    }
}

/// Merges chunk results in chunk-index order regardless of arrival order.
pub fn merge_chunks(mut parts: Vec<(u64, ChunkResult)>) -> ChunkResult {
    parts.sort_by_key(|(i, _)| *i);
    let width = parts.first().map_or(0, |(_, c)| c.channels.len());
    let mut acc = ChunkResult::new(width);
    for (_, c) in &parts {
        for (a, b) in acc.channels.iter_mut().zip(&c.channels) {
            a.merge(b);
        }
        for (k, v) in &c.failures {
            *acc.failures.entry(k.clone()).or_default() += v;
        }
        if acc.first_failure.is_none() {
            acc.first_failure = c.first_failure.clone();
        }
    }
    acc
}

fn kinds_to_set(kinds: &[EstimatorKind]) -> EstimatorSet {
    let mut s = EstimatorSet::default();
    for k in kinds {
        match k {
            EstimatorKind::Semigroup => s.semigroup = true,
            EstimatorKind::Gradient | EstimatorKind::MartingaleDrift => s.gradient = true,
            EstimatorKind::Generator => s.generator = true,
            EstimatorKind::Hessian => s.hessian = true,
        }
    }
    s
}

/// Appends the per-path functionals whose means are the estimates: for each
/// kind its total followed by its terms, in the order of `kinds`.
pub fn path_functionals(kinds: &[EstimatorKind], cfg: &SimConfig, t: &Trajectory, out: &mut Vec<f64>) {
    let wf = t.fk_weight() * cfg.fields.payoff.eval(t.x.as_slice());
    for k in kinds {
        match k {
            EstimatorKind::Semigroup => out.push(wf),
            EstimatorKind::Gradient => out.push(-wf * t.acc_grad),
            EstimatorKind::Generator => {
                // enters with a minus sign: E[f_T ∫ k̇ ⟨Z, //dB⟩] = E ∫ k̇ df_s(Z) ds
                let drift = -wf * t.acc_gen_z;
                let potential = -wf * t.acc_gen_v;
                let second = 0.5 * wf * (t.acc_gen_a.dot(&t.acc_gen_b) + t.acc_gen_c);
                out.extend([drift + potential + second, drift, potential, second]);
            }
            EstimatorKind::Hessian => {
                let a = -wf * t.acc_hess_wp;
                let b = -wf * t.acc_hess_v;
                let c = wf * t.acc_hess_l * t.acc_hess_k;
                out.extend([a + b + c, a, b, c]);
            }
            EstimatorKind::MartingaleDrift => {}
        }
    }
}

/// Resolves a requested worker count (`0` = all available cores).
pub fn resolve_workers(workers: usize) -> usize {
    if workers > 0 {
        workers
    } else {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    }
}

fn run_chunks<F>(n_paths: u64, workers: usize, chunk_fn: F) -> Result<Vec<(u64, ChunkResult)>>
where
    F: Fn(u64, u64) -> Result<ChunkResult> + Sync,
{
    let n_chunks = n_paths.div_ceil(CHUNK);
    let work = |c: u64| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(n_paths);
        chunk_fn(lo, hi).map(|r| (c, r))
    };
    let workers = resolve_workers(workers);
    if workers == 1 {
        return (0..n_chunks).map(work).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| (0..n_chunks).into_par_iter().map(work).collect())
}

fn check_failures(merged: &ChunkResult, n_paths: u64, limit: f64) -> Result<u64> {
    let failed: u64 = merged.failures.values().sum();
    if failed as f64 > limit * n_paths as f64 {
        let first = merged.first_failure.as_ref().map_or(String::new(), |(p, m)| format!("path {p}: {m}"));
        return Err(Error::PathFailures { failed, total: n_paths, limit, first });
    }
    Ok(failed)
}

/// Runs one batch of `cfg.n_paths` paths feeding every requested estimator.
///
/// Paths that fail are excluded and tallied; if more than `max_failure_fraction`
/// of them fail the whole batch is rejected.
pub fn run_batch(
    cfg: &SimConfig,
    kinds: &[EstimatorKind],
    workers: usize,
    max_failure_fraction: f64,
) -> Result<Vec<EstimatorReport>> {
    let kinds: Vec<EstimatorKind> = kinds.iter().copied().filter(|k| *k != EstimatorKind::MartingaleDrift).collect();
    let mut cfg = cfg.clone();
    cfg.estimators = kinds_to_set(&kinds);
    cfg.validate()?;
    let width: usize = kinds.iter().map(|k| 1 + k.terms().len()).sum();
    let n_paths = cfg.n_paths as u64;
    let cfg = &cfg;

    let parts = run_chunks(n_paths, workers, |lo, hi| {
        let mut ctx = StepContext::new(cfg)?;
        let mut res = ChunkResult::new(width);
        let mut vals = Vec::with_capacity(width);
        for p in lo..hi {
            match simulate_in(&mut ctx, p, |_, _, _| {}) {
                Ok(t) => {
                    vals.clear();
                    path_functionals(&kinds, cfg, &t, &mut vals);
                    for (w, v) in res.channels.iter_mut().zip(&vals) {
                        w.push(*v);
                    }
                }
                Err(e) => res.fail(p, &e),
            }
        }
        Ok(res)
    })?;
    let merged = merge_chunks(parts);
    let failed = check_failures(&merged, n_paths, max_failure_fraction)?;

    let mut reports = Vec::with_capacity(kinds.len());
    let mut ch = merged.channels.iter();
    for k in &kinds {
        let total = ch.next().expect("channel layout");
        let terms = k
            .terms()
            .iter()
            .map(|name| {
                let w = ch.next().expect("channel layout");
                TermEstimate { name: name.to_string(), estimate: w.mean(), std_error: w.std_error() }
            })
            .collect();
        reports.push(EstimatorReport {
            estimator: *k,
            t: cfg.horizon,
            estimate: total.mean(),
            std_error: total.std_error(),
            n_paths_used: total.count(),
            n_paths_failed: failed,
            terms,
            failures: merged.failures.clone(),
        });
    }
    Ok(reports)
}

/// Single-estimator convenience wrapper around [`run_batch`].
pub fn estimate(cfg: &SimConfig, kind: EstimatorKind, workers: usize) -> Result<EstimatorReport> {
    run_batch(cfg, &[kind], workers, 0.01).map(|mut r| r.remove(0))
}

pub fn estimate_semigroup(cfg: &SimConfig, workers: usize) -> Result<EstimatorReport> {
    estimate(cfg, EstimatorKind::Semigroup, workers)
}

pub fn estimate_gradient(cfg: &SimConfig, workers: usize) -> Result<EstimatorReport> {
    estimate(cfg, EstimatorKind::Gradient, workers)
}

pub fn estimate_generator(cfg: &SimConfig, workers: usize) -> Result<EstimatorReport> {
    estimate(cfg, EstimatorKind::Generator, workers)
}

pub fn estimate_hessian(cfg: &SimConfig, workers: usize) -> Result<EstimatorReport> {
    estimate(cfg, EstimatorKind::Hessian, workers)
}

/// Monte Carlo means of the gradient martingale
///
/// `M_t = 𝕍_t df_t(W_t k_t v) - 𝕍_t f_t(x_t) ∫_0^t ⟨W k̇ v, dB⟩ - ∫_0^t 𝕍_s f_s(x_s) dV(W_s k_s v) ds`
///
/// with `f_t = P_{T-t}^V f` supplied by `oracle`, at each time in `times`
/// (rounded to the grid). A correct scheme gives `E M_t = dP_T^V f(v)` for all `t`.
pub fn martingale_drift(
    cfg: &SimConfig,
    oracle: &dyn Oracle,
    times: &[f64],
    workers: usize,
    max_failure_fraction: f64,
) -> Result<Vec<EstimatorReport>> {
    let mut cfg = cfg.clone();
    cfg.estimators = EstimatorSet { gradient: true, ..EstimatorSet::default() };
    cfg.validate()?;
    let steps = cfg.steps();
    let h = cfg.step_size();
    let mut idx = Vec::with_capacity(times.len());
    for &t in times {
        if !(0.0..=cfg.horizon).contains(&t) {
            return Err(Error::Config(format!("check time {t} outside [0, {}]", cfg.horizon)));
        }
        idx.push(((t / h).round() as usize).min(steps));
    }
    let width = idx.len();
    let n_paths = cfg.n_paths as u64;
    let cfg = &cfg;
    let horizon = cfg.horizon;
    let varying_potential = !cfg.fields.potential.is_spatially_constant();

    let parts = run_chunks(n_paths, workers, |lo, hi| {
        let mut ctx = StepContext::new(cfg)?;
        let mut res = ChunkResult::new(width);
        let mut record = vec![0.0; width];
        for p in lo..hi {
            let mut stoch = 0.0;
            let mut drift = 0.0;
            let out = simulate_in(&mut ctx, p, |traj, db, ctx| {
                let i = traj.step;
                let wv = &traj.w_hat * &cfg.v;
                let weight = traj.fk_weight();
                let k = if i < steps { ctx.gradient_k(i) } else { (0.0, 0.0) };
                let needs_value = varying_potential && i < steps || idx.contains(&i);
                let value = if needs_value { oracle.value(horizon - traj.t, traj.x.as_slice()) } else { 0.0 };
                for (slot, &j) in idx.iter().enumerate() {
                    if j == i {
                        let g = oracle.gradient(horizon - traj.t, traj.x.as_slice());
                        let dir = &traj.frame * &wv * k.0;
                        record[slot] = weight * g.dot(&dir) - weight * value * stoch - drift;
                    }
                }
                if i < steps {
                    stoch += k.1 * wv.as_slice().iter().zip(db).map(|(a, b)| a * b).sum::<f64>();
                    if varying_potential {
                        let dv = ctx.potential_differential(traj);
                        drift += weight * value * k.0 * dv.dot(&wv) * h;
                    }
                }
            });
            match out {
                Ok(_) => {
                    for (w, v) in res.channels.iter_mut().zip(&record) {
                        w.push(*v);
                    }
                }
                Err(e) => res.fail(p, &e),
            }
        }
        Ok(res)
    })?;
    let merged = merge_chunks(parts);
    let failed = check_failures(&merged, n_paths, max_failure_fraction)?;
    Ok(idx
        .iter()
        .zip(&merged.channels)
        .map(|(&i, w)| EstimatorReport {
            estimator: EstimatorKind::MartingaleDrift,
            t: i as f64 * h,
            estimate: w.mean(),
            std_error: w.std_error(),
            n_paths_used: w.count(),
            n_paths_failed: failed,
            terms: Vec::new(),
            failures: merged.failures.clone(),
        })
        .collect())
}
