//! `run` and `sweep` drivers shared by the binary and the examples.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{OutputFormat, RunConfig};
use crate::error::{Error, Result};
use crate::estimators::{martingale_drift, resolve_workers, run_batch, EstimatorKind, EstimatorReport, TermEstimate};
use crate::oracles::{oracle_for, reference, Oracle};
use crate::paths::SimConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PATH_FAILURES: i32 = 3;
pub const EXIT_ORACLE_MISSING: i32 = 4;
pub const EXIT_TOLERANCE: i32 = 5;

/// Environment variable supplying the worker count when neither the flag nor
/// the config sets one.
pub const WORKERS_ENV: &str = "BISMUT_WORKERS";

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Schedule(_) | Error::Geometry(_) | Error::CurvatureUnavailable(_) => EXIT_CONFIG,
        Error::PathFailures { .. } => EXIT_PATH_FAILURES,
        Error::OracleMissing(_) | Error::UnsupportedPayoff(_) | Error::OracleTruncation { .. } => EXIT_ORACLE_MISSING,
        Error::Tolerance(_) => EXIT_TOLERANCE,
        _ => EXIT_IO,
    }
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
    /// Fallback worker count (from [`WORKERS_ENV`]).
    pub default_workers: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.paths {
            cfg.n_paths = n;
        }
        if let Some(o) = &self.output {
            cfg.output.path = Some(o.to_string_lossy().into_owned());
        }
    }

    /// Flag, then config, then environment, then all cores.
    pub fn workers(&self, cfg: &RunConfig) -> Result<usize> {
        if let Some(w) = self.workers {
            return Ok(w);
        }
        if let Some(w) = &cfg.workers {
            return w.resolve();
        }
        Ok(self.default_workers.unwrap_or(0))
    }
}

/// Parses the worker-count environment variable (`auto` or a positive count).
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(None),
        Ok(s) if s.trim().is_empty() || s.trim() == "auto" => Ok(Some(0)),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{WORKERS_ENV}: expected a positive count or \"auto\", got {s:?}"))),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub value: f64,
    pub abs_error: f64,
    /// `abs_error / std_error`.
    pub se_ratio: f64,
    pub pass: bool,
}

impl OracleCheck {
    pub fn new(report: &EstimatorReport, value: f64, tolerance_se: f64) -> Self {
        let abs_error = (report.estimate - value).abs();
        let se_ratio = if report.std_error > 0.0 {
            abs_error / report.std_error
        } else if abs_error <= 1e-12 * value.abs().max(1.0) {
            0.0
        } else {
            f64::INFINITY
        };
        Self { value, abs_error, se_ratio, pass: se_ratio <= tolerance_se }
    }
}

/// One output line.
#[derive(Debug, Clone, Serialize)]
pub struct Record {
    pub estimator: EstimatorKind,
    pub t: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub n_paths_used: u64,
    pub n_paths_failed: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<TermEstimate>,
    #[serde(skip_serializing_if = "std::collections::BTreeMap::is_empty")]
    pub failures: std::collections::BTreeMap<String, u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleCheck>,
    pub config: serde_json::Value,
}

impl Record {
    fn new(report: EstimatorReport, oracle: Option<OracleCheck>, config: serde_json::Value) -> Self {
        Self {
            estimator: report.estimator,
            t: report.t,
            estimate: report.estimate,
            std_error: report.std_error,
            n_paths_used: report.n_paths_used,
            n_paths_failed: report.n_paths_failed,
            terms: report.terms,
            failures: report.failures,
            oracle,
            config,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct CsvRow {
    t: f64,
    estimator: &'static str,
    estimate: f64,
    std_error: f64,
    n_paths_used: u64,
    n_paths_failed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    abs_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    se_ratio: Option<f64>,
}

/// Writes records as NDJSON or CSV to `path` (standard output when `None`).
pub fn write_records(records: &[Record], format: OutputFormat, path: Option<&Path>) -> Result<()> {
    let mut out: Box<dyn Write> = match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    match format {
        OutputFormat::Json => {
            for r in records {
                let line = serde_json::to_string(r).map_err(|e| Error::Io(e.into()))?;
                writeln!(out, "{line}")?;
            }
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            for r in records {
                w.serialize(CsvRow {
                    t: r.t,
                    estimator: r.estimator.as_str(),
                    estimate: r.estimate,
                    std_error: r.std_error,
                    n_paths_used: r.n_paths_used,
                    n_paths_failed: r.n_paths_failed,
                    oracle_value: r.oracle.as_ref().map(|o| o.value),
                    abs_error: r.oracle.as_ref().map(|o| o.abs_error),
                    se_ratio: r.oracle.as_ref().map(|o| o.se_ratio),
                })
                .map_err(csv_error)?;
            }
            w.flush()?;
        }
    }
    out.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

fn needs_oracle(cfg: &RunConfig) -> bool {
    cfg.oracle_compare || cfg.estimators.contains(&EstimatorKind::MartingaleDrift)
}

/// Estimates every requested quantity at horizon `horizon`.
fn estimate_at(
    cfg: &RunConfig,
    sim: &SimConfig,
    oracle: Option<&dyn Oracle>,
    workers: usize,
) -> Result<Vec<Record>> {
    let echo = cfg.resolved_echo(sim, resolve_workers(workers));
    let limit = cfg.limits.max_failure_fraction;
    let tol = cfg.limits.tolerance_se;
    let batch: Vec<EstimatorKind> =
        cfg.estimators.iter().copied().filter(|k| *k != EstimatorKind::MartingaleDrift).collect();
    let mut reports = if batch.is_empty() { Vec::new() } else { run_batch(sim, &batch, workers, limit)? };
    if cfg.estimators.contains(&EstimatorKind::MartingaleDrift) {
        let oracle = oracle.ok_or_else(|| Error::OracleMissing("martingale drift needs an oracle".into()))?;
        reports.extend(martingale_drift(sim, oracle, &cfg.checkpoints(), workers, limit)?);
    }
    let mut records = Vec::with_capacity(reports.len());
    for r in reports {
        let check = match oracle {
            Some(o) if cfg.oracle_compare => Some(OracleCheck::new(&r, reference(sim, r.estimator, o)?, tol)),
            _ => None,
        };
        records.push(Record::new(r, check, echo.clone()));
    }
    Ok(records)
}

fn oracle_check_up_front(cfg: &RunConfig, sim: &SimConfig) -> Result<Option<Box<dyn Oracle>>> {
    if !needs_oracle(cfg) {
        return Ok(None);
    }
    let o = oracle_for(&sim.model, &sim.fields)?;
    o.check(sim.horizon)?;
    Ok(Some(o))
}

fn tolerance_verdict(records: &[Record], tol: f64) -> Result<()> {
    let bad: Vec<String> = records
        .iter()
        .filter_map(|r| {
            let o = r.oracle.as_ref()?;
            (!o.pass).then(|| format!("{} at t={}: {:.2} SE (limit {tol})", r.estimator, r.t, o.se_ratio))
        })
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Tolerance(bad.join("; ")))
    }
}

/// Runs a loaded configuration without writing anything.
pub fn run_config(cfg: &RunConfig, workers: usize) -> Result<Vec<Record>> {
    let sim = cfg.sim_config(cfg.horizon)?;
    let oracle = oracle_check_up_front(cfg, &sim)?;
    estimate_at(cfg, &sim, oracle.as_deref(), workers)
}

/// Sweeps `t_grid` with default schedules, without writing anything.
pub fn sweep_config(cfg: &RunConfig, workers: usize) -> Result<Vec<Record>> {
    let grid = match &cfg.t_grid {
        Some(g) if !g.is_empty() => g.clone(),
        _ => return Err(Error::Config("sweep needs a non-empty t_grid".into())),
    };
    if !cfg.schedules.k.is_default() || !cfg.schedules.l.is_default() {
        return Err(Error::Config("sweep rescales the default schedules; explicit schedules are not allowed".into()));
    }
    if cfg.estimators.contains(&EstimatorKind::MartingaleDrift) {
        return Err(Error::Config("martingale_drift is not available in sweep".into()));
    }
    let mut sims = Vec::with_capacity(grid.len());
    for &t in &grid {
        sims.push(cfg.sim_config(t)?);
    }
    let mut oracles = Vec::with_capacity(sims.len());
    for sim in &sims {
        oracles.push(oracle_check_up_front(cfg, sim)?);
    }
    let mut records = Vec::new();
    for (sim, oracle) in sims.iter().zip(&oracles) {
        records.extend(estimate_at(cfg, sim, oracle.as_deref(), workers)?);
    }
    Ok(records)
}

fn drive(path: &Path, overrides: &Overrides, body: fn(&RunConfig, usize) -> Result<Vec<Record>>) -> Result<Vec<Record>> {
    let mut cfg = RunConfig::load(path).map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })?;
    overrides.apply(&mut cfg);
    let workers = overrides.workers(&cfg)?;
    let records = body(&cfg, workers)?;
    write_records(&records, cfg.output.format, cfg.output.path.as_deref().map(Path::new))?;
    tolerance_verdict(&records, cfg.limits.tolerance_se)?;
    Ok(records)
}

/// Loads `path`, runs it, writes the records and applies the oracle tolerance.
pub fn run(path: &Path, overrides: &Overrides) -> Result<Vec<Record>> {
    drive(path, overrides, run_config)
}

/// Loads `path`, sweeps its `t_grid`, writes the records and applies the oracle tolerance.
pub fn sweep(path: &Path, overrides: &Overrides) -> Result<Vec<Record>> {
    drive(path, overrides, sweep_config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> RunConfig {
        RunConfig::from_json(
            r#"{
            "model": {"kind": "euclidean", "dim": 1},
            "fields": {"payoff": {"kind": "sin", "index": 0}},
            "x0": [0.3], "T": 0.5, "dt": 0.05, "n_paths": 2000, "seed": 3,
            "estimators": ["semigroup", "gradient"], "oracle_compare": true
        }"#,
        )
        .unwrap()
    }

    #[test]
    fn run_attaches_oracle_checks() {
        let recs = run_config(&base(), 1).unwrap();
        assert_eq!(recs.len(), 2);
        for r in &recs {
            let o = r.oracle.as_ref().unwrap();
            assert!(o.se_ratio < 5.0, "{r:?}");
            assert_eq!(r.config["T"], 0.5);
        }
    }

    #[test]
    fn sweep_requires_grid_and_default_schedules() {
        let mut c = base();
        assert!(matches!(sweep_config(&c, 1), Err(Error::Config(_))));
        c.t_grid = Some(vec![]);
        assert!(matches!(sweep_config(&c, 1), Err(Error::Config(_))));
        c.t_grid = Some(vec![0.25, 0.5]);
        let recs = sweep_config(&c, 1).unwrap();
        assert_eq!(recs.iter().map(|r| r.t).collect::<Vec<_>>(), vec![0.25, 0.25, 0.5, 0.5]);
        c.schedules.k = crate::config::ScheduleSpec::Points { breakpoints: vec![0.0, 0.5], values: vec![1.0, 0.0] };
        assert!(matches!(sweep_config(&c, 1), Err(Error::Config(_))));
    }

    #[test]
    fn missing_oracle_is_reported_before_simulation() {
        let mut c = base();
        c.model.kind = crate::geometry::ModelKind::Hyperbolic;
        c.model.dim = 2;
        c.model.curvature = -1.0;
        c.x0 = vec![1.0, 0.0, 0.0];
        let e = run_config(&c, 1).unwrap_err();
        assert_eq!(exit_code(&e), EXIT_ORACLE_MISSING, "{e}");
    }

    #[test]
    fn zero_se_exact_match_passes() {
        let r = EstimatorReport {
            estimator: EstimatorKind::Semigroup,
            t: 1.0,
            estimate: 2.0,
            std_error: 0.0,
            n_paths_used: 10,
            n_paths_failed: 0,
            terms: vec![],
            failures: Default::default(),
        };
        assert!(OracleCheck::new(&r, 2.0, 3.0).pass);
        assert!(!OracleCheck::new(&r, 2.1, 3.0).pass);
    }
}
