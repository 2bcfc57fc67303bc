//! Run configuration files (JSON or TOML, chosen by extension).
//!
//! ```json
//! {
//!   "model": {"kind": "sphere", "dim": 2, "curvature": 1.0},
//!   "fields": {
//!     "potential": {"kind": "zero"},
//!     "drift": {"kind": "zero"},
//!     "payoff": {"kind": "zonal", "coeffs": [0.0, 1.0]}
//!   },
//!   "x0": [0.0, 0.0, 1.0],
//!   "T": 1.0, "dt": 0.001, "n_paths": 100000, "seed": 7,
//!   "estimators": ["generator"],
//!   "oracle_compare": true
//! }
//! ```
//!
//! `x0` is in model coordinates; `v` and `w` are components in the initial
//! frame and default to its first vector. Unknown fields are rejected.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::fields::{Drift, FieldSpec, Payoff, Potential};
use crate::geometry::{ConformalConstantCurvature, ManifoldModel, ModelKind};
use crate::paths::{EstimatorSet, Limits, ScheduleSet, SimConfig};
use crate::schedules::{Schedule, ScheduleRole};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub dim: usize,
    /// Sectional curvature; for `chart` the curvature of the conformal
    /// (stereographic or Poincaré-ball) metric used as the chart.
    #[serde(default)]
    pub curvature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        v_min: Option<f64>,
    },
    Constant {
        c: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        v_min: Option<f64>,
    },
    /// `V(x) = a |x|^2`.
    Quadratic {
        a: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        v_min: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftSpec {
    Zero,
    /// `Z(x) = -λ x`.
    Ou { lambda: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PayoffSpec {
    Constant { value: f64 },
    Coordinate { index: usize },
    Sin { index: usize },
    Quadratic,
    GaussianBump,
    Zonal { coeffs: Vec<f64> },
    Halfspace { index: usize, threshold: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldsSpec {
    #[serde(default = "default_potential")]
    pub potential: PotentialSpec,
    #[serde(default = "default_drift")]
    pub drift: DriftSpec,
    pub payoff: PayoffSpec,
}

fn default_potential() -> PotentialSpec {
    PotentialSpec::Zero { v_min: None }
}

fn default_drift() -> DriftSpec {
    DriftSpec::Zero
}

/// `"default"` or an explicit piecewise-linear schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleSpec {
    Named(String),
    Points {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec::Named("default".into())
    }
}

impl ScheduleSpec {
    pub fn is_default(&self) -> bool {
        matches!(self, ScheduleSpec::Named(n) if n == "default")
    }

    fn build(&self, role: ScheduleRole, horizon: f64, name: &str) -> Result<Schedule> {
        match self {
            ScheduleSpec::Named(n) if n == "default" => Ok(match role {
                ScheduleRole::GradientK => Schedule::default_gradient_k(horizon),
                ScheduleRole::SecondOrderK => Schedule::default_second_order_k(horizon),
                ScheduleRole::SecondOrderL => Schedule::default_second_order_l(horizon),
                ScheduleRole::Free => Schedule::zero(horizon),
            }),
            ScheduleSpec::Named(n) => Err(Error::Config(format!("schedule {name}: unknown name {n:?}"))),
            ScheduleSpec::Points { breakpoints, values } => {
                Schedule::new(breakpoints.clone(), values.clone(), role, horizon)
                    .map_err(|e| Error::Config(format!("schedule {name}: {e}")))
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulesSpec {
    #[serde(default)]
    pub k: ScheduleSpec,
    #[serde(default)]
    pub l: ScheduleSpec,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Destination file; standard output when absent.
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub format: OutputFormat,
}

/// A worker count or `"auto"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WorkersSpec {
    Count(usize),
    Named(String),
}

impl WorkersSpec {
    /// `0` means all available cores.
    pub fn resolve(&self) -> Result<usize> {
        match self {
            WorkersSpec::Count(0) => Err(Error::Config("workers must be at least 1".into())),
            WorkersSpec::Count(n) => Ok(*n),
            WorkersSpec::Named(s) if s == "auto" => Ok(0),
            WorkersSpec::Named(s) => Err(Error::Config(format!("workers: expected a count or \"auto\", got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsSpec {
    #[serde(default = "default_position_bound")]
    pub position_bound: f64,
    #[serde(default = "default_condition_bound")]
    pub condition_bound: f64,
    #[serde(default = "default_failure_fraction")]
    pub max_failure_fraction: f64,
    /// Largest accepted `|error| / SE` when comparing with an oracle.
    #[serde(default = "default_tolerance_se")]
    pub tolerance_se: f64,
}

fn default_position_bound() -> f64 {
    Limits::default().position_bound
}

fn default_condition_bound() -> f64 {
    Limits::default().condition_bound
}

fn default_failure_fraction() -> f64 {
    0.01
}

fn default_tolerance_se() -> f64 {
    3.0
}

impl Default for LimitsSpec {
    fn default() -> Self {
        Self {
            position_bound: default_position_bound(),
            condition_bound: default_condition_bound(),
            max_failure_fraction: default_failure_fraction(),
            tolerance_se: default_tolerance_se(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub fields: FieldsSpec,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub v: Option<Vec<f64>>,
    #[serde(default)]
    pub w: Option<Vec<f64>>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub schedules: SchedulesSpec,
    pub estimators: Vec<EstimatorKind>,
    #[serde(default)]
    pub oracle_compare: bool,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub workers: Option<WorkersSpec>,
    /// Horizons for `sweep`.
    #[serde(default)]
    pub t_grid: Option<Vec<f64>>,
    /// Check times for the martingale-drift estimator; defaults to `T/4, T/2, 3T/4`.
    #[serde(default)]
    pub checkpoints: Option<Vec<f64>>,
    #[serde(default)]
    pub limits: LimitsSpec,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a `.toml` file as TOML and anything else as JSON.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::from_toml(&text),
            _ => Self::from_json(&text),
        }
    }

    pub fn model(&self) -> Result<ManifoldModel> {
        let m = &self.model;
        match m.kind {
            ModelKind::Euclidean => ManifoldModel::euclidean(m.dim),
            ModelKind::Sphere => ManifoldModel::sphere(m.dim, m.curvature),
            ModelKind::Hyperbolic => ManifoldModel::hyperbolic(m.dim, m.curvature),
            ModelKind::Chart => {
                if m.dim == 0 {
                    return Err(Error::Config("dimension must be at least 1".into()));
                }
                ManifoldModel::chart(Arc::new(ConformalConstantCurvature { dim: m.dim, curvature: m.curvature }))
            }
        }
        .map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })
    }

    pub fn field_spec(&self) -> FieldSpec {
        let potential = match self.fields.potential {
            PotentialSpec::Zero { .. } => Potential::Zero,
            PotentialSpec::Constant { c, .. } => Potential::Constant(c),
            PotentialSpec::Quadratic { a, .. } => Potential::Quadratic(a),
        };
        let drift = match self.fields.drift {
            DriftSpec::Zero => Drift::Zero,
            DriftSpec::Ou { lambda } => Drift::OrnsteinUhlenbeck(lambda),
        };
        let payoff = match &self.fields.payoff {
            PayoffSpec::Constant { value } => Payoff::Constant(*value),
            PayoffSpec::Coordinate { index } => Payoff::Coordinate(*index),
            PayoffSpec::Sin { index } => Payoff::Sin(*index),
            PayoffSpec::Quadratic => Payoff::Quadratic,
            PayoffSpec::GaussianBump => Payoff::GaussianBump,
            PayoffSpec::Zonal { coeffs } => Payoff::Zonal(coeffs.clone()),
            PayoffSpec::Halfspace { index, threshold } => Payoff::HalfSpace { index: *index, threshold: *threshold },
        };
        FieldSpec::new(potential, drift, payoff)
    }

    fn v_min(&self) -> Option<f64> {
        match self.fields.potential {
            PotentialSpec::Zero { v_min } | PotentialSpec::Constant { v_min, .. } | PotentialSpec::Quadratic { v_min, .. } => {
                v_min
            }
        }
    }

    /// Estimator set implied by the requested estimators.
    pub fn estimator_set(&self) -> EstimatorSet {
        let mut s = EstimatorSet::default();
        for k in &self.estimators {
            let one = EstimatorSet::only(*k);
            s.semigroup |= one.semigroup;
            s.gradient |= one.gradient;
            s.generator |= one.generator;
            s.hessian |= one.hessian;
        }
        s
    }

    /// Builds schedules for horizon `t`, validating an explicit `k` against
    /// the role of every requested estimator.
    pub fn schedules_for(&self, horizon: f64) -> Result<ScheduleSet> {
        let set = self.estimator_set();
        let k = &self.schedules.k;
        let second = set.generator || set.hessian;
        let gradient_k = if set.gradient || !second {
            k.build(ScheduleRole::GradientK, horizon, "k")?
        } else {
            Schedule::default_gradient_k(horizon)
        };
        let (second_order_k, l) = if second {
            (k.build(ScheduleRole::SecondOrderK, horizon, "k")?, self.schedules.l.build(ScheduleRole::SecondOrderL, horizon, "l")?)
        } else {
            if !self.schedules.l.is_default() {
                return Err(Error::Config("schedule l is only used by the generator and Hessian estimators".into()));
            }
            (Schedule::default_second_order_k(horizon), Schedule::default_second_order_l(horizon))
        };
        Ok(ScheduleSet { gradient_k, second_order_k, l })
    }

    /// Structural checks independent of the horizon.
    pub fn check(&self) -> Result<()> {
        if self.estimators.is_empty() {
            return Err(Error::Config("estimators list is empty".into()));
        }
        if self.n_paths == 0 {
            return Err(Error::Config("n_paths must be at least 1".into()));
        }
        let l = &self.limits;
        if !(l.max_failure_fraction >= 0.0 && l.max_failure_fraction <= 1.0) {
            return Err(Error::Config("max_failure_fraction must lie in [0, 1]".into()));
        }
        if !(l.tolerance_se > 0.0) || !(l.position_bound > 0.0) || !(l.condition_bound >= 1.0) {
            return Err(Error::Config("limits must be positive (condition_bound >= 1)".into()));
        }
        if let Some(w) = &self.workers {
            w.resolve()?;
        }
        Ok(())
    }

    /// The simulation configuration for horizon `horizon` (`T` for `run`,
    /// grid points for `sweep`).
    pub fn sim_config(&self, horizon: f64) -> Result<SimConfig> {
        self.check()?;
        let model = self.model()?;
        let fields = self.field_spec();
        let x0 = DVector::from_column_slice(&self.x0);
        if x0.len() != model.coord_dim() {
            return Err(Error::Config(format!("x0 has {} coordinates, model needs {}", x0.len(), model.coord_dim())));
        }
        model.check_point(&x0).map_err(|e| Error::Config(e.to_string()))?;
        let n = model.dim();
        let unit = |d: &Option<Vec<f64>>, name: &str| -> Result<DVector<f64>> {
            match d {
                Some(v) => {
                    if v.len() != n {
                        return Err(Error::Config(format!("{name} needs {n} frame components, got {}", v.len())));
                    }
                    Ok(DVector::from_column_slice(v))
                }
                None => {
                    let mut e = DVector::zeros(n);
                    e[0] = 1.0;
                    Ok(e)
                }
            }
        };
        let mut cfg = SimConfig::new(model, fields, x0, horizon, self.dt);
        cfg.v = unit(&self.v, "v")?;
        cfg.w = unit(&self.w, "w")?;
        cfg.n_paths = self.n_paths;
        cfg.seed = self.seed;
        cfg.schedules = self.schedules_for(horizon)?;
        cfg.estimators = self.estimator_set();
        cfg.limits = Limits {
            position_bound: self.limits.position_bound,
            condition_bound: self.limits.condition_bound,
            v_min: self.v_min(),
        };
        cfg.validate().map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })?;
        Ok(cfg)
    }

    /// Martingale check times, defaulting to quarters of `T`.
    pub fn checkpoints(&self) -> Vec<f64> {
        self.checkpoints
            .clone()
            .unwrap_or_else(|| vec![0.25 * self.horizon, 0.5 * self.horizon, 0.75 * self.horizon])
    }

    /// The configuration with defaults expanded, as echoed into every report.
    pub fn resolved_echo(&self, cfg: &SimConfig, workers: usize) -> serde_json::Value {
        let sched = |s: &Schedule| {
            serde_json::json!({
                "id": s.id(),
                "breakpoints": s.breakpoints(),
                "values": s.values(),
            })
        };
        let set = cfg.estimators;
        let mut schedules = serde_json::Map::new();
        if set.gradient {
            schedules.insert("gradient_k".into(), sched(&cfg.schedules.gradient_k));
        }
        if set.generator || set.hessian {
            schedules.insert("second_order_k".into(), sched(&cfg.schedules.second_order_k));
            schedules.insert("l".into(), sched(&cfg.schedules.l));
        }
        serde_json::json!({
            "model": self.model,
            "fields": self.fields,
            "x0": self.x0,
            "v": cfg.v.as_slice(),
            "w": cfg.w.as_slice(),
            "T": cfg.horizon,
            "dt": cfg.step_size(),
            "steps": cfg.steps(),
            "n_paths": cfg.n_paths,
            "seed": cfg.seed,
            "schedules": schedules,
            "estimators": self.estimators,
            "oracle_compare": self.oracle_compare,
            "workers": workers,
            "limits": self.limits,
        })
    }
}
