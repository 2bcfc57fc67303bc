//! Deterministic piecewise-linear weight processes `k` and `l`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleRole {
    /// `k` for the gradient formula: `k(0) = 1`, `k(T) = 0`.
    GradientK,
    /// `k` for generator and Hessian formulas: `k(0) = 1`, `k = 0` on `[T/2, T]`.
    SecondOrderK,
    /// `l` for generator and Hessian formulas: `l = 1` on `[0, T/2]`, `l(T) = 0`.
    SecondOrderL,
    /// No boundary constraints (diagnostics only).
    Free,
}

/// Piecewise-linear function on `[0, T]` through `(breakpoints[i], values[i])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    role: ScheduleRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
}

const BOUNDARY_TOL: f64 = 1e-12;

impl Schedule {
    /// Builds and validates a schedule for `role` on `[0, horizon]`.
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>, role: ScheduleRole, horizon: f64) -> Result<Self> {
        if breakpoints.len() != values.len() || breakpoints.len() < 2 {
            return Err(Error::Schedule("need at least two breakpoints with matching values".into()));
        }
        if breakpoints.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::Schedule("non-finite breakpoint or value".into()));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Schedule("breakpoints must be strictly increasing".into()));
        }
        let tol = BOUNDARY_TOL * horizon.max(1.0);
        if breakpoints[0].abs() > tol || (breakpoints[breakpoints.len() - 1] - horizon).abs() > tol {
            return Err(Error::Schedule(format!("breakpoints must span [0, {horizon}]")));
        }
        let s = Self { breakpoints, values, role, id: None };
        s.check_role(horizon)?;
        Ok(s)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn id(&self) -> String {
        self.id.clone().unwrap_or_else(|| {
            let pts: Vec<String> = self
                .breakpoints
                .iter()
                .zip(&self.values)
                .map(|(t, v)| format!("{t}:{v}"))
                .collect();
            format!("pl[{}]", pts.join(","))
        })
    }

    /// `k_s = (T - s)/T`.
    pub fn default_gradient_k(horizon: f64) -> Self {
        Self {
            breakpoints: vec![0.0, horizon],
            values: vec![1.0, 0.0],
            role: ScheduleRole::GradientK,
            id: Some("default_gradient_k".into()),
        }
    }

    /// `k_s = (T - 2s)/T ∨ 0`.
    pub fn default_second_order_k(horizon: f64) -> Self {
        Self {
            breakpoints: vec![0.0, horizon / 2.0, horizon],
            values: vec![1.0, 0.0, 0.0],
            role: ScheduleRole::SecondOrderK,
            id: Some("default_second_order_k".into()),
        }
    }

    /// `l_s = 1 ∧ 2(T - s)/T`.
    pub fn default_second_order_l(horizon: f64) -> Self {
        Self {
            breakpoints: vec![0.0, horizon / 2.0, horizon],
            values: vec![1.0, 1.0, 0.0],
            role: ScheduleRole::SecondOrderL,
            id: Some("default_second_order_l".into()),
        }
    }

    /// The zero schedule on `[0, T]`.
    pub fn zero(horizon: f64) -> Self {
        Self {
            breakpoints: vec![0.0, horizon],
            values: vec![0.0, 0.0],
            role: ScheduleRole::Free,
            id: Some("zero".into()),
        }
    }

    pub fn role(&self) -> ScheduleRole {
        self.role
    }

    pub fn horizon(&self) -> f64 {
        self.breakpoints[self.breakpoints.len() - 1]
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Re-checks the boundary behaviour required by `role`.
    pub fn check_role(&self, horizon: f64) -> Result<()> {
        let tol = 1e-12;
        let at = |s: f64| self.value_unchecked(s);
        let fail = |msg: &str| Err(Error::Schedule(format!("{:?} schedule: {msg}", self.role)));
        match self.role {
            ScheduleRole::Free => Ok(()),
            ScheduleRole::GradientK => {
                if (at(0.0) - 1.0).abs() > tol || at(horizon).abs() > tol {
                    return fail("needs k(0) = 1 and k(T) = 0");
                }
                Ok(())
            }
            ScheduleRole::SecondOrderK => {
                if (at(0.0) - 1.0).abs() > tol {
                    return fail("needs k(0) = 1");
                }
                let half = horizon / 2.0;
                let dead = self
                    .breakpoints
                    .iter()
                    .zip(&self.values)
                    .filter(|(t, _)| **t >= half - tol)
                    .all(|(_, v)| v.abs() <= tol);
                if !dead || at(half).abs() > tol {
                    return fail("needs k(s) = 0 for s >= T/2");
                }
                Ok(())
            }
            ScheduleRole::SecondOrderL => {
                let half = horizon / 2.0;
                let alive = self
                    .breakpoints
                    .iter()
                    .zip(&self.values)
                    .filter(|(t, _)| **t <= half + tol)
                    .all(|(_, v)| (v - 1.0).abs() <= tol);
                if !alive || (at(half) - 1.0).abs() > tol || at(horizon).abs() > tol {
                    return fail("needs l(s) = 1 for s <= T/2 and l(T) = 0");
                }
                Ok(())
            }
        }
    }

    fn segment(&self, s: f64) -> usize {
        // index i with breakpoints[i] <= s < breakpoints[i+1]; the last segment is closed
        let last = self.breakpoints.len() - 2;
        match self.breakpoints.binary_search_by(|b| b.partial_cmp(&s).expect("finite")) {
            Ok(i) => i.min(last),
            Err(i) => (i.saturating_sub(1)).min(last),
        }
    }

    fn value_unchecked(&self, s: f64) -> f64 {
        let i = self.segment(s);
        let (t0, t1) = (self.breakpoints[i], self.breakpoints[i + 1]);
        let (v0, v1) = (self.values[i], self.values[i + 1]);
        v0 + (v1 - v0) * (s - t0) / (t1 - t0)
    }

    /// Value and a.e. derivative at `s`; the right derivative at breakpoints
    /// (left derivative at `T`).
    pub fn eval(&self, s: f64) -> Result<(f64, f64)> {
        let horizon = self.horizon();
        let tol = 1e-12 * horizon.max(1.0);
        if !(s >= -tol && s <= horizon + tol) {
            return Err(Error::Schedule(format!("time {s} outside [0, {horizon}]")));
        }
        let s = s.clamp(0.0, horizon);
        let i = self.segment(s);
        let (t0, t1) = (self.breakpoints[i], self.breakpoints[i + 1]);
        let (v0, v1) = (self.values[i], self.values[i + 1]);
        let slope = (v1 - v0) / (t1 - t0);
        Ok((v0 + slope * (s - t0), slope))
    }

    /// `∫_0^T k̇^2 ds`.
    pub fn energy(&self) -> f64 {
        self.breakpoints
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(t, v)| (v[1] - v[0]).powi(2) / (t[1] - t[0]))
            .sum()
    }

    /// Samples `(value, derivative)` at the left end of each of `steps` grid cells.
    pub fn tabulate(&self, dt: f64, steps: usize) -> Vec<(f64, f64)> {
        (0..steps)
            .map(|i| self.eval((i as f64 * dt).min(self.horizon())).expect("grid inside horizon"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_values_match_closed_forms() {
        assert_eq!(Schedule::default_gradient_k(1.0).eval(0.0).unwrap(), (1.0, -1.0));
        assert_eq!(Schedule::default_second_order_k(1.0).eval(0.75).unwrap(), (0.0, 0.0));
        assert_eq!(Schedule::default_second_order_l(1.0).eval(0.25).unwrap(), (1.0, 0.0));
    }

    #[test]
    fn right_derivative_at_breakpoints() {
        let k = Schedule::default_second_order_k(2.0);
        assert_eq!(k.eval(0.0).unwrap(), (1.0, -1.0));
        assert_eq!(k.eval(1.0).unwrap(), (0.0, 0.0));
        let l = Schedule::default_second_order_l(2.0);
        assert_eq!(l.eval(1.0).unwrap(), (1.0, -1.0));
        // left derivative at the horizon
        assert_eq!(l.eval(2.0).unwrap(), (0.0, -1.0));
    }

    #[test]
    fn out_of_range_time_is_an_error() {
        let k = Schedule::default_gradient_k(1.0);
        assert!(k.eval(1.5).is_err());
        assert!(k.eval(-0.1).is_err());
    }

    #[test]
    fn role_constraints_are_enforced() {
        assert!(Schedule::new(vec![0.0, 1.0], vec![1.0, 0.2], ScheduleRole::GradientK, 1.0).is_err());
        assert!(Schedule::new(vec![0.0, 0.4, 1.0], vec![1.0, 0.0, 0.0], ScheduleRole::SecondOrderK, 1.0).is_ok());
        assert!(Schedule::new(vec![0.0, 0.6, 1.0], vec![1.0, 0.0, 0.0], ScheduleRole::SecondOrderK, 1.0).is_err());
        assert!(Schedule::new(vec![0.0, 0.5, 1.0], vec![1.0, 0.9, 0.0], ScheduleRole::SecondOrderL, 1.0).is_err());
        assert!(Schedule::new(vec![0.0, 1.0], vec![1.0, 0.0], ScheduleRole::GradientK, 2.0).is_err());
    }

    #[test]
    fn energy_of_linear_k() {
        assert!((Schedule::default_gradient_k(2.0).energy() - 0.5).abs() < 1e-15);
        assert!((Schedule::default_second_order_k(1.0).energy() - 2.0).abs() < 1e-15);
    }
}
