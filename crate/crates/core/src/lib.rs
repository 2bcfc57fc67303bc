//! Monte Carlo estimators for Feynman-Kac semigroups on Riemannian manifolds
//! and their first and second derivatives, built from Bismut-type
//! integration-by-parts formulas along a geodesic random walk.
//!
//! The main entry points are [`paths::SimConfig`] to describe a problem,
//! [`estimators::run_batch`] to estimate `P_T^V f`, `dP_T^V f`, `L P_T^V f` and
//! `Hess P_T^V f` from one batch of paths, and [`oracles::oracle_for`] for
//! closed-form references on the model spaces.

pub mod config;
pub mod error;
pub mod estimators;
pub mod fields;
pub mod geometry;
pub mod oracles;
pub mod paths;
pub mod rng;
pub mod runner;
pub mod schedules;
pub mod stats;

pub use error::{Error, Result};
pub use estimators::{EstimatorKind, EstimatorReport};
pub use fields::{Drift, FieldSpec, Payoff, Potential};
pub use geometry::{ManifoldModel, ModelKind};
pub use paths::SimConfig;
pub use schedules::{Schedule, ScheduleRole};
