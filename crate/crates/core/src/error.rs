use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("geometry: {0}")]
    Geometry(String),

    #[error("chart validity region left at {point:?}")]
    OutsideChart { point: Vec<f64> },

    #[error("curvature data unavailable: {0}")]
    CurvatureUnavailable(String),

    #[error("schedule: {0}")]
    Schedule(String),

    #[error("non-finite state at step {step}: {what}")]
    NonFinite { step: usize, what: &'static str },

    #[error("position norm {norm:.3e} exceeded bound {bound:.3e} at step {step}")]
    Explosion { step: usize, norm: f64, bound: f64 },

    #[error("damped transport condition number {cond:.3e} exceeded bound {bound:.3e} at step {step}")]
    IllConditioned { step: usize, cond: f64, bound: f64 },

    #[error("potential {value} below declared lower bound {v_min}")]
    PotentialBelowBound { value: f64, v_min: f64 },

    #[error("no closed-form oracle: {0}")]
    OracleMissing(String),

    #[error("oracle truncation error bound {bound:.3e} exceeds tolerance {tol:.3e}")]
    OracleTruncation { bound: f64, tol: f64 },

    #[error("unsupported payoff for this oracle: {0}")]
    UnsupportedPayoff(String),

    #[error("{failed} of {total} paths failed (limit {limit}); first failure: {first}")]
    PathFailures { failed: u64, total: u64, limit: f64, first: String },

    #[error("tolerance check failed: {0}")]
    Tolerance(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short label used when tallying per-path failures.
    pub fn failure_kind(&self) -> &'static str {
        match self {
            Error::NonFinite { .. } => "non_finite",
            Error::Explosion { .. } => "explosion",
            Error::IllConditioned { .. } => "ill_conditioned",
            Error::OutsideChart { .. } => "outside_chart",
            Error::PotentialBelowBound { .. } => "potential_below_bound",
            _ => "other",
        }
    }
}
