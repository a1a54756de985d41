use serde::Serialize;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[serde(tag = "kind", content = "details", rename_all = "snake_case")]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric failure: {what} (interval [{lo}, {hi}], estimate {estimate}, error {error_estimate})")]
    Numeric {
        what: String,
        lo: f64,
        hi: f64,
        estimate: f64,
        error_estimate: f64,
    },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("small set is not small: columnwise minima over C sum to zero")]
    NotSmall,

    #[error("invalid minorization: {0}")]
    InvalidMinorization(String),

    #[error("small set must be a lower set {{0, .., a}} for the monotone coupling")]
    NotLowerSet,

    #[error("kernel is not stochastically monotone: rows {x} and {y} violate dominance at state {a}")]
    NotMonotone { x: usize, y: usize, a: usize },

    #[error("stationary distribution is not unique (rank deficiency)")]
    NonUniqueStationary,

    #[error("drift condition fails at state {state}: PV + phi(V) - V = {margin} > 0 off C")]
    DriftFails { state: usize, margin: f64 },

    #[error(
        "inf of phi(V) off C ({inf_off_c}) does not exceed b ({b}); enlarge C (suggested level set V <= {suggested_level:?})"
    )]
    EnlargeSmallSet {
        b: f64,
        inf_off_c: f64,
        suggested_level: Option<f64>,
    },

    #[error("rate sequence too short: need at least {needed} terms")]
    NeedsLongerSequence { needed: usize },

    #[error("taboo functional diverges: {0}")]
    Divergence(String),

    #[error("Monte Carlo estimate unreliable: {censored} of {n_paths} paths censored")]
    Unreliable { censored: usize, n_paths: usize },

    #[error("visit counter cap {cap} overflowed; raise the cap")]
    CapOverflow { cap: usize },

    #[error("weight domination fails at pair ({x}, {x_prime}): {lhs} > {rhs}")]
    InvalidWeight {
        x: usize,
        x_prime: usize,
        lhs: f64,
        rhs: f64,
    },

    #[error("cannot aggregate reports: {0}")]
    Aggregation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}
