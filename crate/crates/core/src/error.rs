use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("inertia matrix is singular or not positive definite at the given configuration")]
    SingularInertia,

    #[error("integration diverged: non-finite state after t = {last_valid_time} s")]
    Divergence { last_valid_time: f64 },

    #[error("no kinetic-energy minimum found before t_max = {t_max} s")]
    SearchHorizon { t_max: f64 },

    #[error("start configuration is an equilibrium (gradient norm {gradient_norm:e})")]
    DegenerateStart { gradient_norm: f64 },

    #[error("energy {energy} J is not reachable along the requested direction (max {max_reachable} J)")]
    UnreachableEnergy { energy: f64, max_reachable: f64 },

    #[error("continuation broke down while targeting {target} J; last converged energy {last_good} J")]
    ContinuationBreakdown { target: f64, last_good: f64 },

    #[error("polynomial fit of degree {degree} is rank deficient; try a lower degree")]
    IllConditionedFit { degree: usize },

    #[error("vector is not unit norm (norm = {norm})")]
    NotUnitNorm { norm: f64 },

    #[error("model error: {0}")]
    Model(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("internal solver error: {0}")]
    Solver(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(String),

    #[error("scenario `{scenario}`: {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },
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

pub type Result<T> = std::result::Result<T, Error>;
