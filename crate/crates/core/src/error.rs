use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("transition matrix is reducible: servers {unreachable:?} are unreachable from server 0 or cannot reach it")]
    Reducible { unreachable: Vec<usize> },

    #[error("server {server} holds {count} clients, exceeding truncation bound {cap}")]
    Truncation { server: usize, count: u32, cap: u32 },

    #[error("deadlock at t={t}: total event rate is zero")]
    Deadlock { t: f64 },

    #[error("mass drifted by {drift:e} at t={t}; reduce the step size (dt={dt})")]
    StepSize { t: f64, dt: f64, drift: f64 },

    #[error("component {index} became negative ({value:e}) at t={t}; reduce the step size")]
    Negativity { t: f64, index: usize, value: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("no convergence within horizon {horizon}: residual {residual:e}")]
    NonConvergence { horizon: f64, residual: f64 },

    #[error("throughput undefined: mean occupancy is zero with positive arrival rate")]
    UndefinedThroughput,

    #[error("eps={eps} violates eps*sum(mu) < sum(mu - lambda) - gamma ({lhs} >= {rhs})")]
    DriftConstraint { eps: f64, lhs: f64, rhs: f64 },

    #[error("output directory {0} already exists (use --force to overwrite)")]
    OutputExists(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn config(key: &str, message: impl Into<String>) -> Self {
        Error::Config { key: key.to_string(), message: message.into() }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}
