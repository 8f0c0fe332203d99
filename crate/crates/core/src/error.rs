use thiserror::Error;

/// Errors raised by the channel, metric, QoS, admission and oracle layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected} {what}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("user {user} has zero channel gain")]
    ZeroGain { user: usize },

    #[error("user {user} has zero transmit power; the lower-bound rate is undefined")]
    ZeroPower { user: usize },

    #[error("energy efficiency denominator is zero")]
    ZeroDenominator,

    #[error("allocated power {allocated} W exceeds the budget {budget} W")]
    OverBudget { allocated: f64, budget: f64 },

    #[error("oracle supports at most {max} users, got {actual}")]
    TooManyUsers { max: usize, actual: usize },

    #[error("no feasible grid point")]
    NoFeasibleGridPoint,
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
