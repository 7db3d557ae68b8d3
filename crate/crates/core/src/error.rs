use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong while building models or integrating them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("expression parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("point {x} lies outside the tabulated domain [{lo}, {hi}]")]
    Domain { x: f64, lo: f64, hi: f64 },

    #[error("profile `{name}` is not strictly positive on the grid (min {min:e})")]
    NonpositiveProfile { name: String, min: f64 },

    #[error("coefficient `{name}` vanishes or is negative on the grid (min {min:e})")]
    NonpositiveCoefficient { name: String, min: f64 },

    #[error("quadrature did not reach tolerance: value {value:e}, error estimate {error:e}")]
    Quadrature { value: f64, error: f64 },

    #[error("tail contribution estimate {bound:e} exceeds tolerance {tol:e}")]
    TailTruncation { bound: f64, tol: f64 },

    #[error("moment of order {order} diverges for kernel `{kernel}`")]
    DivergentMoment { kernel: String, order: u32 },

    #[error("linear system is ill-conditioned (condition number {condition:e})")]
    SingularSystem { condition: f64 },

    #[error("total jump rate {rate:e} at x = {x} is below threshold")]
    ZeroRate { x: f64, rate: f64 },

    #[error("{nodes} nodes exceed the dense-operator limit of {max}")]
    Allocation { nodes: usize, max: usize },

    #[error("time step {dt:e} exceeds the stability bound {bound:e}")]
    Stability { dt: f64, bound: f64 },

    #[error("steady solve did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("operator is reducible: node {node} is not connected to node 0")]
    ReducibleOperator { node: usize },

    #[error("epsilon {0} is outside (0, 1]")]
    EpsilonRange(f64),

    #[error("focusing-limit order is inconclusive: {reason}")]
    InconclusiveOrder {
        reason: String,
        study: Box<crate::analysis::FocusingStudy>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by bad user input, as opposed to numerical failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::Parse { .. }
                | Error::Config { .. }
                | Error::Domain { .. }
                | Error::NonpositiveProfile { .. }
                | Error::NonpositiveCoefficient { .. }
                | Error::Allocation { .. }
                | Error::Stability { .. }
                | Error::EpsilonRange(_)
                | Error::Io(_)
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
