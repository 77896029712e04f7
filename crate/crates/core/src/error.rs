use thiserror::Error;

/// Errors raised by the pricing library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("weight variance {sigma_w_sq:e} violates sigma_w^2 > v_max*dt/2 = {bound:e}")]
    WeightTooNarrow { sigma_w_sq: f64, bound: f64 },

    #[error("variance matching infeasible: var[X_T] = {variance:e} <= v_max*T/2 = {bound:e}")]
    InfeasibleVarianceMatch { variance: f64, bound: f64 },

    #[error("matrix exponential action did not converge: {0}")]
    ExpmNonConvergence(String),

    #[error("weights of coefficients and moments differ")]
    WeightMismatch,

    #[error("index sets are incompatible: {0}")]
    IndexMismatch(String),

    #[error("price {price:e} outside no-arbitrage bounds [{lower:e}, {upper:e}]")]
    PriceOutOfBounds { price: f64, lower: f64, upper: f64 },

    #[error("numerical integration failed: {0}")]
    IntegrationFailure(String),

    #[error("quadrature with {points} points per dimension cannot resolve order {order}")]
    InsufficientQuadrature { points: usize, order: usize },

    #[error("dimension {0} exceeds the supported maximum of 6")]
    DimensionTooLarge(usize),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
