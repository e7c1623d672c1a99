use thiserror::Error;

/// Errors raised by the pricing, smile and diagnostics routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("probability {0} is outside the open interval (0, 1)")]
    ProbabilityOutOfRange(f64),

    #[error("strike must be positive and finite, got {0}")]
    NonPositiveStrike(f64),

    #[error("volatility must be nonnegative and finite, got {0}")]
    InvalidVolatility(f64),

    #[error("invalid forward context: {0}")]
    InvalidContext(String),

    #[error("call price {price} is at or below intrinsic value {intrinsic}; no implied volatility exists")]
    PriceBelowIntrinsic { price: f64, intrinsic: f64 },

    #[error("call price {price} is at or above the discounted forward {upper}; no implied volatility exists")]
    PriceAboveForward { price: f64, upper: f64 },

    #[error("implied volatility search did not converge for price {price}")]
    NoConvergence { price: f64 },

    #[error("invalid SVI parameters: {0}")]
    InvalidParams(String),

    #[error("total variance {w} is not positive at log-moneyness {y}")]
    NonPositiveVariance { y: f64, w: f64 },

    #[error("invalid scan grid: {0}")]
    InvalidGrid(String),

    #[error("invalid slope-bound configuration: {0}")]
    InvalidBoundConfig(String),

    #[error("invalid market smile: {0}")]
    InvalidSmile(String),

    #[error("invalid calibration configuration: {0}")]
    InvalidCalibration(String),
}

pub type Result<T> = std::result::Result<T, Error>;
