//! Tower-exponential reals: `± exp^h(y)` and reciprocals, with directed
//! rounding, for scales far beyond `f64` range.

mod interval;
pub mod round;
mod tower;

pub use interval::TowerInterval;
pub use round::Rounding;
pub use tower::{Sign, TowerReal, LN_THRESHOLD, MAX_HEIGHT, THRESHOLD};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TowerError {
    #[error("non-finite input {0}")]
    NonFinite(f64),
    #[error("negative mantissa {0} at height zero")]
    NegativeMantissa(f64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("logarithm of a non-positive value")]
    LogOfNonPositive,
    #[error("power of a negative base")]
    NegativeBase,
    #[error("zero raised to a non-positive power")]
    ZeroToNonPositive,
    #[error("logarithm base {0} must be finite and greater than one")]
    BadLogBase(f64),
    #[error("iterated logarithm left its domain at iteration {iteration}")]
    IterLogDomain { iteration: u32 },
    #[error("value is outside the f64 range")]
    NotRepresentable,
    #[error("cannot parse tower literal {0:?}")]
    Parse(String),
}
