use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operation requires a finite measure, got infinite total mass")]
    InfiniteMass,

    #[error("value {value} lies below the range of the growth transform (infimum {infimum})")]
    Domain { value: f64, infimum: f64 },

    #[error("adaptive quadrature did not converge on [{a}, {b}] (max depth {depth})")]
    Quadrature { a: f64, b: f64, depth: u32 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("construction error: {0}")]
    Construction(String),

    #[error("scheme produced a nonpositive or non-finite state x = {value} at t = {time}")]
    NonPositiveState { time: f64, value: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
