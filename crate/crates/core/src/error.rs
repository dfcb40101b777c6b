use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("asymmetric weight on edge {from:?} -> {to:?}: {forward} vs {backward}")]
    AsymmetricWeight { from: Vec<i64>, to: Vec<i64>, forward: f64, backward: f64 },

    #[error("nonpositive weight {weight} on edge {from:?} -> {to:?}")]
    NonpositiveWeight { from: Vec<i64>, to: Vec<i64>, weight: f64 },

    #[error("vertex index {0} out of bounds")]
    VertexOutOfBounds(usize),

    #[error("vertex {0} has zero degree")]
    DegenerateDegree(usize),

    #[error("argument {arg} outside the domain of {what} (lower edge {lower})")]
    OutOfDomain { what: &'static str, arg: f64, lower: f64 },

    #[error("no bracket: target {target} below f(lower) = {at_lower}")]
    NoBracket { target: f64, at_lower: f64 },

    #[error("function is not monotone increasing near x = {0}")]
    NonMonotone(f64),

    #[error("unstable step at t = {t}: {reason}")]
    UnstableStep { t: f64, reason: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
