use thiserror::Error;

use crate::expr::ExprError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("data error: {0}")]
    Data(String),

    /// Non-finite state; `last_valid_time` is the last sample that was finite.
    #[error("state diverged after t = {last_valid_time}")]
    Divergence { last_valid_time: f64 },

    #[error("epsilon sample at t = {time} lies outside the admissible box or no single cell contains it")]
    Domain { time: f64 },

    /// Projection onto the relation variety failed: the representative
    /// dynamics cannot be continued inside the current class.
    #[error("insolvable in current class at t = {time} (residual {residual:e})")]
    Insolvable { time: f64, residual: f64 },

    /// A class transition was required but the dialectical object has no
    /// matching entry.
    #[error("stranded in class `{class}` at window {window}: no transition applies")]
    Stranded { class: String, window: usize },

    #[error(transparent)]
    Expr(#[from] ExprError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
