use thiserror::Error;

/// Errors raised by the model and numerics layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration record could not be turned into a model object.
    #[error("config error: {0}")]
    Config(String),

    /// Two inputs that must share a layout (grids, lengths) do not.
    #[error("argument error: {0}")]
    Argument(String),

    /// An iterative numerical procedure did not reach its tolerance.
    /// `previous` and `last` are the two final iterates that disagreed.
    #[error("numerical error: {message} (last two iterates: {previous:e}, {last:e})")]
    Numerical {
        message: String,
        previous: f64,
        last: f64,
    },

    /// A hard resource cap (series length, grid size) would be exceeded.
    #[error("resource error: {0}")]
    Resource(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
