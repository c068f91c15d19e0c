use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Spatial or temporal grids are too small or do not line up.
    #[error("grid error: {0}")]
    Grid(String),

    /// A random clock or path does not cover the requested horizon; the
    /// caller should resample with a longer horizon.
    #[error("horizon not covered: {0}")]
    Horizon(String),

    /// A linear solve or quadrature failed to produce a usable result.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn grid(msg: impl Into<String>) -> Self {
        Error::Grid(msg.into())
    }
}
