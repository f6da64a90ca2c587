use alloc::string::String;

/// Errors raised by the core library.
///
/// The variants mirror the failure classes of the pipeline so that a driver
/// can map them onto exit codes without inspecting messages.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("argument error: {0}")]
    Argument(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("infeasible inclusion: {0}")]
    Infeasible(String),
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("solver error: {0}")]
    Solver(String),
}

impl Error {
    /// True for errors caused by bad input rather than numerical breakdown.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T> = core::result::Result<T, Error>;
