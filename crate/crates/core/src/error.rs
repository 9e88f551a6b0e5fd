use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter lies outside the set where the formula is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A truncation or enumeration would exceed its configured budget.
    #[error("resource limit exceeded: {what} needs {required}, cap is {cap}")]
    Resource {
        what: &'static str,
        required: u128,
        cap: u128,
    },

    #[error("malformed trajectory: {0}")]
    MalformedTrajectory(String),

    #[error("distribution is not unimodal: {0}")]
    NotUnimodal(String),

    /// Floating-point evaluation lost all significance (underflow of a product).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported field order q = {0}")]
    UnsupportedField(u32),
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
