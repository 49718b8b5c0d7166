use thiserror::Error;

/// Errors surfaced by the library. Verification *findings* (mismatch lists)
/// are reported through the report structs instead, so callers can inspect
/// them; `Error` is for contract violations on the way in.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("resource limit exceeded: {0}")]
    Resource(String),
}

pub type Result<T> = std::result::Result<T, Error>;
