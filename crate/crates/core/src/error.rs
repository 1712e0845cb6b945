//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any operation in this crate.
///
/// The variants map onto the failure classes the CLI translates into exit
/// codes: argument/configuration/schema/format/data problems are caller
/// errors, `Resource` means a guard against infeasible computation fired,
/// and `Io`/`Internal` are environmental or bug-level failures.
#[derive(Debug, Error)]
pub enum Error {
    /// A file did not match its expected on-disk format.
    #[error("format error: {0}")]
    Format(String),
    /// Structurally valid input that violates the declared schema.
    #[error("schema error: {0}")]
    Schema(String),
    /// Input values that violate a data invariant (e.g. non-finite entries).
    #[error("data error: {0}")]
    Data(String),
    /// An invalid argument to an in-process operation.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// An invalid combination of configuration values.
    #[error("configuration error: {0}")]
    Config(String),
    /// A resource guard fired (e.g. combinatorial enumeration too large).
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
