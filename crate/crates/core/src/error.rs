use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(&'static str),
    /// The receiver bulges intersect (or a transmitter sits inside one).
    #[error("invalid geometry: {0}")]
    Geometry(&'static str),
    /// The data cannot constrain a fit.
    #[error("degenerate data: {0}")]
    DegenerateData(&'static str),
    /// A configuration value violates an invariant.
    #[error("invalid configuration: {0}")]
    Config(&'static str),
}
