use thiserror::Error;

/// Errors produced by the geometry, energy and solver layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected n = {expected}, found n = {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("the endpoint coincides with the origin; no geodesic parameters exist")]
    OriginEndpoint,

    #[error("target point does not belong to the {space} space")]
    KindMismatch { space: &'static str },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("evaluation leaves the map domain: {0}")]
    DomainEscape(String),

    #[error("lattice is empty or degenerate: {0}")]
    EmptyLattice(String),

    #[error("node {0} is a boundary node")]
    BoundaryNode(usize),

    #[error("solver did not converge after {sweeps} sweeps (last movement {movement:e})")]
    NonConvergence { sweeps: usize, movement: f64 },

    #[error("test function support violation: {0}")]
    SupportViolation(String),

    #[error("too few node pairs at scale {scale}")]
    TooFewPairs { scale: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
