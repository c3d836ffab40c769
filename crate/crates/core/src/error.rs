use num_complex::Complex64;
use thiserror::Error;

use crate::engine::Diagnostics;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("insufficient samples: need at least 2, got {0}")]
    InsufficientSamples(u64),

    #[error("non-finite integrand value at quadrature node {node}")]
    NonFiniteNode { node: f64 },

    /// A potential was evaluated outside the set where its analytic
    /// continuation is defined. `s` is the path time, when known.
    #[error("domain violation at z = {z} (path time {s:?})")]
    DomainViolation { z: Complex64, s: Option<f64> },

    #[error("singular point x = {x}")]
    SingularPoint { x: f64 },

    #[error("amplitude overflow at z = {z}")]
    AmplitudeOverflow { z: Complex64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(
        "path failure threshold exceeded: {} domain violations and {} overflows out of {} paths",
        .0.domain_violations, .0.overflows, .0.paths_attempted
    )]
    ThresholdExceeded(Diagnostics),

    #[error("oracle integrity error: {0}")]
    OracleIntegrity(String),

    #[error("singular linear system in grid solver")]
    SingularSystem,

    #[error("internal consistency error: {0}")]
    Consistency(String),
}
