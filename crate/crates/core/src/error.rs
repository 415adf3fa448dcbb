use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration violates a precondition.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Two fields (or a field and a kernel) live on incompatible grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// The geometry has no exit cell but a geodesic field was requested.
    #[error("no exit")]
    NoExit,

    /// The requested time step violates the stability bound of the scheme.
    #[error("CFL violation: dt = {dt}, limit = {limit}")]
    Cfl { dt: f64, limit: f64 },

    /// The density (or level-set function) stopped being finite.
    #[error("non-finite value detected at t = {t} (cell {cell})")]
    NonFinite {
        t: f64,
        cell: usize,
        /// Last finite state, for diagnostics.
        last_good: Option<Box<crate::solver::Snapshot>>,
    },

    /// The reachable set touched the boundary of the computational grid.
    #[error("domain too small: the front reached the grid boundary at t = {t}")]
    DomainTooSmall { t: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors raised while integrating in time, as opposed to
    /// errors caught while validating inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::DomainTooSmall { .. } | Error::Cfl { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
