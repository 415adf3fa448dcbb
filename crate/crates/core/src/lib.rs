//! Finite-volume simulation of macroscopic crowd dynamics.
//!
//! Densities obey `rho_t + div(rho V) = 0` on a uniform Cartesian grid, with
//! the velocity given by one of five laws: a local speed law, a nonlocal
//! speed law `v(rho * eta)`, a nonlocal route choice `v(rho)(nu + I(rho))`,
//! and two laws coupled to discrete agents (a leader and herding dogs).
//! The [`confinement`] module evolves reachable sets of the differential
//! inclusion `x' in v(x, xi(t)) + B(0, c)` and checks when an agent can keep
//! a population confined.

pub mod cli;
pub mod confinement;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod functionals;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod nonlocal;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{CellClass, DensityField, Grid2D, Rect, RoomGeometry, ScalarField, VectorField};
pub use solver::{run_scenario, RunResult, Scenario, SchemeParams, SimState, Simulation};

/// Size the global thread pool from `CROWD_THREADS`, if set. Later calls
/// are no-ops.
pub fn init_threads() {
    if let Some(n) = std::env::var("CROWD_THREADS").ok().and_then(|s| s.trim().parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}
