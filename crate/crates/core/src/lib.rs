//! Alert-Panic-Control model of crowd behavior during an evacuation.
//!
//! The crate has three layers:
//!
//! * [`kinetics`] holds the local transition rates between behaviors.
//! * [`ode`] integrates the spatially homogeneous model.
//! * [`grid`] and [`solver`] hold the 2D finite-volume discretization.
//!
//! [`scenario`] parses run descriptions. [`io`] reads and writes the CSV and
//! image outputs. [`validate`] runs the invariant checks.

pub mod grid;
pub mod io;
pub mod kinetics;
pub mod ode;
pub mod scenario;
pub mod solver;
pub mod validate;

pub use grid::{DirectionField, GeometrySpec, Grid2D};
pub use kinetics::{BehaviorParams, Ramp, TransitionSchedule};
pub use ode::{integrate, Method, OdeRun, OdeTrajectory};
pub use scenario::ScenarioConfig;
pub use solver::{run, DensityField, Problem, RunOutput, StepControl, TransportParams};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Scenario(#[from] scenario::ScenarioError),
    #[error(transparent)]
    Solver(#[from] solver::SolverError),
}

/// Builds and runs a scenario to `cfg.control.t_end`.
pub fn simulate(cfg: &ScenarioConfig) -> Result<(Problem, RunOutput), Error> {
    let (problem, initial) = cfg.build()?;
    let out = run(&problem, initial, &cfg.control)?;
    Ok((problem, out))
}
