//! Solver and numerical verifier for infinite-horizon discounted stochastic
//! control problems whose coefficients may be discontinuous in the state.
//!
//! The pipeline is: define a [`ControlProblem`], solve the HJB equation on a
//! grid with [`solve_hjb`], read off the argmin feedback, simulate the closed
//! loop with [`estimate_cost`], and certify the pair with the checks in
//! [`verify`].

pub mod artifacts;
pub mod builtin;
pub mod coeff;
pub mod error;
pub mod grid;
pub mod problem;
pub mod rng;
pub mod sde;
pub mod solver;
pub mod tridiag;
pub mod verify;

pub use coeff::CoefficientExpr;
pub use error::{ArtifactError, ModelError, SimError, SolveError, VerifyError};
pub use grid::{FeedbackPolicy, SpatialGrid, ValueField};
pub use problem::{make_advertising_problem, AdvertisingParams, ControlGrid, ControlProblem, ControlSet};
pub use sde::{estimate_cost, estimate_exit_time, simulate_path, ControlLaw, CostEstimate, SamplePath, SimConfig};
pub use solver::{solve_hjb, SolveOptions, SolveReport, Solution};
pub use verify::{run_pipeline, PipelineConfig, PipelineOutput, ReportEntry, Tolerances, VerificationReport, Verifier};
