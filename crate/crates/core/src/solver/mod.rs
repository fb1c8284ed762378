//! Implicit banded method-of-lines solver for `∂ₜu + Δ²u = 0` on radial fields.

pub mod discretization;
pub mod evolution;
pub mod grid;
pub mod laplacian;

pub use discretization::{build_discretization, Discretization};
pub use evolution::{
    delta_init, delta_init_extrapolated, diagnose, run, run_with, step, Diagnostics, EvolutionState, Schedule,
    StepDiagnostics, Stepper, Trajectory,
};
pub use grid::{Boundary, RadialGrid};
