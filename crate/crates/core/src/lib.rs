//! Numerics for the biharmonic heat equation `∂ₜu + Δ²u = 0` on radially
//! symmetric model geometries.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod acceptance;
pub mod banded;
pub mod bessel;
pub mod counterexample;
pub mod distance_like;
pub mod error;
pub mod euclid_kernel;
pub mod geometry;
pub mod probe;
pub mod quadrature;
pub mod scalar;
pub mod solver;
pub mod weights;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// The numerical core is generic over [`Scalar`]; these fix it to `f64`.
pub type Model = geometry::WarpModel<f64>;
pub type Grid = solver::RadialGrid<f64>;
pub type Disc = solver::Discretization<f64>;
pub type Plan = solver::Schedule<f64>;
pub type Run = solver::Trajectory<f64>;
pub type State = solver::EvolutionState<f64>;
