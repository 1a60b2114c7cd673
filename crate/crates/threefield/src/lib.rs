//! Mixed finite element library for fourth-order problems on 2D triangular
//! meshes.
//!
//! The discretisation treats the scalar solution `u`, its gradient `sigma`,
//! and a vector Lagrange multiplier `phi` as independent unknowns: `u` lives
//! in a discontinuous piecewise-polynomial space and both vector fields in
//! Raviart-Thomas spaces, coupled through a saddle-point system.  On top of
//! the stationary biharmonic solver sits a backward Euler / Newton time
//! integrator for the extended Fisher-Kolmogorov equation
//! `du/dt + gamma*Lap^2 u - Lap u + u^3 - u = f`.
//!
//! Modules follow the pipeline: [`mesh`] and [`quadrature`] provide geometry
//! and integration, [`spaces`] the discrete spaces and interpolation
//! operators, [`assembly`] the sparse operators and block system, [`solver`]
//! the stationary and time-dependent solvers, and [`verify`] manufactured
//! solutions, error norms and convergence reporting.  [`cli`] wires it all
//! into the `threefield` binary.

pub mod assembly;
pub mod cli;
pub mod error;
pub mod mesh;
pub mod quadrature;
pub mod solver;
pub mod spaces;
pub mod verify;

pub use error::{Error, Result};
