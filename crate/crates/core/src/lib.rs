//! Numerical toolkit for a three-component oxygen, phytoplankton and
//! zooplankton model: steady states and their stability, Hopf and saddle-node
//! thresholds, slow-fast geometry of the critical manifold, one-dimensional
//! reaction-diffusion simulation, Turing analysis and oxygen-minimum-zone
//! diagnostics.

pub mod bifurcation;
pub mod diagnostics;
pub mod equilibria;
pub mod error;
pub mod model;
pub mod newton;
pub mod ode;
pub mod parallel;
pub mod pde;
pub mod poly;
pub mod slowfast;
pub mod turing;

pub use error::{Error, Result};
pub use model::{eval_fast_jacobian, eval_jacobian, eval_rhs, Jacobian3, ModelParams, State};
pub use parallel::Execution;
