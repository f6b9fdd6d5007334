//! Randomized local control for demand dispatch.
//!
//! A fleet of loads each runs a controlled Markov chain whose transition
//! matrix `P_ζ` depends on a scalar signal `ζ` broadcast by the grid
//! operator. This crate builds such families by exponentially tilting a
//! nominal kernel, analyzes the linearized aggregate (mean-field) model,
//! and simulates both the mean-field recursion and finite fleets.
//!
//! Module map:
//!
//! - [`markov`]: finite-state chain algebra (invariant pmf, fundamental
//!   matrix, adjoint, Poisson equation, relative entropy rate).
//! - [`design`]: tilted families, the IPD/SPD design ODE, exponential
//!   families and geometric sampling.
//! - [`linearize`]: state-space linearization, transfer functions,
//!   positive-real certification and spectral densities.
//! - [`loads`]: pool-pump and thermostatically controlled load models.
//! - [`sim`]: mean-field and fleet simulation, tracking, frequency
//!   decomposition of reference signals.
//! - [`io`]: versioned JSON documents and CSV tables.

pub mod design;
pub mod error;
pub mod io;
pub mod linearize;
pub mod loads;
pub mod markov;
pub mod ode;
pub mod sim;

pub use error::{Error, Result};
