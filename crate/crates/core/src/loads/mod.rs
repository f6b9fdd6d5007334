//! Concrete load models: pool pumps and thermostatically controlled loads.

pub mod pool;
pub mod tcl;

pub use pool::{build_pool_model, PoolModel, PoolModelSpec};
pub use tcl::{
    build_tcl_model, estimate_q0, tcl_trajectory, NatureKernel, Provenance, TclModel,
    TclModelSpec, TclTrajectory,
};
