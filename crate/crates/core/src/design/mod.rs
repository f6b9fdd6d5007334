//! Tilted families of transition matrices.

pub mod family;
pub mod maps;
pub mod optimality;
pub mod tilt;

pub use family::{
    exponential_family, exponential_generator, exponential_kernel, geometric_compose,
    solve_design_ode, DesignFamily, DesignKind, FamilyPoint, NominalModel, Structure,
};
pub use maps::{adjoint_fundamental, adjoint_product, ipd_map, spd_map, DesignMap};
pub use optimality::{aroe_residual, reward_value};
pub use tilt::{
    lift_nature, sampling_rate_diagnostic, tilt, tilt_reduced, tilt_with, NatureStructure,
    NormalizerCache, TiltFunction,
};
