//! Mean-field and finite-fleet simulation, reference tracking and
//! frequency decomposition of reference signals.

mod decompose;
mod meanfield;
mod signal;
mod track;

pub use decompose::{frequency_decompose, low_pass, synthetic_net_load, Decomposition};
pub use meanfield::{
    fleet_response, fleet_step, meanfield_response, meanfield_step, FleetState, KernelSampler,
};
pub use signal::SignalSet;
pub use track::{dc_gain, track, Controller, Plant, TrackingConfig, TrackingMetrics};
