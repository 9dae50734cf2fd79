//! Shared fixtures for the benchmarks.

use qlsync_core::dynamics::{sample_initial_state, ModelParams};
use qlsync_core::netgraph::{sample_resource, SampledResource};
use qlsync_core::rng::{sample_stream, Purpose};
use qlsync_core::nalgebra::DVector;
use qlsync_core::{ResourceSpec, C64};

pub use qlsync_core::netgraph::DEFAULT_MEMORY_CAP;

/// One seeded resource sample.
pub fn resource(n_g: usize, n_ql: usize, k: usize, l: usize) -> (ResourceSpec, SampledResource) {
    let spec = ResourceSpec::uniform(n_g, n_ql, k, l, 1);
    let sampled = sample_resource(&spec, 0).expect("benchmark spec is feasible");
    (spec, sampled)
}

/// A seeded random product initial state.
pub fn initial_state(spec: &ResourceSpec) -> DVector<C64> {
    sample_initial_state(spec, &mut sample_stream(1, 0, Purpose::InitialState)).to_vector()
}

pub fn params() -> ModelParams {
    ModelParams::default()
}
