//! Synchronization-network quantum-like bits: resource networks, spectra,
//! gate operators, Kuramoto-type linear dynamics and emergent-state analysis.

pub mod dynamics;
pub mod emergent;
pub mod error;
pub mod io;
pub mod linalg;
pub mod netgraph;
pub mod qlgates;
pub mod rng;
pub mod spectra;

pub use error::{Error, Result};
pub use nalgebra;
pub use linalg::{HermitianMatrix, MatrixTag, C64};
pub use netgraph::{sample_resource, CouplingKind, ResourceSpec, SampledResource};
pub use spectra::{full_eigh, product_spectrum, top_k_eigs, KrylovOptions, Spectrum};
