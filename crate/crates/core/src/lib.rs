//! Single-excitation Jaynes-Cummings-Hubbard cavity arrays: lattice geometry,
//! sparse Hamiltonians, analytic Bloch bands, interface optics and
//! time-domain propagation, plus the config-driven experiment runner.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bands;
pub mod error;
pub mod experiments;
pub mod hamiltonian;
pub mod lattice;
pub mod optics;
pub mod propagator;

pub use bands::{BlochSample, IsoContour, Medium};
pub use error::{Error, Result};
pub use hamiltonian::{assemble, dense_spectrum, dressed_energy, mixing_angle, Branch, SparseHamiltonian};
pub use lattice::{
    build_lattice, Boundary, CrossEdgePolicy, GrinBranch, GrinProfile, GrinSpec, LatticeSpec, Orientation, Region,
    RegionMap, RegionParams, SiteTable,
};
pub use num_complex::Complex64;
pub use optics::{MomentumDistribution, ScatteringSolution, TransmittedMode};
pub use propagator::{EvolutionResult, StateVector, WavePacketSpec};

/// Size the global worker pool. Fails if the pool was already built.
pub fn set_threads(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}
