//! Shared fixtures for the benchmarks.

use jch_core::{
    assemble, build_lattice, Boundary, Complex64, LatticeSpec, Orientation, Region, RegionMap, RegionParams,
    SparseHamiltonian, StateVector,
};

/// Rotated `n x n` lattice with a detuned slab in the middle third.
pub fn slab_lattice(n: usize) -> SparseHamiltonian {
    let spec = LatticeSpec::new(n, n, Orientation::Rotated, Boundary::Open).unwrap();
    let third = n / 3;
    let p = |d| RegionParams::new(0.0, d, 100.0, 1.0);
    let map = RegionMap::new(vec![
        Region::new("source", 0, third, p(0.0)),
        Region::new("lens", third, 2 * third, p(-5.27)),
        Region::new("image", 2 * third, n, p(0.0)),
    ]);
    assemble(&build_lattice(spec, map).unwrap()).unwrap()
}

/// Deterministic normalised state with support on every component.
pub fn spread_state(dim_sites: usize) -> StateVector {
    let mut psi = StateVector::zeros(dim_sites);
    for (i, a) in psi.amps.iter_mut().enumerate() {
        let x = i as f64;
        *a = Complex64::new((0.37 * x).sin(), (0.11 * x).cos());
    }
    psi.normalize().unwrap();
    psi
}
