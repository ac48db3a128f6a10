#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::PathBuf;

use jch_core::experiments::ExperimentConfig;
use jch_core::optics::reflection;
use jch_core::propagator::{evolve, region_population, EvolveOptions};
use jch_core::{
    assemble, build_lattice, Boundary, Complex64, CrossEdgePolicy, LatticeSpec, Orientation, Region, RegionMap,
    RegionParams, SparseHamiltonian, StateVector, TransmittedMode,
};
use nalgebra::DMatrix;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&config_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// `exp(-iHt) psi` from the dense Pade exponential of `-iHt`.
pub fn expm_oracle(h: &SparseHamiltonian, psi: &StateVector, t: f64) -> Vec<Complex64> {
    let dense = h.to_dense();
    let n = dense.nrows();
    let a = DMatrix::<Complex64>::from_fn(n, n, |i, j| Complex64::new(0.0, -t * dense[(i, j)]));
    let u = a.exp();
    let v = nalgebra::DVector::from_column_slice(&psi.amps);
    (u * v).iter().copied().collect()
}

pub fn l2_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

/// Reflected population of a narrow photonic packet on a rotated strip with
/// `ny = 2` periodic rows, which is a chain with hopping `2 kappa`.
/// Returns `(closed-form R, measured)`.
pub struct StripRun {
    pub predicted: f64,
    pub measured: f64,
    pub norm_drift: f64,
}

/// `kappa1 = 1, kappa2 = 2`, `k1 = pi/2`, `k2 = pi/3`; the second region's
/// cavity frequency is raised so the energies match. The interface bond
/// carries `kappa1`.
pub fn two_kappa_strip() -> StripRun {
    let (k1, k2) = (PI / 2.0, PI / 3.0);
    let (kappa1, kappa2) = (1.0, 2.0);
    let omega2 = 4.0 * kappa2 * k2.cos() - 4.0 * kappa1 * k1.cos();
    let (nx, interface) = (1600, 800);
    let spec = LatticeSpec::new(nx, 2, Orientation::Rotated, Boundary::Open).unwrap().with_boundary_y(Boundary::Periodic);
    let map = RegionMap::new(vec![
        Region::new("source", 0, interface, RegionParams::new(0.0, 0.0, 0.0, kappa1)),
        Region::new("lens", interface, nx, RegionParams::new(omega2, 0.0, 0.0, kappa2)),
    ])
    .with_cross_edge(CrossEdgePolicy::LowerX);
    let table = build_lattice(spec, map).unwrap();
    let h = assemble(&table).unwrap();

    let sigma: f64 = 0.01;
    let x0 = 400.0;
    let mut psi = StateVector::zeros(table.num_sites());
    for s in 0..table.num_sites() {
        let x = table.position(s)[0];
        let env = (-0.5 * (x - x0).powi(2) * sigma * sigma).exp();
        psi.amps[2 * s] = Complex64::from_polar(env, k1 * x);
    }
    psi.normalize().unwrap();

    let out = evolve(&h, &psi, 180.0, &EvolveOptions::default()).unwrap();
    let source = table.mask_for(&["source"]).unwrap();
    let predicted = reflection(k1, &TransmittedMode::Propagating { k2x: k2 }, kappa1, kappa2).unwrap();
    StripRun { predicted, measured: region_population(&out.state, &source), norm_drift: out.norm_drift }
}
