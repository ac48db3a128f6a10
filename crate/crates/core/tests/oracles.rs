//! Closed forms checked against independent numerical oracles.

mod common;

use std::f64::consts::PI;

use jch_core::bands::{isoenergy_contours, surface_band, torus_spectrum, SurfaceCell};
use jch_core::experiments::reports::{dense_torus, max_relative_gap, surface_ring_spectrum, velocity_fd_error};
use jch_core::optics::solve_k2x;
use jch_core::propagator::{evolve, fit_rabi, EvolveOptions};
use jch_core::{
    assemble, build_lattice, dense_spectrum, Boundary, Branch, Complex64, LatticeSpec, Medium, Orientation, Region,
    RegionMap, RegionParams, StateVector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn torus_spectrum_matches_dense_diagonalisation() {
    for orientation in [Orientation::Rotated, Orientation::Unrotated] {
        for detuning in [0.0, -5.27] {
            let m = Medium::new(RegionParams::new(0.0, detuning, 100.0, 1.0), orientation);
            for n in 2..=8 {
                let gap = max_relative_gap(&dense_torus(n, &m).unwrap(), &torus_spectrum(n, n, &m));
                assert!(gap < 1e-9, "{orientation:?} delta {detuning} n {n}: {gap:e}");
            }
        }
    }
}

#[test]
fn source_energy_at_quarter_zone_is_a_torus_eigenvalue() {
    // k = (pi/4, pi/4) is an allowed momentum of the 8 x 8 torus
    let m = Medium::new(RegionParams::new(0.0, 0.0, 100.0, 1.0), Orientation::Rotated);
    let e = m.energy([PI / 4.0, PI / 4.0], Branch::Upper);
    let dense = dense_torus(8, &m).unwrap();
    assert!(dense.iter().any(|v| (v - e).abs() < 1e-9 * e.abs()), "{e}");
}

fn random_lattice(seed: u64, beta: f64) -> (jch_core::SparseHamiltonian, StateVector) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = LatticeSpec::new(7, 7, Orientation::Rotated, Boundary::Open).unwrap();
    let map = RegionMap::new(vec![
        Region::new("a", 0, 3, RegionParams::new(0.0, 0.0, beta, 1.0)),
        Region::new("b", 3, 7, RegionParams::new(0.3, -2.0, beta, 0.7)),
    ]);
    let h = assemble(&build_lattice(spec, map).unwrap()).unwrap();
    let mut psi = StateVector::zeros(h.num_sites());
    for a in &mut psi.amps {
        *a = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
    psi.normalize().unwrap();
    (h, psi)
}

#[test]
fn chebyshev_matches_dense_exponential() {
    for (seed, beta, t) in [(1, 3.0, 7.5), (2, 100.0, 2.0), (3, 0.0, 20.0)] {
        let (h, psi) = random_lattice(seed, beta);
        assert!(h.num_sites() <= 100);
        let out = evolve(&h, &psi, t, &EvolveOptions::default().with_tol(1e-10)).unwrap();
        let exact = common::expm_oracle(&h, &psi, t);
        let err = common::l2_distance(&out.state.amps, &exact);
        assert!(err < 1e-8, "beta {beta} t {t}: {err:e}");
    }
}

#[test]
fn lanczos_matches_dense_exponential() {
    let (h, psi) = random_lattice(4, 3.0);
    let opts = EvolveOptions { method: jch_core::propagator::Method::Lanczos, ..EvolveOptions::default() };
    let out = evolve(&h, &psi, 5.0, &opts).unwrap();
    let err = common::l2_distance(&out.state.amps, &common::expm_oracle(&h, &psi, 5.0));
    assert!(err < 1e-8, "{err:e}");
}

#[test]
fn two_kappa_strip_reflection() {
    let run = common::two_kappa_strip();
    assert!((run.predicted - 0.1815).abs() < 1e-4, "{}", run.predicted);
    assert!((run.measured - run.predicted).abs() < 0.02 * run.predicted, "{} vs {}", run.measured, run.predicted);
    assert!(run.norm_drift < 1e-8);
}

#[test]
fn group_velocity_against_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for orientation in [Orientation::Rotated, Orientation::Unrotated] {
        let m = Medium::new(RegionParams::new(0.0, -5.27, 100.0, 1.0), orientation);
        let mut ratios = Vec::new();
        for _ in 0..1000 {
            let k = [rng.gen_range(-PI..PI), rng.gen_range(-PI..PI)];
            for branch in [Branch::Upper, Branch::Lower] {
                assert!(velocity_fd_error(&m, branch, k, 1e-4) < 1e-6);
                let (a, b) = (velocity_fd_error(&m, branch, k, 2e-2), velocity_fd_error(&m, branch, k, 1e-2));
                if b > 1e-9 {
                    ratios.push(a / b);
                }
            }
        }
        ratios.sort_by(f64::total_cmp);
        let median = ratios[ratios.len() / 2];
        assert!((median - 4.0).abs() < 0.2, "{orientation:?}: median step ratio {median}");
    }
}

#[test]
fn transmitted_wavevector_back_substitutes() {
    let m1 = Medium::new(RegionParams::new(0.0, 0.0, 100.0, 1.0), Orientation::Rotated);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    for _ in 0..500 {
        let k = [rng.gen_range(0.05..PI - 0.05), rng.gen_range(-PI..PI)];
        let m2 = m1.with_detuning(rng.gen_range(-8.0..8.0));
        let e = m1.energy(k, Branch::Upper);
        if let Ok(mode) = solve_k2x(e, k[1], &m2) {
            if let Some(k2x) = mode.real() {
                let back = m2.energy([k2x, k[1]], Branch::Upper).min(m2.energy([k2x, k[1]], Branch::Lower));
                let other = m2.energy([k2x, k[1]], Branch::Upper).max(m2.energy([k2x, k[1]], Branch::Lower));
                let miss = (back - e).abs().min((other - e).abs());
                assert!(miss < 1e-9, "{k:?}: {miss:e}");
                checked += 1;
            }
        }
    }
    assert!(checked > 100, "{checked}");
}

#[test]
fn contour_normals_follow_group_velocity() {
    let m = Medium::new(RegionParams::new(0.0, 0.0, 100.0, 1.0), Orientation::Rotated);
    let (bottom, _) = m.band_range(Branch::Upper);
    for offset in [0.5, 2.0, 4.0] {
        let energy = bottom + offset;
        let contours = isoenergy_contours(energy, &m, Branch::Upper, jch_core::bands::DEFAULT_CONTOUR_GRID);
        assert!(!contours.is_empty());
        for c in &contours {
            for (p, n) in c.points.iter().zip(c.normals()) {
                assert!((m.energy(*p, Branch::Upper) - energy).abs() < 1e-9);
                let v = m.velocity(*p, Branch::Upper);
                let cross = (v[0] * n[1] - v[1] * n[0]) / v[0].hypot(v[1]);
                assert!(cross.abs().asin() < 1e-3, "offset {offset} at {p:?}");
            }
        }
    }
}

#[test]
fn surface_cell_matches_ring_over_full_sweep() {
    let cell = SurfaceCell { kappa: 1.0, omega: 0.0, beta: 100.0, epsilon_surface: -20.0, epsilon_bulk: 0.0, spacing: 1.0 };
    let n = 256;
    let mut analytic: Vec<f64> =
        (0..n).flat_map(|m| surface_band(2.0 * PI * m as f64 / (n as f64 * 2f64.sqrt()), &cell)).collect();
    analytic.sort_by(f64::total_cmp);
    let ring = surface_ring_spectrum(n, &cell);
    let scale = analytic.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let worst = analytic.iter().zip(&ring).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
    assert!(worst < 1e-9, "{worst:e}");
}

#[test]
fn rabi_fit_recovers_detuned_exchange_under_noise() {
    let (omega, eta): (f64, f64) = (0.01, 0.003);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let f = (eta * eta + 4.0 * omega * omega).sqrt();
    let t: Vec<f64> = (0..2000).map(|i| i as f64 * 0.5).collect();
    let p: Vec<f64> = t
        .iter()
        .map(|&t| 2.0 * omega * omega / f.powi(2) * (1.0 - (f * t).cos()) + 1e-6 * rng.gen_range(-1.0..1.0))
        .collect();
    let fit = fit_rabi(&t, &p).unwrap();
    assert!((fit.omega - omega).abs() < 1e-5, "{}", fit.omega);
    assert!((fit.eta - eta).abs() < 1e-4, "{}", fit.eta);
}

/// `|exp(-2ikW) - r^2|` for a photonic slab at frequency `omega_lens`,
/// energy 0, between media at frequency `omega_out`. `width` is counted
/// between the outer sites flanking the slab, which is where the interface
/// amplitude is referenced.
fn round_trip_mismatch(omega_lens: f64, omega_out: f64, width: f64) -> f64 {
    use jch_core::optics::reflection_amplitude;
    let params = |omega| RegionParams::new(omega, -50.0, 0.0, 1.0);
    let lens = Medium::new(params(omega_lens), Orientation::Rotated);
    let out = Medium::new(params(omega_out), Orientation::Rotated);
    let k = solve_k2x(0.0, 0.0, &lens).unwrap().real().unwrap();
    let q = solve_k2x(0.0, 0.0, &out).unwrap().complex(1.0);
    let r = reflection_amplitude(k, q, 1.0, 1.0).unwrap();
    ((-2.0 * Complex64::i() * k * width).exp() - r * r).norm()
}

/// Number of eigenvalues below 0 of the slab embedded in the outer medium.
fn levels_below_zero(omega_lens: f64, omega_out: f64, width: usize) -> usize {
    let pad = 12;
    let nx = 2 * pad + width;
    let spec = LatticeSpec::new(nx, 2, Orientation::Rotated, Boundary::Open).unwrap().with_boundary_y(Boundary::Periodic);
    let p = |omega| RegionParams::new(omega, -50.0, 0.0, 1.0);
    let map = RegionMap::new(vec![
        Region::new("left", 0, pad, p(omega_out)),
        Region::new("lens", pad, pad + width, p(omega_lens)),
        Region::new("right", pad + width, nx, p(omega_out)),
    ]);
    let h = assemble(&build_lattice(spec, map).unwrap()).unwrap();
    // each chain level appears twice (ky = 0 and ky = pi on two rows)
    dense_spectrum(&h).unwrap().values.iter().filter(|&&v| v < 0.0).count()
}

#[test]
fn transmission_poles_sit_at_slab_level_crossings() {
    let (omega_out, width) = (6.0, 10);
    let step = 0.01;
    let grid: Vec<f64> = (0..=560).map(|i| -2.8 + step * i as f64).collect();
    let mismatch: Vec<f64> = grid.iter().map(|&w| round_trip_mismatch(w, omega_out, (width + 1) as f64)).collect();
    let mut poles = Vec::new();
    for i in 1..grid.len() - 1 {
        if mismatch[i] < mismatch[i - 1] && mismatch[i] <= mismatch[i + 1] && mismatch[i] < 0.2 {
            poles.push(grid[i]);
        }
    }
    let mut crossings = Vec::new();
    let counts: Vec<usize> = grid.iter().map(|&w| levels_below_zero(w, omega_out, width)).collect();
    for i in 0..grid.len() - 1 {
        if counts[i] != counts[i + 1] {
            crossings.push(0.5 * (grid[i] + grid[i + 1]));
        }
    }
    assert!(!crossings.is_empty());
    assert_eq!(poles.len(), crossings.len(), "poles {poles:?} crossings {crossings:?}");
    for (p, c) in poles.iter().zip(&crossings) {
        assert!((p - c).abs() <= step, "pole {p} vs crossing {c}");
    }
}

