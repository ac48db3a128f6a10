//! Analytic band reports with their dense-diagonalisation cross-checks.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ExperimentConfig;
use super::{Comparison, Dataset, Outcome};
use crate::bands::{
    band_extrema, band_table, free_space_circle, isoenergy_contours, surface_band, torus_spectrum, ExtremumKind,
    Medium, SurfaceCell,
};
use crate::error::{Error, Result};
use crate::hamiltonian::{assemble, dense_spectrum, dressed_energy, symmetric_eigen, Branch};
use crate::lattice::{build_lattice, Boundary, LatticeSpec, Orientation, RegionMap, RegionParams};

fn orientation_name(o: Orientation) -> &'static str {
    match o {
        Orientation::Rotated => "rotated",
        Orientation::Unrotated => "unrotated",
    }
}

/// Largest relative error of central differences against the analytic
/// group velocity, at step `h`.
pub fn velocity_fd_error(medium: &Medium, branch: Branch, k: [f64; 2], h: f64) -> f64 {
    let v = medium.velocity(k, branch);
    let mut worst: f64 = 0.0;
    let scale = v[0].hypot(v[1]).max(1e-3);
    for axis in 0..2 {
        let mut kp = k;
        let mut km = k;
        kp[axis] += h;
        km[axis] -= h;
        let fd = (medium.energy(kp, branch) - medium.energy(km, branch)) / (2.0 * h);
        worst = worst.max((fd - v[axis]).abs() / scale);
    }
    worst
}

/// Dense spectrum of an `n x n` periodic uniform lattice.
pub fn dense_torus(n: usize, medium: &Medium) -> Result<Vec<f64>> {
    let spec = LatticeSpec::new(n, n, medium.orientation, Boundary::Periodic)?;
    let table = build_lattice(spec, RegionMap::uniform(n, medium.params))?;
    let mut v = dense_spectrum(&assemble(&table)?)?.values;
    v.sort_by(f64::total_cmp);
    Ok(v)
}

pub fn max_relative_gap(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0)).fold(0.0, f64::max)
}

pub fn band_report(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    let b = cfg.bands.as_ref().ok_or_else(|| Error::Config("missing [bands]".into()))?;
    let branch = cfg.convention.branch;
    let params = RegionParams::new(b.omega, cfg.convention.internal(b.detuning), b.beta, b.kappa);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for &o in &b.orientations {
        let name = orientation_name(o);
        let medium = Medium::new(params, o);
        let table = band_table(&medium, b.grid);
        let mut d = Dataset::new(format!("bands_{name}"), &["kx", "ky", "e_minus", "e_plus", "vx_minus", "vy_minus", "vx_plus", "vy_plus"]);
        for s in &table {
            d.push(vec![s.k[0], s.k[1], s.e_minus, s.e_plus, s.v_minus[0], s.v_minus[1], s.v_plus[0], s.v_plus[1]]);
        }
        out.datasets.push(d);

        let (bottom, _) = medium.band_range(branch);
        let mut contours = Dataset::new(format!("contours_{name}"), &["offset", "energy", "contour", "vertex", "kx", "ky", "convex"]);
        let mut circles = Dataset::new(format!("free_space_{name}"), &["radius", "kx", "ky"]);
        for &offset in &b.contour_offsets {
            let energy = bottom + offset;
            for (ci, c) in isoenergy_contours(energy, &medium, branch, b.contour_grid).iter().enumerate() {
                for (vi, p) in c.points.iter().enumerate() {
                    contours.push(vec![offset, energy, ci as f64, vi as f64, p[0], p[1], f64::from(u8::from(c.convex))]);
                }
            }
            if offset > 0.0 {
                for p in free_space_circle(offset, 128) {
                    circles.push(vec![offset, p[0], p[1]]);
                }
            }
        }
        out.datasets.push(contours);
        out.datasets.push(circles);

        let mut ext = Dataset::new(format!("extrema_{name}"), &["kx", "ky", "energy", "kind"]);
        for e in band_extrema(&medium, branch) {
            let kind = match e.kind {
                ExtremumKind::Minimum => -1.0,
                ExtremumKind::Saddle => 0.0,
                ExtremumKind::Maximum => 1.0,
            };
            ext.push(vec![e.k[0], e.k[1], e.energy, kind]);
        }
        out.datasets.push(ext);

        let mut worst: f64 = 0.0;
        let mut vel = Dataset::new(format!("velocity_check_{name}"), &["kx", "ky", "rel_err_h", "rel_err_h2"]);
        for _ in 0..b.velocity_checks {
            let k = [rng.gen_range(-PI..PI), rng.gen_range(-PI..PI)];
            let (e1, e2) = (velocity_fd_error(&medium, branch, k, 1e-4), velocity_fd_error(&medium, branch, k, 5e-5));
            worst = worst.max(e1);
            vel.push(vec![k[0], k[1], e1, e2]);
        }
        out.datasets.push(vel);
        if b.velocity_checks > 0 {
            out.comparisons.push(Comparison::new(format!("velocity_fd_{name}"), 0.0, worst, Some(1e-6)));
        }

        for &n in &b.torus_sizes {
            let gap = max_relative_gap(&dense_torus(n, &medium)?, &torus_spectrum(n, n, &medium));
            out.comparisons.push(Comparison::new(format!("torus_{name}_{n}"), 0.0, gap, Some(1e-9)));
        }
    }
    Ok(out)
}

/// Dense spectrum of a ring of `cells` two-site cells (surface, bulk
/// alternating) with hopping `kappa` between neighbours.
pub fn surface_ring_spectrum(cells: usize, cell: &SurfaceCell) -> Vec<f64> {
    let n = 2 * cells;
    let dim = 2 * n;
    let mut m = nalgebra::DMatrix::<f64>::zeros(dim, dim);
    for s in 0..n {
        let eps = if s % 2 == 0 { cell.epsilon_surface } else { cell.epsilon_bulk };
        m[(2 * s, 2 * s)] = cell.omega;
        m[(2 * s + 1, 2 * s + 1)] = eps;
        m[(2 * s, 2 * s + 1)] = cell.beta;
        m[(2 * s + 1, 2 * s)] = cell.beta;
        let t = (s + 1) % n;
        m[(2 * s, 2 * t)] -= cell.kappa;
        m[(2 * t, 2 * s)] -= cell.kappa;
    }
    let mut v = symmetric_eigen(m).values;
    v.sort_by(f64::total_cmp);
    v
}

pub fn surface_band_report(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    let s = cfg.surface.as_ref().ok_or_else(|| Error::Config("missing [surface]".into()))?;
    let conv = &cfg.convention;
    let eps = |quoted: f64| s.omega - conv.internal(quoted);
    let cell = SurfaceCell {
        kappa: s.kappa,
        omega: s.omega,
        beta: s.beta,
        epsilon_surface: eps(s.surface_detuning),
        epsilon_bulk: eps(s.bulk_detuning),
        spacing: 1.0,
    };
    let bulk = SurfaceCell { epsilon_surface: cell.epsilon_bulk, ..cell };
    let n = s.samples;
    if n < 2 {
        return Err(Error::Config("surface.samples must be at least 2".into()));
    }
    // ky with k_y sqrt(2) d = 2 pi m / n, the momenta of an n-cell ring
    let kys: Vec<f64> = (0..n).map(|m| 2.0 * PI * m as f64 / (n as f64 * 2f64.sqrt())).collect();
    let mut surf = Dataset::new("surface_bands", &["ky", "e0", "e1", "e2", "e3"]);
    let mut blk = Dataset::new("bulk_bands", &["ky", "e0", "e1", "e2", "e3"]);
    let mut analytic = Vec::with_capacity(4 * n);
    let (mut sb, mut bb) = (vec![Vec::new(); 4], vec![Vec::new(); 4]);
    for &ky in &kys {
        let a = surface_band(ky, &cell);
        let c = surface_band(ky, &bulk);
        surf.push(vec![ky, a[0], a[1], a[2], a[3]]);
        blk.push(vec![ky, c[0], c[1], c[2], c[3]]);
        analytic.extend_from_slice(&a);
        for i in 0..4 {
            sb[i].push(a[i]);
            bb[i].push(c[i]);
        }
    }
    analytic.sort_by(f64::total_cmp);
    let ring = surface_ring_spectrum(n, &cell);
    let scale = analytic.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let worst = analytic.iter().zip(&ring).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
    out.comparisons.push(Comparison::new("strip_oracle", 0.0, worst, Some(1e-9)));

    // the surface band is the one centred on the surface site's dressed energy
    let branch = conv.branch;
    let target = dressed_energy(1, s.omega, cell.epsilon_surface, s.beta, branch)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let spread = |v: &[f64]| v.iter().copied().fold(f64::MIN, f64::max) - v.iter().copied().fold(f64::MAX, f64::min);
    let si = (0..4).min_by(|&a, &b| (mean(&sb[a]) - target).abs().total_cmp(&(mean(&sb[b]) - target).abs())).unwrap_or(0);
    let bulk_target = dressed_energy(1, s.omega, cell.epsilon_bulk, s.beta, branch)?;
    let bi = (0..4).min_by(|&a, &b| (mean(&bb[a]) - bulk_target).abs().total_cmp(&(mean(&bb[b]) - bulk_target).abs())).unwrap_or(0);
    let (s_spread, b_spread) = (spread(&sb[si]), spread(&bb[bi]));
    out.comparisons.push(Comparison::at_most("surface_to_bulk_spread", 1.0, s_spread / b_spread));
    let mut d = Dataset::new("band_spread", &["surface_band", "surface_spread", "bulk_band", "bulk_spread"]);
    d.push(vec![si as f64, s_spread, bi as f64, b_spread]);
    out.datasets.extend([surf, blk, d]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_error_shrinks_quadratically() {
        let m = Medium::new(RegionParams::new(0.0, -5.27, 100.0, 1.0), Orientation::Rotated);
        let k = [0.4, -1.1];
        let (a, b) = (velocity_fd_error(&m, Branch::Upper, k, 1e-2), velocity_fd_error(&m, Branch::Upper, k, 5e-3));
        assert!((a / b - 4.0).abs() < 0.1, "{a} {b}");
    }

    #[test]
    fn ring_matches_cell_bands() {
        let cell = SurfaceCell { kappa: 1.0, omega: 0.0, beta: 3.0, epsilon_surface: -1.0, epsilon_bulk: 0.5, spacing: 1.0 };
        let n = 8;
        let mut a: Vec<f64> = (0..n)
            .flat_map(|m| surface_band(2.0 * PI * m as f64 / (n as f64 * 2f64.sqrt()), &cell))
            .collect();
        a.sort_by(f64::total_cmp);
        let r = surface_ring_spectrum(n, &cell);
        assert!(max_relative_gap(&a, &r) < 1e-12);
    }
}
