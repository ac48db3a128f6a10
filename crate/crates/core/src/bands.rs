//! Analytic Bloch bands of the uniform one-excitation lattice.
//!
//! Momenta are in radians per unit length; the zone is `(-pi/d, pi/d]^2` for
//! both orientations.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Matrix4, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hamiltonian::Branch;
use crate::lattice::{Orientation, RegionParams};

/// A homogeneous region as seen by the band analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Medium {
    pub params: RegionParams,
    pub orientation: Orientation,
    #[serde(default = "one")]
    pub spacing: f64,
}

fn one() -> f64 {
    1.0
}

impl Medium {
    pub fn new(params: RegionParams, orientation: Orientation) -> Self {
        Self { params, orientation, spacing: 1.0 }
    }

    pub fn with_detuning(self, detuning: f64) -> Self {
        Self { params: self.params.with_detuning(detuning), ..self }
    }

    pub fn kernel(&self, k: [f64; 2]) -> f64 {
        hopping_kernel(k, self.orientation, self.params.kappa, self.spacing)
    }

    pub fn energy(&self, k: [f64; 2], branch: Branch) -> f64 {
        bloch_energy(k, self, branch)
    }

    pub fn velocity(&self, k: [f64; 2], branch: Branch) -> [f64; 2] {
        group_velocity(k, self, branch)
    }

    /// Band energy as a function of the kernel value.
    pub fn energy_of_kernel(&self, kernel: f64, branch: Branch) -> f64 {
        let p = &self.params;
        let eps = p.epsilon();
        let root = ((p.detuning - kernel).powi(2) + 4.0 * p.beta * p.beta).sqrt();
        0.5 * (p.omega + eps - kernel) + branch.sign() * 0.5 * root
    }

    /// `dE/dK`, which lies in `[-1, 0]`.
    pub fn energy_slope(&self, kernel: f64, branch: Branch) -> f64 {
        let p = &self.params;
        let a = p.detuning - kernel;
        let root = (a * a + 4.0 * p.beta * p.beta).sqrt();
        if root == 0.0 {
            return -0.5;
        }
        -0.5 - branch.sign() * 0.5 * a / root
    }

    /// Range of the band over the zone.
    pub fn band_range(&self, branch: Branch) -> (f64, f64) {
        let kmax = 4.0 * self.params.kappa;
        let a = self.energy_of_kernel(kmax, branch);
        let b = self.energy_of_kernel(-kmax, branch);
        (a.min(b), a.max(b))
    }
}

pub fn hopping_kernel(k: [f64; 2], orientation: Orientation, kappa: f64, spacing: f64) -> f64 {
    let (x, y) = (k[0] * spacing, k[1] * spacing);
    match orientation {
        Orientation::Rotated => 4.0 * kappa * x.cos() * y.cos(),
        Orientation::Unrotated => 2.0 * kappa * (x.cos() + y.cos()),
    }
}

pub fn kernel_gradient(k: [f64; 2], orientation: Orientation, kappa: f64, spacing: f64) -> [f64; 2] {
    let (x, y) = (k[0] * spacing, k[1] * spacing);
    let s = spacing;
    match orientation {
        Orientation::Rotated => [-4.0 * kappa * s * x.sin() * y.cos(), -4.0 * kappa * s * x.cos() * y.sin()],
        Orientation::Unrotated => [-2.0 * kappa * s * x.sin(), -2.0 * kappa * s * y.sin()],
    }
}

pub fn kernel_hessian(k: [f64; 2], orientation: Orientation, kappa: f64, spacing: f64) -> [[f64; 2]; 2] {
    let (x, y) = (k[0] * spacing, k[1] * spacing);
    let s2 = spacing * spacing;
    match orientation {
        Orientation::Rotated => {
            let c = -4.0 * kappa * s2;
            let off = 4.0 * kappa * s2 * x.sin() * y.sin();
            [[c * x.cos() * y.cos(), off], [off, c * x.cos() * y.cos()]]
        }
        Orientation::Unrotated => [[-2.0 * kappa * s2 * x.cos(), 0.0], [0.0, -2.0 * kappa * s2 * y.cos()]],
    }
}

pub fn bloch_energy(k: [f64; 2], medium: &Medium, branch: Branch) -> f64 {
    medium.energy_of_kernel(medium.kernel(k), branch)
}

pub fn group_velocity(k: [f64; 2], medium: &Medium, branch: Branch) -> [f64; 2] {
    let kernel = medium.kernel(k);
    let slope = medium.energy_slope(kernel, branch);
    let g = kernel_gradient(k, medium.orientation, medium.params.kappa, medium.spacing);
    [slope * g[0], slope * g[1]]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochSample {
    pub k: [f64; 2],
    pub kernel: f64,
    pub e_plus: f64,
    pub e_minus: f64,
    pub v_plus: [f64; 2],
    pub v_minus: [f64; 2],
}

pub fn bloch_sample(k: [f64; 2], medium: &Medium) -> BlochSample {
    BlochSample {
        k,
        kernel: medium.kernel(k),
        e_plus: bloch_energy(k, medium, Branch::Upper),
        e_minus: bloch_energy(k, medium, Branch::Lower),
        v_plus: group_velocity(k, medium, Branch::Upper),
        v_minus: group_velocity(k, medium, Branch::Lower),
    }
}

/// Fold a momentum component into `(-pi/d, pi/d]`.
pub fn wrap_momentum(k: f64, spacing: f64) -> f64 {
    let period = 2.0 * PI / spacing;
    let mut r = (k + PI / spacing).rem_euclid(period) - PI / spacing;
    if r <= -PI / spacing {
        r += period;
    }
    r
}

/// Momenta allowed on a periodic ring of `n` sites.
pub fn ring_momenta(n: usize, spacing: f64) -> Vec<f64> {
    (0..n).map(|m| wrap_momentum(2.0 * PI * m as f64 / (n as f64 * spacing), spacing)).collect()
}

/// Both bands at every momentum of an `nx x ny` torus, sorted ascending.
pub fn torus_spectrum(nx: usize, ny: usize, medium: &Medium) -> Vec<f64> {
    let kx = ring_momenta(nx, medium.spacing);
    let ky = ring_momenta(ny, medium.spacing);
    let mut out = Vec::with_capacity(2 * nx * ny);
    for &a in &kx {
        for &b in &ky {
            out.push(bloch_energy([a, b], medium, Branch::Lower));
            out.push(bloch_energy([a, b], medium, Branch::Upper));
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoContour {
    pub energy: f64,
    pub branch: Branch,
    /// Ordered vertices. Loops that cross the zone boundary are unwrapped,
    /// so consecutive points are always close.
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
    pub convex: bool,
    /// Reciprocal period `2 pi / d`.
    pub period: f64,
}

impl IsoContour {
    /// Unit normals from a chord-length quartic through each vertex and its
    /// two neighbours on either side (fewer at the ends of open contours).
    pub fn normals(&self) -> Vec<[f64; 2]> {
        (0..self.points.len())
            .map(|i| {
                let t = self.tangent(i);
                [t[1], -t[0]]
            })
            .collect()
    }

    fn tangent(&self, i: usize) -> [f64; 2] {
        let n = self.points.len() as i64;
        let reach = 2.min((n - 1) / 2);
        let (lo, hi) = if self.closed {
            (i as i64 - reach, i as i64 + reach)
        } else {
            let lo = (i as i64 - reach).max(0);
            let hi = (lo + 2 * reach).min(n - 1);
            ((hi - 2 * reach).max(0), hi)
        };
        let centre = self.points[i];
        let near = |p: [f64; 2]| -> [f64; 2] {
            [
                p[0] + self.period * ((centre[0] - p[0]) / self.period).round(),
                p[1] + self.period * ((centre[1] - p[1]) / self.period).round(),
            ]
        };
        let nodes: Vec<[f64; 2]> = (lo..=hi).map(|j| near(self.points[j.rem_euclid(n) as usize])).collect();
        let c = (i as i64 - lo) as usize;
        // chord-length parameter, then the derivative of the interpolant at node c
        let mut s = vec![0.0; nodes.len()];
        for j in 1..nodes.len() {
            s[j] = s[j - 1] + dist(nodes[j - 1], nodes[j]);
        }
        let mut d = [0.0; 2];
        for (j, p) in nodes.iter().enumerate() {
            let w = lagrange_slope(&s, j, c);
            d[0] += w * p[0];
            d[1] += w * p[1];
        }
        let norm = d[0].hypot(d[1]);
        [d[0] / norm, d[1] / norm]
    }
}

/// `L_j'(s_c)` for the Lagrange basis on nodes `s`.
fn lagrange_slope(s: &[f64], j: usize, c: usize) -> f64 {
    let mut total = 0.0;
    for l in 0..s.len() {
        if l == j {
            continue;
        }
        let mut term = 1.0 / (s[j] - s[l]);
        for m in 0..s.len() {
            if m != j && m != l {
                term *= (s[c] - s[m]) / (s[j] - s[m]);
            }
        }
        total += term;
    }
    total
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

pub const DEFAULT_CONTOUR_GRID: usize = 512;

/// Level sets `E(k) = energy` over the zone, by marching squares on a
/// `samples x samples` periodic grid with bisection-refined vertices.
///
/// Returns no contours when `energy` lies outside the band.
pub fn isoenergy_contours(energy: f64, medium: &Medium, branch: Branch, samples: usize) -> Vec<IsoContour> {
    let n = samples.max(4);
    let d = medium.spacing;
    let step = 2.0 * PI / (d * n as f64);
    let coord = |i: i64| -PI / d + step * i as f64;
    let f = |kx: f64, ky: f64| bloch_energy([kx, ky], medium, branch) - energy;
    let field: Vec<f64> = (0..n * n).into_par_iter().map(|p| f(coord((p / n) as i64), coord((p % n) as i64))).collect();
    let node = |i: i64, j: i64| field[(i.rem_euclid(n as i64) as usize) * n + j.rem_euclid(n as i64) as usize];
    // A node value of exactly zero is treated as positive.
    let pos = |v: f64| v >= 0.0;

    // Edge key: (i, j, dir) with dir 0 = towards +i, 1 = towards +j.
    type Key = (i64, i64, u8);
    let crossing = |key: Key| -> bool {
        let (i, j, dir) = key;
        let a = node(i, j);
        let b = if dir == 0 { node(i + 1, j) } else { node(i, j + 1) };
        pos(a) != pos(b)
    };
    let canon = |key: Key| -> Key { (key.0.rem_euclid(n as i64), key.1.rem_euclid(n as i64), key.2) };

    // Segments per cell as pairs of edge keys (unwrapped to the cell).
    let mut links: HashMap<Key, Vec<Key>> = HashMap::new();
    for i in 0..n as i64 {
        for j in 0..n as i64 {
            let bottom = (i, j, 0u8);
            let top = (i, j + 1, 0u8);
            let left = (i, j, 1u8);
            let right = (i + 1, j, 1u8);
            let edges: Vec<Key> = [bottom, right, top, left].into_iter().filter(|&e| crossing(e)).collect();
            let pairs: Vec<(Key, Key)> = match edges.len() {
                2 => vec![(edges[0], edges[1])],
                4 => {
                    let centre = f(coord(i) + 0.5 * step, coord(j) + 0.5 * step);
                    // the corner (i, j) shares its sign with the centre: it
                    // is cut off from the rest of the cell
                    if pos(centre) == pos(node(i, j)) {
                        vec![(bottom, right), (top, left)]
                    } else {
                        vec![(bottom, left), (top, right)]
                    }
                }
                _ => vec![],
            };
            for (a, b) in pairs {
                links.entry(canon(a)).or_default().push(canon(b));
                links.entry(canon(b)).or_default().push(canon(a));
            }
        }
    }

    let vertex = |key: Key| -> [f64; 2] {
        let (i, j, dir) = key;
        let (mut lo, mut hi) = (0.0, step);
        let origin = [coord(i), coord(j)];
        let at = |t: f64| if dir == 0 { [origin[0] + t, origin[1]] } else { [origin[0], origin[1] + t] };
        let f0 = node(i, j);
        let mut p = at(0.5 * step);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            p = at(mid);
            let v = f(p[0], p[1]);
            if v.abs() <= 1e-13 || hi - lo < 1e-15 {
                break;
            }
            if pos(v) == pos(f0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        p
    };

    let mut keys: Vec<Key> = links.keys().copied().collect();
    keys.sort();
    let mut visited: HashMap<Key, bool> = HashMap::new();
    let mut contours = Vec::new();
    for start in keys {
        if visited.contains_key(&start) {
            continue;
        }
        // walk to one end of an open chain, or around a loop
        let mut chain = vec![start];
        visited.insert(start, true);
        let mut closed = false;
        loop {
            let cur = *chain.last().unwrap();
            let next = links[&cur].iter().copied().find(|k| !visited.contains_key(k));
            match next {
                Some(k) => {
                    visited.insert(k, true);
                    chain.push(k);
                }
                None => {
                    if chain.len() > 2 && links[&cur].contains(&start) {
                        closed = true;
                    }
                    break;
                }
            }
        }
        if !closed {
            // extend backwards from the start
            loop {
                let cur = chain[0];
                match links[&cur].iter().copied().find(|k| !visited.contains_key(k)) {
                    Some(k) => {
                        visited.insert(k, true);
                        chain.insert(0, k);
                    }
                    None => break,
                }
            }
        }
        let period = 2.0 * PI / d;
        let mut points: Vec<[f64; 2]> = Vec::with_capacity(chain.len());
        for key in chain {
            let mut p = vertex(key);
            if let Some(prev) = points.last() {
                for c in 0..2 {
                    p[c] += period * ((prev[c] - p[c]) / period).round();
                }
            }
            points.push(p);
        }
        let convex = closed && is_convex(&points);
        contours.push(IsoContour { energy, branch, points, closed, convex, period });
    }
    contours
}

/// Cross-product sign consistency along a closed polyline.
pub fn is_convex(points: &[[f64; 2]]) -> bool {
    let n = points.len();
    if n < 3 {
        return true;
    }
    let mut sign = 0.0f64;
    for i in 0..n {
        let a = points[i];
        let b = points[(i + 1) % n];
        let c = points[(i + 2) % n];
        let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
        if cross.abs() <= 1e-9 {
            continue;
        }
        if sign == 0.0 {
            sign = cross.signum();
        } else if cross.signum() != sign {
            return false;
        }
    }
    true
}

/// Points on the circle `|k| = radius`, for comparing contours against
/// free-space propagation.
pub fn free_space_circle(radius: f64, samples: usize) -> Vec<[f64; 2]> {
    (0..samples)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / samples as f64;
            [radius * t.cos(), radius * t.sin()]
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremumKind {
    Minimum,
    Maximum,
    Saddle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandExtremum {
    pub k: [f64; 2],
    pub energy: f64,
    pub kind: ExtremumKind,
}

/// Stationary points of one band, located by Newton refinement of
/// `grad K = 0` seeded from local minima of `|grad K|` on a coarse grid.
pub fn band_extrema(medium: &Medium, branch: Branch) -> Vec<BandExtremum> {
    let (o, kappa, d) = (medium.orientation, medium.params.kappa, medium.spacing);
    let n = 64usize;
    let step = 2.0 * PI / (d * n as f64);
    let coord = |i: i64| -PI / d + step * i.rem_euclid(n as i64) as f64;
    let grad_norm = |i: i64, j: i64| {
        let g = kernel_gradient([coord(i), coord(j)], o, kappa, d);
        g[0].hypot(g[1])
    };
    let mut found: Vec<BandExtremum> = Vec::new();
    for i in 0..n as i64 {
        for j in 0..n as i64 {
            let g = grad_norm(i, j);
            let is_local_min = (-1..=1)
                .flat_map(|a| (-1..=1).map(move |b| (a, b)))
                .filter(|&(a, b)| (a, b) != (0, 0))
                .all(|(a, b)| g <= grad_norm(i + a, j + b));
            if !is_local_min {
                continue;
            }
            let mut k = [coord(i), coord(j)];
            for _ in 0..50 {
                let gr = kernel_gradient(k, o, kappa, d);
                let h = kernel_hessian(k, o, kappa, d);
                let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
                if det.abs() < 1e-300 {
                    break;
                }
                let dx = (h[1][1] * gr[0] - h[0][1] * gr[1]) / det;
                let dy = (-h[1][0] * gr[0] + h[0][0] * gr[1]) / det;
                k = [k[0] - dx, k[1] - dy];
                if dx.hypot(dy) < 1e-15 {
                    break;
                }
            }
            let gr = kernel_gradient(k, o, kappa, d);
            if gr[0].hypot(gr[1]) > 1e-10 * kappa * d {
                continue;
            }
            let k = [wrap_momentum(k[0], d), wrap_momentum(k[1], d)];
            if found.iter().any(|e| {
                let dx = wrap_momentum(e.k[0] - k[0], d);
                let dy = wrap_momentum(e.k[1] - k[1], d);
                dx.hypot(dy) < 1e-6
            }) {
                continue;
            }
            let h = kernel_hessian(k, o, kappa, d);
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            // E decreases with K, so a kernel maximum is a band minimum
            let kind = if det < 0.0 {
                ExtremumKind::Saddle
            } else if h[0][0] < 0.0 {
                ExtremumKind::Minimum
            } else {
                ExtremumKind::Maximum
            };
            found.push(BandExtremum { k, energy: bloch_energy(k, medium, branch), kind });
        }
    }
    found.sort_by(|a, b| a.energy.total_cmp(&b.energy).then(a.k[0].total_cmp(&b.k[0])).then(a.k[1].total_cmp(&b.k[1])));
    found
}

/// Parameters of the two-site surface cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCell {
    pub kappa: f64,
    pub omega: f64,
    pub beta: f64,
    pub epsilon_surface: f64,
    pub epsilon_bulk: f64,
    #[serde(default = "one")]
    pub spacing: f64,
}

/// Ascending eigenvalues of the Bloch Hamiltonian of a surface cell made of
/// two adjacent sites along the surface.
pub fn surface_band(ky: f64, cell: &SurfaceCell) -> [f64; 4] {
    let phase = Complex64::from_polar(1.0, ky * 2f64.sqrt() * cell.spacing);
    let t = -(Complex64::new(1.0, 0.0) + phase) * cell.kappa;
    let z = Complex64::new(0.0, 0.0);
    let r = |x: f64| Complex64::new(x, 0.0);
    let m = Matrix4::new(
        r(cell.omega), r(cell.beta), t, z,
        r(cell.beta), r(cell.epsilon_surface), z, z,
        t.conj(), z, r(cell.omega), r(cell.beta),
        z, z, r(cell.beta), r(cell.epsilon_bulk),
    );
    let eig = SymmetricEigen::new(m);
    let mut v = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2], eig.eigenvalues[3]];
    v.sort_by(f64::total_cmp);
    v
}

/// Band table over an `n x n` grid: `kx ky e_minus e_plus vx_minus vy_minus vx_plus vy_plus`.
pub fn band_table(medium: &Medium, n: usize) -> Vec<BlochSample> {
    let d = medium.spacing;
    let step = 2.0 * PI / (d * n as f64);
    (0..n * n)
        .into_par_iter()
        .map(|p| {
            let k = [-PI / d + step * ((p / n) as f64 + 1.0), -PI / d + step * ((p % n) as f64 + 1.0)];
            bloch_sample(k, medium)
        })
        .collect()
}

pub fn write_band_table<W: Write>(mut w: W, samples: &[BlochSample]) -> Result<()> {
    writeln!(w, "kx\tky\te_minus\te_plus\tvx_minus\tvy_minus\tvx_plus\tvy_plus")?;
    for s in samples {
        writeln!(
            w,
            "{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}",
            s.k[0], s.k[1], s.e_minus, s.e_plus, s.v_minus[0], s.v_minus[1], s.v_plus[0], s.v_plus[1]
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::dressed_energy;
    use std::f64::consts::FRAC_PI_2;

    fn medium(o: Orientation, detuning: f64, beta: f64) -> Medium {
        Medium::new(RegionParams::new(0.0, detuning, beta, 1.0), o)
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(hopping_kernel([0.0, 0.0], Orientation::Rotated, 1.0, 1.0), 4.0);
        assert!((hopping_kernel([PI, 0.0], Orientation::Rotated, 1.0, 1.0) + 4.0).abs() < 1e-15);
        assert!(hopping_kernel([FRAC_PI_2, FRAC_PI_2], Orientation::Unrotated, 1.0, 1.0).abs() < 1e-15);
    }

    #[test]
    fn decoupled_cavity_limit() {
        let m = Medium::new(RegionParams::new(3.0, 1.5, 2.0, 1e-300), Orientation::Rotated);
        for br in [Branch::Upper, Branch::Lower] {
            let e = bloch_energy([0.3, 1.1], &m, br);
            let jc = dressed_energy(1, 3.0, 1.5, 2.0, br).unwrap();
            assert!((e - jc).abs() < 1e-14);
        }
    }

    #[test]
    fn kernel_zero_gives_bare_jc() {
        let m = medium(Orientation::Unrotated, 2.0, 1.0);
        let k = [FRAC_PI_2, FRAC_PI_2];
        let p = m.params;
        let base = 0.5 * (p.omega + p.epsilon());
        let half = 0.5 * (p.detuning.powi(2) + 4.0).sqrt();
        assert!((bloch_energy(k, &m, Branch::Upper) - (base + half)).abs() < 1e-14);
        assert!((bloch_energy(k, &m, Branch::Lower) - (base - half)).abs() < 1e-14);
    }

    #[test]
    fn velocity_vanishes_at_extremum_and_strong_coupling_limit() {
        let m = medium(Orientation::Rotated, 0.0, 100.0);
        assert_eq!(group_velocity([0.0, 0.0], &m, Branch::Upper), [0.0, 0.0]);
        let strong = medium(Orientation::Rotated, 0.3, 1e9);
        let k = [0.4, -1.2];
        let g = kernel_gradient(k, Orientation::Rotated, 1.0, 1.0);
        for br in [Branch::Upper, Branch::Lower] {
            let v = group_velocity(k, &strong, br);
            assert!((v[0] + 0.5 * g[0]).abs() < 1e-8 && (v[1] + 0.5 * g[1]).abs() < 1e-8);
        }
    }

    #[test]
    fn extrema_of_rotated_lattice() {
        let m = medium(Orientation::Rotated, 0.0, 100.0);
        let ex = band_extrema(&m, Branch::Upper);
        let count = |kind| ex.iter().filter(|e| e.kind == kind).count();
        // minima at (0,0), (pi,pi); maxima at (0,pi), (pi,0); saddles at (±pi/2, ±pi/2)
        assert_eq!(count(ExtremumKind::Minimum), 2);
        assert_eq!(count(ExtremumKind::Maximum), 2);
        assert_eq!(count(ExtremumKind::Saddle), 4);
        let (lo, hi) = m.band_range(Branch::Upper);
        assert!((ex[0].energy - lo).abs() < 1e-12 && (ex.last().unwrap().energy - hi).abs() < 1e-12);
    }

    #[test]
    fn contour_near_band_bottom_is_small_convex_loop() {
        let m = medium(Orientation::Rotated, 0.0, 100.0);
        let (lo, _) = m.band_range(Branch::Upper);
        let cs = isoenergy_contours(lo + 0.05, &m, Branch::Upper, 128);
        // one loop around the zone centre, one around the corner
        assert_eq!(cs.len(), 2);
        for c in &cs {
            assert!(c.closed && c.convex);
            for p in &c.points {
                assert!((bloch_energy(*p, &m, Branch::Upper) - c.energy).abs() <= 1e-8);
            }
        }
        assert!(isoenergy_contours(lo - 0.1, &m, Branch::Upper, 64).is_empty());
    }

    #[test]
    fn convexity_of_polygons() {
        let square = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert!(is_convex(&square));
        let dart = [[0.0, 0.0], [2.0, 1.0], [0.0, 2.0], [0.5, 1.0]];
        assert!(!is_convex(&dart));
    }

    #[test]
    fn surface_band_limits() {
        let cell = SurfaceCell { kappa: 1.0, omega: 0.5, beta: 0.0, epsilon_surface: -3.0, epsilon_bulk: 7.0, spacing: 1.0 };
        let ky = 0.37;
        let mag = (Complex64::new(1.0, 0.0) + Complex64::from_polar(1.0, ky * 2f64.sqrt())).norm();
        let mut want = [-3.0, 7.0, 0.5 - mag, 0.5 + mag];
        want.sort_by(f64::total_cmp);
        let got = surface_band(ky, &cell);
        for (a, b) in got.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        let cell = SurfaceCell { beta: 2.0, ..cell };
        let got = surface_band(PI / 2f64.sqrt(), &cell);
        let mut want = [
            dressed_energy(1, 0.5, -3.0, 2.0, Branch::Lower).unwrap(),
            dressed_energy(1, 0.5, -3.0, 2.0, Branch::Upper).unwrap(),
            dressed_energy(1, 0.5, 7.0, 2.0, Branch::Lower).unwrap(),
            dressed_energy(1, 0.5, 7.0, 2.0, Branch::Upper).unwrap(),
        ];
        want.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn momentum_wrapping() {
        assert_eq!(wrap_momentum(PI, 1.0), PI);
        assert!((wrap_momentum(-PI, 1.0) - PI).abs() < 1e-15);
        assert!((wrap_momentum(3.0 * PI / 2.0, 1.0) + PI / 2.0).abs() < 1e-15);
        assert_eq!(ring_momenta(4, 1.0), vec![0.0, FRAC_PI_2, PI, -FRAC_PI_2]);
    }

    #[test]
    fn band_table_header() {
        let m = medium(Orientation::Rotated, 0.0, 1.0);
        let t = band_table(&m, 4);
        let mut buf = Vec::new();
        write_band_table(&mut buf, &t).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 17);
        assert!(s.starts_with("kx\tky\te_minus"));
    }
}
