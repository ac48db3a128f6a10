//! Time-domain engine: wave-packet and well-eigenstate preparation,
//! Chebyshev and Lanczos propagation, population measurements and fits.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{atom_index, dense_spectrum_capped, photon_index, symmetric_eigen, SparseHamiltonian, DEFAULT_DENSE_CAP};
use crate::lattice::SiteTable;
use crate::optics::MomentumDistribution;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const PAR_MIN: usize = 8192;

/// One-excitation amplitudes in the interleaved basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub amps: Vec<Complex64>,
}

impl StateVector {
    pub fn zeros(num_sites: usize) -> Self {
        Self { amps: vec![ZERO; 2 * num_sites] }
    }

    pub fn basis(num_sites: usize, index: usize) -> Self {
        let mut s = Self::zeros(num_sites);
        s.amps[index] = Complex64::new(1.0, 0.0);
        s
    }

    pub fn num_sites(&self) -> usize {
        self.amps.len() / 2
    }

    pub fn photon(&self, site: usize) -> Complex64 {
        self.amps[photon_index(site)]
    }

    pub fn atom(&self, site: usize) -> Complex64 {
        self.amps[atom_index(site)]
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amps)
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if !(n > 0.0) {
            return Err(Error::InvalidArgument("cannot normalise a zero state".into()));
        }
        self.amps.iter_mut().for_each(|a| *a /= n);
        Ok(())
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    /// `|c_r|^2 + |d_r|^2` per site.
    pub fn site_populations(&self) -> Vec<f64> {
        self.amps.chunks_exact(2).map(|p| p[0].norm_sqr() + p[1].norm_sqr()).collect()
    }

    /// Photonic and atomic populations per site.
    pub fn split_populations(&self) -> (Vec<f64>, Vec<f64>) {
        self.amps.chunks_exact(2).map(|p| (p[0].norm_sqr(), p[1].norm_sqr())).unzip()
    }

    pub fn photon_fraction(&self) -> f64 {
        self.amps.chunks_exact(2).map(|p| p[0].norm_sqr()).sum::<f64>() / self.norm().powi(2)
    }

    pub fn distance(&self, other: &StateVector) -> f64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
    }
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// Photon/atom amplitude pair applied on every site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InternalMixing {
    pub photon: Complex64,
    pub atom: Complex64,
}

impl Default for InternalMixing {
    fn default() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self { photon: Complex64::new(h, 0.0), atom: Complex64::new(h, 0.0) }
    }
}

impl InternalMixing {
    /// Equal magnitudes with the atom lagging by `phase`.
    pub fn equal_with_phase(phase: f64) -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self { photon: Complex64::new(h, 0.0), atom: Complex64::from_polar(h, phase) }
    }

    /// Amplitudes of the given polariton of `[[omega, beta], [beta, epsilon]]`.
    pub fn polariton(omega: f64, epsilon: f64, beta: f64, upper: bool) -> Self {
        let m = nalgebra::Matrix2::new(omega, beta, beta, epsilon);
        let e = SymmetricEigen::new(m);
        let pick = if (e.eigenvalues[0] > e.eigenvalues[1]) == upper { 0 } else { 1 };
        let v = e.eigenvectors.column(pick);
        let sign = if v[0] < 0.0 { -1.0 } else { 1.0 };
        Self { photon: Complex64::new(sign * v[0], 0.0), atom: Complex64::new(sign * v[1], 0.0) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketComponent {
    pub k0: [f64; 2],
    #[serde(default = "unit_weight")]
    pub weight: Complex64,
}

fn unit_weight() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

fn default_sigma() -> f64 {
    DEFAULT_SIGMA_K
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WavePacketSpec {
    pub components: Vec<PacketComponent>,
    /// Momentum width; the real-space envelope is `exp(-|r - r0|^2 sigma^2 / 2)`.
    #[serde(default = "default_sigma")]
    pub sigma_k: f64,
    pub r0: [f64; 2],
    #[serde(default)]
    pub mixing: InternalMixing,
}

pub const DEFAULT_SIGMA_K: f64 = PI / 20.0;

impl WavePacketSpec {
    pub fn single(k0: [f64; 2], r0: [f64; 2]) -> Self {
        Self {
            components: vec![PacketComponent { k0, weight: Complex64::new(1.0, 0.0) }],
            sigma_k: DEFAULT_SIGMA_K,
            r0,
            mixing: InternalMixing::default(),
        }
    }

    pub fn with_sigma(mut self, sigma_k: f64) -> Self {
        self.sigma_k = sigma_k;
        self
    }

    pub fn with_mixing(mut self, mixing: InternalMixing) -> Self {
        self.mixing = mixing;
        self
    }

    /// Analytic momentum weights of the packet, components weighted by `|w|^2`.
    pub fn momentum_distribution(&self, per_axis: usize) -> Result<MomentumDistribution> {
        let mut samples = Vec::new();
        for c in &self.components {
            let g = MomentumDistribution::gaussian(c.k0, self.sigma_k, 4.0, per_axis)?;
            samples.extend(g.samples.into_iter().map(|(k, w)| (k, w * c.weight.norm_sqr())));
        }
        MomentumDistribution::new(samples)
    }
}

#[derive(Debug, Clone)]
pub struct PreparedPacket {
    pub state: StateVector,
    pub distribution: MomentumDistribution,
    /// Population within two sites of an open boundary.
    pub edge_population: f64,
    pub warning: Option<String>,
}

pub const PACKET_EDGE_THRESHOLD: f64 = 1e-6;

pub fn gaussian_packet(spec: &WavePacketSpec, table: &SiteTable) -> Result<PreparedPacket> {
    if !(spec.sigma_k > 0.0) {
        return Err(Error::InvalidArgument("sigma_k must be positive".into()));
    }
    if spec.components.is_empty() {
        return Err(Error::InvalidArgument("packet has no components".into()));
    }
    let wsum: f64 = spec.components.iter().map(|c| c.weight.norm_sqr()).sum::<f64>().sqrt();
    let s2 = spec.sigma_k * spec.sigma_k;
    let n = table.num_sites();
    let mut state = StateVector::zeros(n);
    for site in 0..n {
        let r = table.position(site);
        let dr2 = (r[0] - spec.r0[0]).powi(2) + (r[1] - spec.r0[1]).powi(2);
        let env = (-0.5 * dr2 * s2).exp();
        let mut amp = ZERO;
        for c in &spec.components {
            amp += c.weight / wsum * Complex64::from_polar(1.0, c.k0[0] * r[0] + c.k0[1] * r[1]);
        }
        amp *= env;
        state.amps[photon_index(site)] = amp * spec.mixing.photon;
        state.amps[atom_index(site)] = amp * spec.mixing.atom;
    }
    state.normalize()?;
    let edge = table.boundary_mask(2, None);
    let edge_population = region_population(&state, &edge);
    let warning = (edge_population > PACKET_EDGE_THRESHOLD).then(|| {
        let msg = format!("packet truncated at the boundary: edge population {edge_population:.3e}");
        log::warn!("{msg}");
        msg
    });
    Ok(PreparedPacket { state, distribution: spec.momentum_distribution(41)?, edge_population, warning })
}

#[derive(Debug, Clone)]
pub struct WellState {
    pub state: StateVector,
    pub energy: f64,
    /// `||H_w v - E v||` of the masked problem.
    pub residual: f64,
}

impl WellState {
    /// Decay rate `kappa_ev` from a log-linear fit of column populations
    /// `P(x) ∝ exp(-2 kappa_ev x)` over `columns`.
    pub fn tail_decay(&self, table: &SiteTable, columns: (usize, usize)) -> Result<f64> {
        let pops = column_populations(&self.state, table);
        let xs: Vec<f64> = (columns.0..columns.1).map(|x| x as f64).collect();
        let ys: Vec<f64> = (columns.0..columns.1).map(|x| pops[x].ln()).collect();
        if ys.iter().any(|y| !y.is_finite()) {
            return Err(Error::Fit("zero population in tail window".into()));
        }
        let (slope, _) = linear_fit(&xs, &ys)?;
        Ok(-0.5 * slope)
    }
}

/// Eigenstate of the Hamiltonian restricted to `mask` nearest to `target`,
/// embedded in the full lattice.
pub fn well_eigenstate(h: &SparseHamiltonian, mask: &[bool], target: f64, window: f64) -> Result<WellState> {
    if mask.len() != h.num_sites() {
        return Err(Error::DimensionMismatch(format!("mask has {} sites, operator {}", mask.len(), h.num_sites())));
    }
    let indices: Vec<usize> =
        mask.iter().enumerate().filter(|(_, &m)| m).flat_map(|(s, _)| [photon_index(s), atom_index(s)]).collect();
    if indices.len() > DEFAULT_DENSE_CAP {
        return Err(Error::DenseCapExceeded { dim: indices.len(), cap: DEFAULT_DENSE_CAP });
    }
    let sub = h.submatrix(&indices);
    let spec = symmetric_eigen(sub.clone());
    let best = nearest(&spec.values, target - h.shift());
    let energy = spec.values[best] + h.shift();
    if (energy - target).abs() > window {
        return Err(Error::NoEigenvalueInWindow { target, window, nearest: energy });
    }
    let v = spec.vectors.column(best).into_owned();
    let residual = (&sub * &v - &v * spec.values[best]).norm();
    let mut state = StateVector::zeros(h.num_sites());
    for (i, &b) in indices.iter().enumerate() {
        state.amps[b] = Complex64::new(v[i], 0.0);
    }
    state.normalize()?;
    Ok(WellState { state, energy, residual })
}

fn nearest(values: &[f64], target: f64) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if (v - target).abs() < (values[best] - target).abs() {
            best = i;
        }
    }
    best
}

/// Eigenvalues of the Hamiltonian restricted to `mask`, including the shift.
pub fn masked_spectrum(h: &SparseHamiltonian, mask: &[bool]) -> Result<Vec<f64>> {
    let indices: Vec<usize> =
        mask.iter().enumerate().filter(|(_, &m)| m).flat_map(|(s, _)| [photon_index(s), atom_index(s)]).collect();
    if indices.len() > DEFAULT_DENSE_CAP {
        return Err(Error::DenseCapExceeded { dim: indices.len(), cap: DEFAULT_DENSE_CAP });
    }
    Ok(symmetric_eigen(h.submatrix(&indices)).values.into_iter().map(|v| v + h.shift()).collect())
}

pub fn region_population(state: &StateVector, mask: &[bool]) -> f64 {
    state.amps.chunks_exact(2).zip(mask).filter(|(_, &m)| m).map(|(p, _)| p[0].norm_sqr() + p[1].norm_sqr()).sum()
}

pub fn region_population_named(state: &StateVector, table: &SiteTable, name: &str) -> Result<f64> {
    Ok(region_population(state, &table.mask_for(&[name])?))
}

/// Total population of each column.
pub fn column_populations(state: &StateVector, table: &SiteTable) -> Vec<f64> {
    let mut out = vec![0.0; table.spec.nx];
    for (site, p) in state.site_populations().into_iter().enumerate() {
        out[table.sites[site].ix] += p;
    }
    out
}

// ---------------------------------------------------------------- evolution

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Chebyshev,
    Lanczos,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `exp(-i H t)`.
    #[default]
    Forward,
    /// `exp(+i H t)`.
    Backward,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => -1.0,
            Direction::Backward => 1.0,
        }
    }
}

/// Population limit on a set of sites, checked at every observation.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryGuard {
    pub mask: Vec<bool>,
    pub threshold: f64,
}

pub const DEFAULT_GUARD_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveOptions {
    pub tol: f64,
    pub method: Method,
    pub direction: Direction,
    /// Snapshot spacing in time; `None` keeps only the final state.
    pub snapshot_every: Option<f64>,
    pub guard: Option<BoundaryGuard>,
    /// Upper bound on `a dt` per Chebyshev step, `a` the spectral half-width.
    pub max_step_phase: f64,
    /// Krylov dimension for the Lanczos method.
    pub krylov_dim: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            method: Method::Chebyshev,
            direction: Direction::Forward,
            snapshot_every: None,
            guard: None,
            max_step_phase: 2000.0,
            krylov_dim: 40,
        }
    }
}

impl EvolveOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub photon: Vec<f64>,
    pub atom: Vec<f64>,
}

impl Snapshot {
    pub fn of(time: f64, state: &StateVector) -> Self {
        let (photon, atom) = state.split_populations();
        Self { time, photon, atom }
    }

    pub fn total(&self, site: usize) -> f64 {
        self.photon[site] + self.atom[site]
    }

    pub fn populations(&self) -> Vec<f64> {
        self.photon.iter().zip(&self.atom).map(|(a, b)| a + b).collect()
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub state: StateVector,
    pub snapshots: Vec<Snapshot>,
    /// `max |‖psi(t)‖ - 1|` over observations, relative to the initial norm.
    pub norm_drift: f64,
    /// Accumulated truncation bound (Chebyshev) or estimate (Lanczos).
    pub error_bound: f64,
    pub matvecs: usize,
    /// Largest guarded population seen, and when the guard first tripped.
    pub guard_max: f64,
    pub guard_breach: Option<(f64, f64)>,
}

/// `psi(t)` under `exp(∓iHt)`, with optional snapshots and guard.
pub fn evolve(h: &SparseHamiltonian, psi0: &StateVector, t: f64, opts: &EvolveOptions) -> Result<EvolutionResult> {
    let mut times = Vec::new();
    if let Some(dt) = opts.snapshot_every {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument("snapshot spacing must be positive".into()));
        }
        let n = (t / dt).floor() as usize;
        times.extend((0..=n).map(|i| i as f64 * dt));
    }
    if times.last().is_none_or(|&last| last < t) {
        times.push(t);
    }
    let keep = opts.snapshot_every.is_some();
    let mut snapshots = Vec::new();
    let out = propagate(h, psi0, &times, opts, |time, state| {
        if keep {
            snapshots.push(Snapshot::of(time, state));
        }
        true
    })?;
    Ok(EvolutionResult { snapshots, ..out })
}

/// Propagate through the ascending `times`, calling `observe` at each one.
/// Returning `false` from the observer stops the run early.
pub fn propagate(
    h: &SparseHamiltonian,
    psi0: &StateVector,
    times: &[f64],
    opts: &EvolveOptions,
    mut observe: impl FnMut(f64, &StateVector) -> bool,
) -> Result<EvolutionResult> {
    if psi0.amps.len() != h.dim() {
        return Err(Error::DimensionMismatch(format!("state {} vs operator {}", psi0.amps.len(), h.dim())));
    }
    if !(opts.tol > 1e-14 && opts.tol < 1e-4) {
        return Err(Error::InvalidArgument(format!("tolerance {} outside (1e-14, 1e-4)", opts.tol)));
    }
    if times.iter().any(|t| !(*t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("times must be non-negative and ascending".into()));
    }
    let total = times.last().copied().unwrap_or(0.0);
    let norm0 = psi0.norm();
    let mut psi = psi0.clone();
    let mut now = 0.0;
    let mut error_bound = 0.0;
    let mut matvecs = 0;
    let mut norm_drift: f64 = 0.0;
    let mut guard_max: f64 = 0.0;
    let mut guard_breach = None;
    let (lo, hi) = h.gershgorin_bounds();
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::Propagation("spectral bounds are not finite".into()));
    }
    let mut work = Workspace::new(h.dim());
    for &target in times {
        let span = target - now;
        if span > 0.0 {
            let step_tol = opts.tol * span / total;
            let (bound, mv) = match opts.method {
                Method::Chebyshev => chebyshev_span(h, &mut psi, span, (lo, hi), step_tol, opts, &mut work),
                Method::Lanczos => lanczos_span(h, &mut psi, span, step_tol, opts, &mut work)?,
            };
            error_bound += bound;
            matvecs += mv;
            now = target;
        }
        norm_drift = norm_drift.max((psi.norm() / norm0 - 1.0).abs());
        if let Some(g) = &opts.guard {
            let p = region_population(&psi, &g.mask);
            guard_max = guard_max.max(p);
            if p > g.threshold && guard_breach.is_none() {
                guard_breach = Some((now, p));
            }
        }
        if !observe(now, &psi) {
            break;
        }
    }
    Ok(EvolutionResult { state: psi, snapshots: Vec::new(), norm_drift, error_bound, matvecs, guard_max, guard_breach })
}

struct Workspace {
    a: Vec<Complex64>,
    b: Vec<Complex64>,
    c: Vec<Complex64>,
    acc: Vec<Complex64>,
}

impl Workspace {
    fn new(dim: usize) -> Self {
        Self { a: vec![ZERO; dim], b: vec![ZERO; dim], c: vec![ZERO; dim], acc: vec![ZERO; dim] }
    }
}

/// Apply `f(i)` element-wise; parallel for large vectors (no reductions).
fn for_each_index(v: &mut [Complex64], f: impl Fn(usize, &mut Complex64) + Sync + Send) {
    if v.len() >= PAR_MIN {
        v.par_iter_mut().enumerate().for_each(|(i, x)| f(i, x));
    } else {
        v.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
    }
}

/// `J_0(z) .. J_nmax(z)` by Miller's backward recurrence normalised with
/// `J_0 + 2 sum J_2k = 1`.
pub fn bessel_j_sequence(z: f64, nmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; nmax + 1];
    if z == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let top = nmax.max(z.ceil() as usize);
    let mut m = top + 20 + (40.0 * top as f64).sqrt() as usize;
    m += m % 2;
    let (mut jp1, mut j) = (0.0f64, 1e-300f64);
    let mut norm = 0.0;
    for k in (1..=m).rev() {
        let jm1 = 2.0 * k as f64 / z * j - jp1;
        if k - 1 <= nmax {
            out[k - 1] = jm1;
        }
        if (k - 1) % 2 == 0 && k - 1 > 0 {
            norm += 2.0 * jm1;
        }
        jp1 = j;
        j = jm1;
        if j.abs() > 1e250 {
            let s = 1e-250;
            j *= s;
            jp1 *= s;
            norm *= s;
            out.iter_mut().for_each(|v| *v *= s);
        }
    }
    norm += out[0];
    out.iter_mut().for_each(|v| *v /= norm);
    out
}

/// Smallest `n` with `2 sum_{m>n} (z/2)^m / m! <= tol`, and the bound itself.
fn chebyshev_order(z: f64, tol: f64) -> (usize, f64) {
    let half = 0.5 * z;
    // log of (z/2)^m / m!
    let mut log_term = 0.0f64;
    let mut m = 0usize;
    loop {
        m += 1;
        log_term += half.ln() - (m as f64).ln();
        let q = half / (m as f64 + 1.0);
        if q < 0.5 {
            // tail starting at m is at most term_m / (1 - q)
            let tail = 2.0 * log_term.exp() / (1.0 - q);
            if tail <= tol {
                return (m.saturating_sub(1).max(1), tail);
            }
        }
        if m > 10_000_000 {
            return (m, f64::INFINITY);
        }
    }
}

fn chebyshev_span(
    h: &SparseHamiltonian,
    psi: &mut StateVector,
    span: f64,
    (lo, hi): (f64, f64),
    tol: f64,
    opts: &EvolveOptions,
    w: &mut Workspace,
) -> (f64, usize) {
    let centre = 0.5 * (lo + hi);
    let half = (0.5 * (hi - lo)).max(1e-12) * (1.0 + 1e-12);
    let steps = ((half * span) / opts.max_step_phase).ceil().max(1.0) as usize;
    let dt = span / steps as f64;
    let mut bound = 0.0;
    let mut mv = 0;
    for _ in 0..steps {
        let (b, m) = chebyshev_step(h, &mut psi.amps, dt, centre, half, tol / steps as f64, opts.direction, w);
        bound += b;
        mv += m;
    }
    (bound, mv)
}

#[allow(clippy::too_many_arguments)]
fn chebyshev_step(
    h: &SparseHamiltonian,
    psi: &mut [Complex64],
    dt: f64,
    centre: f64,
    half: f64,
    tol: f64,
    dir: Direction,
    w: &mut Workspace,
) -> (f64, usize) {
    let z = half * dt;
    let (order, bound) = chebyshev_order(z, tol);
    let bessel = bessel_j_sequence(z, order);
    let s = dir.sign();
    // coefficient of T_n: (2 - δ_n0) (s i)^n J_n(z)
    let coeff = |n: usize| -> Complex64 {
        let phase = match n % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, s),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -s),
        };
        phase * bessel[n] * if n == 0 { 1.0 } else { 2.0 }
    };
    let inv = 1.0 / half;
    let Workspace { a: prev, b: cur, c: next, acc } = w;
    prev.copy_from_slice(psi);
    let c0 = coeff(0);
    for_each_index(acc, |i, x| *x = prev[i] * c0);
    // T_1 = (H - c) / a
    h.apply(prev, cur);
    {
        let prev = &*prev;
        for_each_index(cur, |i, x| *x = (*x - prev[i] * centre) * inv);
    }
    let c1 = coeff(1);
    {
        let cur = &*cur;
        for_each_index(acc, |i, x| *x += cur[i] * c1);
    }
    let mut mv = 1;
    for n in 2..=order {
        h.apply(cur, next);
        mv += 1;
        let cn = coeff(n);
        {
            let (cur_r, prev_r) = (&*cur, &*prev);
            for_each_index(next, |i, x| *x = (*x - cur_r[i] * centre) * (2.0 * inv) - prev_r[i]);
        }
        {
            let next_r = &*next;
            for_each_index(acc, |i, x| *x += next_r[i] * cn);
        }
        std::mem::swap(prev, cur);
        std::mem::swap(cur, next);
    }
    let phase = Complex64::from_polar(1.0, s * centre * dt);
    let acc_r = &*acc;
    for_each_index(psi, |i, x| *x = acc_r[i] * phase);
    (bound, mv)
}

fn lanczos_span(
    h: &SparseHamiltonian,
    psi: &mut StateVector,
    span: f64,
    tol: f64,
    opts: &EvolveOptions,
    _w: &mut Workspace,
) -> Result<(f64, usize)> {
    let mut done = 0.0;
    let mut bound = 0.0;
    let mut mv = 0;
    let s = opts.direction.sign();
    let m_max = opts.krylov_dim.clamp(2, h.dim());
    let mut dt = span;
    let mut guard = 0usize;
    while done < span * (1.0 - 1e-15) {
        guard += 1;
        if guard > 1_000_000 {
            return Err(Error::Propagation("Lanczos step size collapsed".into()));
        }
        let beta0 = psi.norm();
        let mut basis: Vec<Vec<Complex64>> = vec![psi.amps.iter().map(|a| a / beta0).collect()];
        let mut alpha = Vec::new();
        let mut betas = Vec::new();
        let mut w = vec![ZERO; h.dim()];
        let mut breakdown = false;
        for j in 0..m_max {
            h.apply(&basis[j], &mut w);
            mv += 1;
            let a: f64 = basis[j].iter().zip(&w).map(|(v, x)| (v.conj() * x).re).sum();
            alpha.push(a);
            // full reorthogonalisation
            for v in &basis {
                let c: Complex64 = v.iter().zip(&w).map(|(p, x)| p.conj() * x).sum();
                w.iter_mut().zip(v).for_each(|(x, p)| *x -= p * c);
            }
            let b = norm(&w);
            betas.push(b);
            if b < 1e-13 * (1.0 + a.abs()) {
                breakdown = true;
                break;
            }
            if j + 1 < m_max {
                basis.push(w.iter().map(|x| x / b).collect());
            }
        }
        let m = alpha.len();
        let mut t = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alpha[i];
            if i + 1 < m {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let coeffs = |tau: f64| -> Vec<Complex64> {
            (0..m)
                .map(|r| {
                    (0..m)
                        .map(|c| {
                            let q = eig.eigenvectors[(r, c)] * eig.eigenvectors[(0, c)];
                            Complex64::from_polar(q, s * eig.eigenvalues[c] * tau)
                        })
                        .sum()
                })
                .collect()
        };
        let remaining = span - done;
        let mut tau = dt.min(remaining);
        let mut y = coeffs(tau);
        let mut est;
        loop {
            est = if breakdown { 0.0 } else { beta0 * betas[m - 1] * y[m - 1].norm() };
            if est <= tol * tau / span {
                break;
            }
            tau *= 0.5;
            if tau < 1e-300 {
                return Err(Error::Propagation("Lanczos tolerance unachievable".into()));
            }
            y = coeffs(tau);
        }
        psi.amps.iter_mut().for_each(|a| *a = ZERO);
        for (j, v) in basis.iter().enumerate().take(m) {
            let c = y[j] * beta0;
            psi.amps.iter_mut().zip(v).for_each(|(a, p)| *a += p * c);
        }
        bound += est;
        done += tau;
        // allow the step to grow again when comfortably accurate
        dt = if est < 0.1 * tol * tau / span { tau * 2.0 } else { tau };
    }
    Ok((bound, mv))
}

/// Dense `exp(∓iHt) psi` by eigendecomposition.
pub fn dense_evolve(h: &SparseHamiltonian, psi: &StateVector, t: f64, dir: Direction) -> Result<StateVector> {
    let spec = dense_spectrum_capped(h, DEFAULT_DENSE_CAP)?;
    let v = &spec.vectors;
    let n = h.dim();
    let mut coeff = vec![ZERO; n];
    for (j, c) in coeff.iter_mut().enumerate() {
        let proj: Complex64 = (0..n).map(|r| psi.amps[r] * v[(r, j)]).sum();
        *c = proj * Complex64::from_polar(1.0, dir.sign() * spec.values[j] * t);
    }
    let amps = (0..n).map(|r| (0..n).map(|j| coeff[j] * v[(r, j)]).sum()).collect();
    Ok(StateVector { amps })
}

// ------------------------------------------------------------------ fitting

/// Least-squares line `y = slope x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return Err(Error::Fit("need at least two points".into()));
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("abscissae are identical".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RabiFit {
    pub omega: f64,
    pub eta: f64,
    /// `4 Omega^2 / (eta^2 + 4 Omega^2)`.
    pub amplitude: f64,
    /// `sqrt(eta^2 + 4 Omega^2)`.
    pub frequency: f64,
    /// Root-mean-square residual.
    pub residual: f64,
}

fn rabi_model(a: f64, f: f64, t: f64) -> f64 {
    0.5 * a * (1.0 - (f * t).cos())
}

/// Best amplitude for fixed frequency, clamped to `[0, 1]`, and the RMS residual.
fn project_amplitude(t: &[f64], p: &[f64], f: f64) -> (f64, f64) {
    let mut num = 0.0;
    let mut den = 0.0;
    for (&ti, &pi) in t.iter().zip(p) {
        let b = 0.5 * (1.0 - (f * ti).cos());
        num += b * pi;
        den += b * b;
    }
    let a = if den > 0.0 { (num / den).clamp(0.0, 1.0) } else { 0.0 };
    (a, rms(t, p, a, f))
}

fn rms(t: &[f64], p: &[f64], a: f64, f: f64) -> f64 {
    (t.iter().zip(p).map(|(&ti, &pi)| (pi - rabi_model(a, f, ti)).powi(2)).sum::<f64>() / t.len() as f64).sqrt()
}

fn check_series(t: &[f64], p: &[f64]) -> Result<(f64, f64)> {
    if t.len() != p.len() || t.len() < 8 {
        return Err(Error::Fit("need at least 8 matching samples".into()));
    }
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    let var = p.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / p.len() as f64;
    if var < 1e-24 {
        return Err(Error::Fit("series is flat".into()));
    }
    let span = t[t.len() - 1] - t[0];
    let dt = span / (t.len() - 1) as f64;
    Ok((span, dt))
}

/// Frequency grid search followed by golden-section refinement of
/// `residual(f)`, amplitude given by `amp(f)`.
fn scan_frequency(t: &[f64], span: f64, dt: f64, objective: &(dyn Fn(f64) -> f64 + Sync)) -> f64 {
    let t_end = t[t.len() - 1];
    let f_lo = 2.0 * PI / (4.0 * t_end.max(span));
    let f_hi = PI / dt;
    let df = 2.0 * PI / (16.0 * t_end.max(span));
    let n = ((f_hi - f_lo) / df).ceil() as usize + 1;
    let values: Vec<f64> = (0..n).into_par_iter().map(|i| objective(f_lo + df * i as f64)).collect();
    let best = nearest_min(&values);
    let (mut a, mut b) = (f_lo + df * (best as f64 - 1.0), f_lo + df * (best as f64 + 1.0));
    a = a.max(1e-300);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (objective(c), objective(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-15 * b.abs() {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = objective(d);
        }
    }
    0.5 * (a + b)
}

fn nearest_min(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Fit `P(t) = 2 Omega^2 / (eta^2 + 4 Omega^2) [1 - cos(sqrt(eta^2 + 4 Omega^2) t)]`.
pub fn fit_rabi(t: &[f64], p: &[f64]) -> Result<RabiFit> {
    let (span, dt) = check_series(t, p)?;
    let f0 = scan_frequency(t, span, dt, &|f| project_amplitude(t, p, f).1);
    let (mut a, _) = project_amplitude(t, p, f0);
    let mut f = f0;
    // Gauss-Newton polish in (A, f)
    for _ in 0..20 {
        let (mut jtj, mut jtr) = ([[0.0; 2]; 2], [0.0; 2]);
        for (&ti, &pi) in t.iter().zip(p) {
            let r = pi - rabi_model(a, f, ti);
            let ja = 0.5 * (1.0 - (f * ti).cos());
            let jf = 0.5 * a * ti * (f * ti).sin();
            jtj[0][0] += ja * ja;
            jtj[0][1] += ja * jf;
            jtj[1][1] += jf * jf;
            jtr[0] += ja * r;
            jtr[1] += jf * r;
        }
        jtj[1][0] = jtj[0][1];
        let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let da = (jtj[1][1] * jtr[0] - jtj[0][1] * jtr[1]) / det;
        let dfr = (-jtj[1][0] * jtr[0] + jtj[0][0] * jtr[1]) / det;
        let (na, nf) = ((a + da).clamp(0.0, 1.0), f + dfr);
        if rms(t, p, na, nf) > rms(t, p, a, f) {
            break;
        }
        let small = (na - a).abs() < 1e-15 && (nf - f).abs() < 1e-15 * f.abs();
        a = na;
        f = nf;
        if small {
            break;
        }
    }
    if !(f.is_finite() && a.is_finite()) {
        return Err(Error::Fit("fit did not converge".into()));
    }
    let f = f.abs();
    Ok(RabiFit {
        omega: 0.5 * a.sqrt() * f,
        eta: f * (1.0 - a).max(0.0).sqrt(),
        amplitude: a,
        frequency: f,
        residual: rms(t, p, a, f),
    })
}

/// Fit `P(t) = sin^2(Omega t)` (full exchange).
pub fn fit_resonant(t: &[f64], p: &[f64]) -> Result<RabiFit> {
    let (span, dt) = check_series(t, p)?;
    let mut f = scan_frequency(t, span, dt, &|f| rms(t, p, 1.0, f));
    for _ in 0..20 {
        let (mut jj, mut jr) = (0.0, 0.0);
        for (&ti, &pi) in t.iter().zip(p) {
            let r = pi - rabi_model(1.0, f, ti);
            let jf = 0.5 * ti * (f * ti).sin();
            jj += jf * jf;
            jr += jf * r;
        }
        if jj == 0.0 {
            break;
        }
        let nf = f + jr / jj;
        if rms(t, p, 1.0, nf) > rms(t, p, 1.0, f) {
            break;
        }
        let small = (nf - f).abs() < 1e-15 * f;
        f = nf;
        if small {
            break;
        }
    }
    Ok(RabiFit { omega: 0.5 * f, eta: 0.0, amplitude: 1.0, frequency: f, residual: rms(t, p, 1.0, f) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidTrack {
    pub times: Vec<f64>,
    pub centroids: Vec<[f64; 2]>,
    /// Least-squares velocity.
    pub velocity: [f64; 2],
    /// `atan2(v_y, v_x)`.
    pub angle: f64,
    /// One-sigma angle uncertainty from the fit residuals.
    pub angle_sigma: f64,
}

pub const CENTROID_THRESHOLD: f64 = 1e-3;

/// Population inside `mask` and its weighted centroid.
pub fn masked_centroid(populations: &[f64], table: &SiteTable, mask: &[bool]) -> (f64, [f64; 2]) {
    let (mut w, mut x, mut y) = (0.0, 0.0, 0.0);
    for (site, (&p, &m)) in populations.iter().zip(mask).enumerate() {
        if m {
            let r = table.position(site);
            w += p;
            x += p * r[0];
            y += p * r[1];
        }
    }
    if w > 0.0 {
        (w, [x / w, y / w])
    } else {
        (0.0, [f64::NAN, f64::NAN])
    }
}

/// Population-weighted centroids restricted to `mask`, fitted by a line in time.
pub fn centroid_track(snapshots: &[Snapshot], table: &SiteTable, mask: &[bool], threshold: f64) -> Result<CentroidTrack> {
    let mut times = Vec::new();
    let mut centroids = Vec::new();
    for s in snapshots {
        let (w, c) = masked_centroid(&s.populations(), table, mask);
        if w > threshold {
            times.push(s.time);
            centroids.push(c);
        }
    }
    fit_track(times, centroids)
}

/// Least-squares straight-line motion through `(time, centroid)` samples.
pub fn fit_track(times: Vec<f64>, centroids: Vec<[f64; 2]>) -> Result<CentroidTrack> {
    if times.len() < 2 {
        return Err(Error::InsufficientPopulation(format!("{} usable snapshots", times.len())));
    }
    let xs: Vec<f64> = centroids.iter().map(|c| c[0]).collect();
    let ys: Vec<f64> = centroids.iter().map(|c| c[1]).collect();
    let (vx, bx) = linear_fit(&times, &xs)?;
    let (vy, by) = linear_fit(&times, &ys)?;
    let n = times.len() as f64;
    let mt = times.iter().sum::<f64>() / n;
    let stt: f64 = times.iter().map(|t| (t - mt).powi(2)).sum();
    let se = |vals: &[f64], v: f64, b: f64| -> f64 {
        if times.len() < 3 {
            return 0.0;
        }
        let ss: f64 = times.iter().zip(vals).map(|(t, y)| (y - v * t - b).powi(2)).sum();
        (ss / (n - 2.0) / stt).sqrt()
    };
    let (sx, sy) = (se(&xs, vx, bx), se(&ys, vy, by));
    let speed2 = vx * vx + vy * vy;
    let angle_sigma = if speed2 > 0.0 { ((vy * sx).powi(2) + (vx * sy).powi(2)).sqrt() / speed2 } else { f64::INFINITY };
    Ok(CentroidTrack { times, centroids, velocity: [vx, vy], angle: vy.atan2(vx), angle_sigma })
}

// ------------------------------------------------------------ snapshot I/O

const SNAPSHOT_MAGIC: [u8; 4] = *b"JCHS";
/// Layout tag: row-major `index = ix * ny + iy`.
pub const LAYOUT_ROW_MAJOR: u32 = 0;

/// Binary snapshot: magic, u32 version, f64 time, u64 nx, u64 ny, u32 layout,
/// then `nx ny` photonic and `nx ny` atomic populations, all little endian.
pub fn write_snapshot<W: Write>(mut w: W, snap: &Snapshot, nx: usize, ny: usize) -> Result<()> {
    if snap.photon.len() != nx * ny {
        return Err(Error::DimensionMismatch(format!("snapshot has {} sites, expected {}", snap.photon.len(), nx * ny)));
    }
    w.write_all(&SNAPSHOT_MAGIC)?;
    w.write_all(&1u32.to_le_bytes())?;
    w.write_all(&snap.time.to_le_bytes())?;
    w.write_all(&(nx as u64).to_le_bytes())?;
    w.write_all(&(ny as u64).to_le_bytes())?;
    w.write_all(&LAYOUT_ROW_MAJOR.to_le_bytes())?;
    let mut buf = Vec::with_capacity(16 * nx * ny);
    for v in snap.photon.iter().chain(&snap.atom) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<(Snapshot, usize, usize)> {
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    if b4 != SNAPSHOT_MAGIC {
        return Err(Error::InvalidArgument("not a JCHS snapshot".into()));
    }
    r.read_exact(&mut b4)?;
    r.read_exact(&mut b8)?;
    let time = f64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let nx = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let ny = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b4)?;
    let mut payload = vec![0u8; 16 * nx * ny];
    r.read_exact(&mut payload)?;
    let vals: Vec<f64> = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let (photon, atom) = vals.split_at(nx * ny);
    Ok((Snapshot { time, photon: photon.to_vec(), atom: atom.to_vec() }, nx, ny))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::assemble;
    use crate::lattice::*;

    fn jc(beta: f64) -> SparseHamiltonian {
        SparseHamiltonian::from_triplets(2, vec![(0, 1, beta), (1, 0, beta)]).unwrap()
    }

    #[test]
    fn bessel_values() {
        let j = bessel_j_sequence(1.0, 3);
        assert!((j[0] - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((j[1] - 0.440_050_585_744_933_5).abs() < 1e-14);
        assert!((bessel_j_sequence(10.0, 5)[5] + 0.234_061_528_186_793_6).abs() < 1e-13);
        assert!((bessel_j_sequence(100.0, 0)[0] - 0.019_985_850_304_223_12).abs() < 1e-13);
        assert_eq!(bessel_j_sequence(0.0, 2), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_time_is_identity() {
        let psi = StateVector::basis(1, 0);
        let r = evolve(&jc(1.0), &psi, 0.0, &EvolveOptions::default()).unwrap();
        assert_eq!(r.state, psi);
    }

    #[test]
    fn vacuum_rabi_oscillation() {
        let beta = 1.3;
        let psi = StateVector::basis(1, 0);
        for method in [Method::Chebyshev, Method::Lanczos] {
            let opts = EvolveOptions { method, krylov_dim: 2, ..Default::default() };
            for t in [0.3, 2.0, 17.5] {
                let r = evolve(&jc(beta), &psi, t, &opts).unwrap();
                let p = r.state.amps[0].norm_sqr();
                assert!((p - (beta * t).cos().powi(2)).abs() < 1e-9, "{method:?} t={t}");
            }
        }
    }

    #[test]
    fn backward_undoes_forward() {
        let h = jc(0.7);
        let psi = StateVector::basis(1, 0);
        let f = evolve(&h, &psi, 5.0, &EvolveOptions::default()).unwrap().state;
        let opts = EvolveOptions { direction: Direction::Backward, ..Default::default() };
        let b = evolve(&h, &f, 5.0, &opts).unwrap().state;
        assert!(b.distance(&psi) < 1e-9);
    }

    #[test]
    fn snapshots_at_stride() {
        let r = evolve(&jc(1.0), &StateVector::basis(1, 0), 1.0, &EvolveOptions { snapshot_every: Some(0.25), ..Default::default() })
            .unwrap();
        let times: Vec<f64> = r.snapshots.iter().map(|s| s.time).collect();
        assert_eq!(times, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn rejects_bad_tolerance() {
        let opts = EvolveOptions { tol: 1e-3, ..Default::default() };
        assert!(evolve(&jc(1.0), &StateVector::basis(1, 0), 1.0, &opts).is_err());
    }

    fn strip() -> SiteTable {
        let spec = LatticeSpec::new(6, 4, Orientation::Rotated, Boundary::Open).unwrap();
        build_lattice(spec, RegionMap::uniform(6, RegionParams::new(0.0, 0.0, 2.0, 1.0))).unwrap()
    }

    #[test]
    fn packet_mixing_and_populations() {
        let t = strip();
        let spec = WavePacketSpec::single([0.3, 0.2], [2.5, 1.5]).with_sigma(1.0);
        let p = gaussian_packet(&spec, &t).unwrap();
        assert!((p.state.norm() - 1.0).abs() < 1e-12);
        assert!((p.state.photon_fraction() - 0.5).abs() < 1e-12);
        let all = vec![true; t.num_sites()];
        assert!((region_population(&p.state, &all) - 1.0).abs() < 1e-12);
        assert_eq!(region_population(&p.state, &vec![false; t.num_sites()]), 0.0);
        assert!(p.warning.is_some());
        assert!(region_population_named(&p.state, &t, "nope").is_err());
    }

    #[test]
    fn well_eigenstate_window() {
        let t = strip();
        let h = assemble(&t).unwrap();
        let mask: Vec<bool> = t.sites.iter().map(|s| s.ix < 3).collect();
        let w = well_eigenstate(&h, &mask, 2.0, 1.0).unwrap();
        assert!(w.residual < 1e-9);
        assert!(region_population(&w.state, &mask) > 1.0 - 1e-15);
        assert!(matches!(well_eigenstate(&h, &mask, 50.0, 1.0), Err(Error::NoEigenvalueInWindow { .. })));
    }

    #[test]
    fn rabi_fit_roundtrip() {
        let t: Vec<f64> = (0..2000).map(|i| i as f64 * 1.0).collect();
        let p: Vec<f64> = t.iter().map(|&x| (0.01 * x).sin().powi(2)).collect();
        let f = fit_rabi(&t, &p).unwrap();
        assert!((f.omega - 0.01).abs() < 1e-8 && f.eta < 1e-8, "{f:?}");
        let r = fit_resonant(&t, &p).unwrap();
        assert!((r.omega - 0.01).abs() < 1e-10 && r.residual < 1e-10);
        assert!(fit_rabi(&t, &vec![0.3; t.len()]).is_err());
    }

    #[test]
    fn centroid_requires_population() {
        let t = strip();
        let s = Snapshot { time: 0.0, photon: vec![0.0; t.num_sites()], atom: vec![0.0; t.num_sites()] };
        let mask = vec![true; t.num_sites()];
        assert!(matches!(centroid_track(&[s.clone(), s], &t, &mask, 1e-3), Err(Error::InsufficientPopulation(_))));
    }

    #[test]
    fn snapshot_roundtrip() {
        let s = Snapshot { time: 1.5, photon: vec![0.1, 0.2, 0.3, 0.4], atom: vec![0.0, 0.5, 0.25, 0.125] };
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &s, 2, 2).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 8 + 8 + 8 + 4 + 64);
        let (back, nx, ny) = read_snapshot(buf.as_slice()).unwrap();
        assert_eq!((back, nx, ny), (s, 2, 2));
    }
}
