//! Sparse one-excitation Jaynes-Cummings-Hubbard operator.
//!
//! The basis interleaves the two local states of every site:
//! index `2 s` is `|g,1>_s` (photon) and `2 s + 1` is `|e,0>_s` (atom).
//! In that basis the Hamiltonian is real symmetric, so it is stored as a
//! real CSR matrix and applied to complex state vectors.

use std::io::{Read, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::SiteTable;

/// Polariton branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Upper,
    Lower,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Upper => 1.0,
            Branch::Lower => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisOrdering {
    /// `[c_0, d_0, c_1, d_1, ...]`.
    Interleaved,
}

#[inline]
pub fn photon_index(site: usize) -> usize {
    2 * site
}

#[inline]
pub fn atom_index(site: usize) -> usize {
    2 * site + 1
}

pub const DEFAULT_DENSE_CAP: usize = 4096;
const PARALLEL_MIN_DIM: usize = 8192;
const ROW_CHUNK: usize = 2048;

#[derive(Debug, Clone)]
pub struct SparseHamiltonian {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    shift: f64,
}

impl SparseHamiltonian {
    /// Build from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|(r, c, _)| *r >= dim || *c >= dim) {
            return Err(Error::InvalidArgument(format!("entry ({r}, {c}) outside dimension {dim}")));
        }
        triplets.sort_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        let h = Self { dim, row_ptr, col_idx, values, shift: 0.0 };
        if !h.is_symmetric() {
            return Err(Error::InvalidArgument("operator is not Hermitian".into()));
        }
        Ok(h)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn num_sites(&self) -> usize {
        self.dim / 2
    }

    pub fn basis(&self) -> BasisOrdering {
        BasisOrdering::Interleaved
    }

    /// Uniform energy offset already subtracted from the diagonal.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Subtract `shift * I` (rotating frame) and record it.
    pub fn with_shift(mut self, shift: f64) -> Self {
        let delta = shift - self.shift;
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.col_idx[k] == r {
                    self.values[k] -= delta;
                }
            }
        }
        self.shift = shift;
        self
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(j, _)| j == c).map_or(0.0, |(_, v)| v)
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    fn is_symmetric(&self) -> bool {
        self.triplets().all(|(r, c, v)| self.get(c, r) == v)
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|r| self.get(r, r)).sum()
    }

    /// `y = H x`.
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        let row = |r: usize| -> Complex64 {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += x[self.col_idx[k]] * self.values[k];
            }
            acc
        };
        if self.dim >= PARALLEL_MIN_DIM {
            y.par_chunks_mut(ROW_CHUNK).enumerate().for_each(|(chunk, out)| {
                let base = chunk * ROW_CHUNK;
                for (i, yi) in out.iter_mut().enumerate() {
                    *yi = row(base + i);
                }
            });
        } else {
            for (r, yi) in y.iter_mut().enumerate() {
                *yi = row(r);
            }
        }
    }

    /// `<x|H|x>`.
    pub fn expectation(&self, x: &[Complex64]) -> f64 {
        let mut hx = vec![Complex64::new(0.0, 0.0); self.dim];
        self.apply(x, &mut hx);
        x.iter().zip(&hx).map(|(a, b)| (a.conj() * b).re).sum()
    }

    /// Gershgorin enclosure of the spectrum.
    pub fn gershgorin_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in 0..self.dim {
            let mut diag = 0.0;
            let mut radius = 0.0;
            for (c, v) in self.row(r) {
                if c == r {
                    diag += v;
                } else {
                    radius += v.abs();
                }
            }
            lo = lo.min(diag - radius);
            hi = hi.max(diag + radius);
        }
        (lo, hi)
    }

    /// Largest absolute row sum (an upper bound on the spectral norm).
    pub fn norm_bound(&self) -> f64 {
        (0..self.dim).map(|r| self.row(r).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    /// Restriction to the listed basis indices.
    pub fn submatrix(&self, indices: &[usize]) -> DMatrix<f64> {
        let mut position = vec![usize::MAX; self.dim];
        for (i, &b) in indices.iter().enumerate() {
            position[b] = i;
        }
        let mut m = DMatrix::zeros(indices.len(), indices.len());
        for (i, &r) in indices.iter().enumerate() {
            for (c, v) in self.row(r) {
                let j = position[c];
                if j != usize::MAX {
                    m[(i, j)] += v;
                }
            }
        }
        m
    }

    const MAGIC: [u8; 4] = *b"JCHH";

    /// Binary dump: magic, u32 version, u64 dimension, u64 nnz, f64 shift,
    /// then `nnz` triples `(u64 row, u64 col, f64 value)`, little endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&Self::MAGIC)?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        w.write_all(&(self.nnz() as u64).to_le_bytes())?;
        w.write_all(&self.shift.to_le_bytes())?;
        for (r, c, v) in self.triplets() {
            w.write_all(&(r as u64).to_le_bytes())?;
            w.write_all(&(c as u64).to_le_bytes())?;
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        if b4 != Self::MAGIC {
            return Err(Error::InvalidArgument("not a JCHH operator dump".into()));
        }
        r.read_exact(&mut b4)?;
        let mut u64_ = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let dim = u64_(&mut r)? as usize;
        let nnz = u64_(&mut r)? as usize;
        let shift = f64::from_bits(u64_(&mut r)?);
        let mut triplets = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let row = u64_(&mut r)? as usize;
            let col = u64_(&mut r)? as usize;
            let v = f64::from_bits(u64_(&mut r)?);
            triplets.push((row, col, v));
        }
        let mut h = Self::from_triplets(dim, triplets)?;
        h.shift = shift;
        Ok(h)
    }
}

/// Assemble the one-excitation operator of a resolved lattice.
///
/// Photon rows carry `omega_r` on the diagonal, `beta_r` to the local atom
/// and `-kappa` to each bonded photon; atom rows carry `epsilon_r` and
/// `beta_r`.
pub fn assemble(sites: &SiteTable) -> Result<SparseHamiltonian> {
    let n = sites.num_sites();
    let mut triplets = Vec::with_capacity(4 * n + 2 * sites.edges.len());
    for (s, site) in sites.sites.iter().enumerate() {
        let (p, a) = (photon_index(s), atom_index(s));
        triplets.push((p, p, site.omega));
        triplets.push((a, a, site.epsilon));
        triplets.push((p, a, site.beta));
        triplets.push((a, p, site.beta));
    }
    for e in &sites.edges {
        let (pa, pb) = (photon_index(e.a), photon_index(e.b));
        triplets.push((pa, pb, -e.kappa));
        triplets.push((pb, pa, -e.kappa));
    }
    SparseHamiltonian::from_triplets(2 * n, triplets)
}

/// `E_n^± = n omega - Delta/2 ± sqrt(n beta^2 + (Delta/2)^2)`.
pub fn dressed_energy(n: u32, omega: f64, epsilon: f64, beta: f64, branch: Branch) -> Result<f64> {
    if n == 0 {
        return Err(Error::ZeroExcitation);
    }
    let n = n as f64;
    let half = 0.5 * (omega - epsilon);
    Ok(n * omega - half + branch.sign() * (n * beta * beta + half * half).sqrt())
}

/// `Theta_n = atan(-2 sqrt(n) beta / Delta) / 2`, with `Theta_n(Delta = 0) = pi/4`.
pub fn mixing_angle(n: u32, beta: f64, detuning: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::ZeroExcitation);
    }
    if detuning == 0.0 {
        return Ok(if beta == 0.0 { 0.0 } else { std::f64::consts::FRAC_PI_4 });
    }
    Ok(0.5 * (-2.0 * (n as f64).sqrt() * beta / detuning).atan())
}

#[derive(Debug, Clone)]
pub struct DenseSpectrum {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `i` belongs to `values[i]`.
    pub vectors: DMatrix<f64>,
}

impl DenseSpectrum {
    pub fn nearest(&self, target: f64) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if (v - target).abs() < (self.values[best] - target).abs() {
                best = i;
            }
        }
        best
    }
}

pub fn dense_spectrum(h: &SparseHamiltonian) -> Result<DenseSpectrum> {
    dense_spectrum_capped(h, DEFAULT_DENSE_CAP)
}

pub fn dense_spectrum_capped(h: &SparseHamiltonian, cap: usize) -> Result<DenseSpectrum> {
    if h.dim() > cap {
        return Err(Error::DenseCapExceeded { dim: h.dim(), cap });
    }
    Ok(symmetric_eigen(h.to_dense()))
}

/// Ascending eigen-decomposition of a real symmetric matrix.
pub fn symmetric_eigen(m: DMatrix<f64>) -> DenseSpectrum {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    DenseSpectrum { values, vectors }
}
