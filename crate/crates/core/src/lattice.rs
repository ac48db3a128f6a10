//! Cavity-array geometry: lattice orientation, region partition along the
//! propagation axis, per-site physical parameters and the graded-index
//! (GRIN) detuning ramp.
//!
//! Sites are indexed row-major over `(ix, iy)`, i.e. `index = ix * ny + iy`,
//! so one column of constant `x` is contiguous. The interface normal is
//! always `+x`. Energies are in units of the hopping `kappa`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Neighbours at `(±d, ±d)`: the interface runs along a lattice diagonal.
    Rotated,
    /// Neighbours at `(±d, 0)` and `(0, ±d)`.
    Unrotated,
}

impl Orientation {
    /// Offsets that point "forward" (each undirected bond is generated once
    /// from its lower endpoint).
    pub fn forward_offsets(self) -> [(i64, i64); 2] {
        match self {
            Orientation::Rotated => [(1, 1), (1, -1)],
            Orientation::Unrotated => [(1, 0), (0, 1)],
        }
    }

    pub fn neighbor_offsets(self) -> [(i64, i64); 4] {
        match self {
            Orientation::Rotated => [(1, 1), (1, -1), (-1, 1), (-1, -1)],
            Orientation::Unrotated => [(1, 0), (-1, 0), (0, 1), (0, -1)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Open,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub nx: usize,
    pub ny: usize,
    pub orientation: Orientation,
    /// Boundary along x, and along y unless `boundary_y` is set.
    pub boundary: Boundary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_y: Option<Boundary>,
    #[serde(default = "default_spacing")]
    pub spacing: f64,
}

fn default_spacing() -> f64 {
    1.0
}

impl LatticeSpec {
    pub fn new(nx: usize, ny: usize, orientation: Orientation, boundary: Boundary) -> Result<Self> {
        let spec = Self { nx, ny, orientation, boundary, boundary_y: None, spacing: 1.0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_boundary_y(mut self, boundary: Boundary) -> Self {
        self.boundary_y = Some(boundary);
        self
    }

    pub fn boundary_x(&self) -> Boundary {
        self.boundary
    }

    pub fn boundary_y(&self) -> Boundary {
        self.boundary_y.unwrap_or(self.boundary)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::InvalidLattice(format!(
                "need nx, ny >= 2, got {}x{}",
                self.nx, self.ny
            )));
        }
        if !(self.spacing > 0.0) || !self.spacing.is_finite() {
            return Err(Error::InvalidLattice(format!("spacing must be positive, got {}", self.spacing)));
        }
        Ok(())
    }

    pub fn num_sites(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        ix * self.ny + iy
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index / self.ny, index % self.ny)
    }

    /// Site reached from `(ix, iy)` by `offset`, honouring the boundary.
    pub fn step(&self, ix: usize, iy: usize, offset: (i64, i64)) -> Option<(usize, usize)> {
        let wrap = |v: i64, n: usize, b: Boundary| -> Option<usize> {
            let n = n as i64;
            match b {
                Boundary::Periodic => Some(v.rem_euclid(n) as usize),
                Boundary::Open => (0..n).contains(&v).then_some(v as usize),
            }
        };
        let x = wrap(ix as i64 + offset.0, self.nx, self.boundary_x())?;
        let y = wrap(iy as i64 + offset.1, self.ny, self.boundary_y())?;
        Some((x, y))
    }
}

/// On-site and hopping parameters of one homogeneous region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionParams {
    /// Cavity frequency.
    #[serde(default)]
    pub omega: f64,
    /// `omega - epsilon`.
    #[serde(default)]
    pub detuning: f64,
    /// Single-photon Rabi frequency.
    pub beta: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

fn default_kappa() -> f64 {
    1.0
}

impl RegionParams {
    pub fn new(omega: f64, detuning: f64, beta: f64, kappa: f64) -> Self {
        Self { omega, detuning, beta, kappa }
    }

    /// Atomic transition energy.
    pub fn epsilon(&self) -> f64 {
        self.omega - self.detuning
    }

    pub fn with_detuning(self, detuning: f64) -> Self {
        Self { detuning, ..self }
    }
}

/// A band of columns `x_start..x_end` sharing one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub x_start: usize,
    pub x_end: usize,
    pub params: RegionParams,
}

impl Region {
    pub fn new(name: impl Into<String>, x_start: usize, x_end: usize, params: RegionParams) -> Self {
        Self { name: name.into(), x_start, x_end, params }
    }

    pub fn width(&self) -> usize {
        self.x_end - self.x_start
    }

    pub fn contains_column(&self, ix: usize) -> bool {
        (self.x_start..self.x_end).contains(&ix)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrinBranch {
    /// Exit ramp mirrors the entry ramp.
    #[default]
    Symmetric,
    /// `cos^2(pi (x' + W - w) / 2w)` exit ramp, kept for comparison.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrinProfile {
    pub delta1: f64,
    pub delta2: f64,
    /// Ramp width in sites.
    pub ramp: f64,
    /// Total lens width in sites.
    pub width: f64,
    #[serde(default)]
    pub branch: GrinBranch,
}

impl GrinProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.ramp > 0.0) || self.ramp > self.width / 2.0 {
            return Err(Error::InvalidGrin(format!(
                "need 0 < w <= W/2, got w = {}, W = {}",
                self.ramp, self.width
            )));
        }
        Ok(())
    }

    pub fn detuning(&self, x: f64) -> Result<f64> {
        grin_detuning(x, self.delta1, self.delta2, self.ramp, self.width, self.branch)
    }
}

/// Graded detuning `x` sites into a lens of width `width` whose entry and exit
/// ramps are `ramp` sites wide.
///
/// The ramp rises as `sin^2(pi x / 2w)` from `delta1` to `delta2`, is flat on
/// `(w, W - w]`, and falls back to `delta1` at `x = W`.
pub fn grin_detuning(x: f64, delta1: f64, delta2: f64, ramp: f64, width: f64, branch: GrinBranch) -> Result<f64> {
    if !(ramp > 0.0) || ramp > width / 2.0 {
        return Err(Error::InvalidGrin(format!("need 0 < w <= W/2, got w = {ramp}, W = {width}")));
    }
    if !(x > 0.0) || x > width {
        return Err(Error::InvalidGrin(format!("x' = {x} outside (0, {width}]")));
    }
    let span = delta2 - delta1;
    let value = if x <= ramp {
        span * (FRAC_PI_2 * x / ramp).sin().powi(2) + delta1
    } else if x <= width - ramp {
        delta2
    } else {
        let phase = match branch {
            GrinBranch::Symmetric => FRAC_PI_2 * (x - (width - ramp)) / ramp,
            GrinBranch::Literal => FRAC_PI_2 * (x + width - ramp) / ramp,
        };
        span * phase.cos().powi(2) + delta1
    };
    Ok(value)
}

/// GRIN ramp attached to one region; `x' = ix - x_start + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrinSpec {
    pub region: String,
    pub profile: GrinProfile,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossEdgePolicy {
    /// `sqrt(kappa_i kappa_j)`.
    #[default]
    GeometricMean,
    /// Hopping of the site with the smaller `x`.
    LowerX,
    /// Hopping of the site with the larger `x`.
    HigherX,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMap {
    pub regions: Vec<Region>,
    #[serde(default)]
    pub grin: Option<GrinSpec>,
    #[serde(default)]
    pub cross_edge: CrossEdgePolicy,
}

impl RegionMap {
    pub fn new(regions: Vec<Region>) -> Self {
        Self { regions, grin: None, cross_edge: CrossEdgePolicy::default() }
    }

    pub fn uniform(nx: usize, params: RegionParams) -> Self {
        Self::new(vec![Region::new("bulk", 0, nx, params)])
    }

    pub fn with_grin(mut self, grin: GrinSpec) -> Self {
        self.grin = Some(grin);
        self
    }

    pub fn with_cross_edge(mut self, policy: CrossEdgePolicy) -> Self {
        self.cross_edge = policy;
        self
    }

    pub fn region_id(&self, name: &str) -> Result<usize> {
        self.regions
            .iter()
            .position(|r| r.name == name)
            .ok_or_else(|| Error::UnknownRegion(name.to_string()))
    }

    /// Region id for every column, checking full, non-overlapping coverage.
    fn column_regions(&self, nx: usize) -> Result<Vec<usize>> {
        let mut owner: Vec<Option<usize>> = vec![None; nx];
        for (id, region) in self.regions.iter().enumerate() {
            if region.x_end <= region.x_start {
                return Err(Error::DimensionMismatch(format!("region '{}' is empty", region.name)));
            }
            if region.x_end > nx {
                return Err(Error::DimensionMismatch(format!(
                    "region '{}' ends at column {} but nx = {}",
                    region.name, region.x_end, nx
                )));
            }
            for ix in region.x_start..region.x_end {
                if owner[ix].replace(id).is_some() {
                    return Err(Error::RegionOverlap { start: region.x_start, end: region.x_end });
                }
            }
            if !(region.params.kappa > 0.0) {
                return Err(Error::NonPositiveHopping(region.params.kappa));
            }
        }
        owner
            .into_iter()
            .enumerate()
            .map(|(column, id)| id.ok_or(Error::RegionGap { column }))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Site {
    pub ix: usize,
    pub iy: usize,
    pub region: usize,
    pub omega: f64,
    pub epsilon: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Site {
    pub fn detuning(&self) -> f64 {
        self.omega - self.epsilon
    }
}

/// One photonic bond. Periodic lattices with a side of 2 produce repeated
/// bonds between the same pair; they are kept so that every bulk site has
/// exactly four bond slots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub kappa: f64,
}

/// Fully resolved lattice: sites with parameters plus the bond list.
#[derive(Debug, Clone)]
pub struct SiteTable {
    pub spec: LatticeSpec,
    pub map: RegionMap,
    pub sites: Vec<Site>,
    pub edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, f64)>>,
    column_detuning: Vec<f64>,
}

impl SiteTable {
    pub fn num_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn neighbors(&self, site: usize) -> &[(usize, f64)] {
        &self.adjacency[site]
    }

    pub fn degree(&self, site: usize) -> usize {
        self.adjacency[site].len()
    }

    pub fn region_of_column(&self, ix: usize) -> usize {
        self.sites[self.spec.index(ix, 0)].region
    }

    /// Resolved detuning of each column (after GRIN).
    pub fn column_detuning(&self) -> &[f64] {
        &self.column_detuning
    }

    /// Parameters of column `ix`, GRIN included.
    pub fn column_params(&self, ix: usize) -> RegionParams {
        let region = &self.map.regions[self.region_of_column(ix)];
        region.params.with_detuning(self.column_detuning[ix])
    }

    pub fn region_mask(&self, region: usize) -> Vec<bool> {
        self.sites.iter().map(|s| s.region == region).collect()
    }

    pub fn mask_for(&self, names: &[&str]) -> Result<Vec<bool>> {
        let ids = names.iter().map(|n| self.map.region_id(n)).collect::<Result<Vec<_>>>()?;
        Ok(self.sites.iter().map(|s| ids.contains(&s.region)).collect())
    }

    pub fn position(&self, site: usize) -> [f64; 2] {
        let s = &self.sites[site];
        [s.ix as f64 * self.spec.spacing, s.iy as f64 * self.spec.spacing]
    }

    /// Sites within `margin` sites of an open edge, optionally restricted to
    /// a column range.
    pub fn boundary_mask(&self, margin: usize, columns: Option<(usize, usize)>) -> Vec<bool> {
        let spec = &self.spec;
        let (open_x, open_y) = (spec.boundary_x() == Boundary::Open, spec.boundary_y() == Boundary::Open);
        self.sites
            .iter()
            .map(|s| {
                if let Some((lo, hi)) = columns {
                    if s.ix < lo || s.ix >= hi {
                        return false;
                    }
                }
                (open_x && (s.ix < margin || s.ix + margin >= spec.nx))
                    || (open_y && (s.iy < margin || s.iy + margin >= spec.ny))
            })
            .collect()
    }
}

/// Resolve geometry, regions and parameters into a [`SiteTable`].
pub fn build_lattice(spec: LatticeSpec, regions: RegionMap) -> Result<SiteTable> {
    spec.validate()?;
    let owner = regions.column_regions(spec.nx)?;

    let mut column_detuning: Vec<f64> = owner.iter().map(|&id| regions.regions[id].params.detuning).collect();
    if let Some(grin) = &regions.grin {
        grin.profile.validate()?;
        let id = regions.region_id(&grin.region)?;
        let region = &regions.regions[id];
        if grin.profile.width > region.width() as f64 {
            return Err(Error::InvalidGrin(format!(
                "GRIN width {} exceeds region '{}' width {}",
                grin.profile.width,
                region.name,
                region.width()
            )));
        }
        for ix in region.x_start..region.x_end {
            let xp = (ix - region.x_start + 1) as f64;
            if xp <= grin.profile.width {
                column_detuning[ix] = grin.profile.detuning(xp)?;
            }
        }
    }

    let mut sites = Vec::with_capacity(spec.num_sites());
    for ix in 0..spec.nx {
        let params = regions.regions[owner[ix]].params;
        for iy in 0..spec.ny {
            sites.push(Site {
                ix,
                iy,
                region: owner[ix],
                omega: params.omega,
                epsilon: params.omega - column_detuning[ix],
                beta: params.beta,
                kappa: params.kappa,
            });
        }
    }

    let mut edges = Vec::with_capacity(2 * spec.num_sites());
    for ix in 0..spec.nx {
        for iy in 0..spec.ny {
            let a = spec.index(ix, iy);
            for offset in spec.orientation.forward_offsets() {
                if let Some((jx, jy)) = spec.step(ix, iy, offset) {
                    let b = spec.index(jx, jy);
                    let kappa = bond_kappa(&sites[a], &sites[b], regions.cross_edge);
                    if !(kappa > 0.0) {
                        return Err(Error::NonPositiveHopping(kappa));
                    }
                    edges.push(Edge { a, b, kappa });
                }
            }
        }
    }

    let mut adjacency = vec![Vec::with_capacity(4); sites.len()];
    for e in &edges {
        adjacency[e.a].push((e.b, e.kappa));
        adjacency[e.b].push((e.a, e.kappa));
    }

    Ok(SiteTable { spec, map: regions, sites, edges, adjacency, column_detuning })
}

fn bond_kappa(a: &Site, b: &Site, policy: CrossEdgePolicy) -> f64 {
    if a.region == b.region {
        return a.kappa;
    }
    // a wrapped periodic bond has the larger-x site as `a`
    let (lo, hi) = if a.ix <= b.ix { (a, b) } else { (b, a) };
    match policy {
        CrossEdgePolicy::GeometricMean => (a.kappa * b.kappa).sqrt(),
        CrossEdgePolicy::LowerX => lo.kappa,
        CrossEdgePolicy::HigherX => hi.kappa,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> RegionParams {
        RegionParams::new(0.0, 0.0, 100.0, 1.0)
    }

    fn uniform(nx: usize, ny: usize, o: Orientation, b: Boundary) -> SiteTable {
        build_lattice(LatticeSpec::new(nx, ny, o, b).unwrap(), RegionMap::uniform(nx, params())).unwrap()
    }

    #[test]
    fn smallest_open_lattice() {
        let t = uniform(2, 2, Orientation::Unrotated, Boundary::Open);
        assert_eq!(t.num_sites(), 4);
        assert_eq!(t.edges.len(), 4);
    }

    #[test]
    fn open_x_periodic_y() {
        let spec = LatticeSpec::new(4, 6, Orientation::Rotated, Boundary::Open).unwrap().with_boundary_y(Boundary::Periodic);
        assert_eq!(spec.step(1, 5, (1, 1)), Some((2, 0)));
        assert_eq!(spec.step(3, 2, (1, 1)), None);
        let t = build_lattice(spec, RegionMap::uniform(4, params())).unwrap();
        assert!((0..t.num_sites()).all(|s| t.degree(s) == if t.sites[s].ix % 3 == 0 { 2 } else { 4 }));
        let mask = t.boundary_mask(1, None);
        assert!(t.sites.iter().zip(&mask).all(|(s, &m)| m == (s.ix == 0 || s.ix == 3)));
    }

    #[test]
    fn periodic_lattice_is_four_regular() {
        for o in [Orientation::Unrotated, Orientation::Rotated] {
            for n in 2..=5 {
                let t = uniform(n, n, o, Boundary::Periodic);
                assert!((0..t.num_sites()).all(|s| t.degree(s) == 4), "{o:?} n={n}");
                assert_eq!(t.edges.len(), 2 * t.num_sites());
            }
        }
    }

    #[test]
    fn rotated_edge_count_matches_enumeration() {
        for n in 2..=6 {
            let t = uniform(n, n, Orientation::Rotated, Boundary::Open);
            // brute force over all unordered site pairs
            let mut count = 0;
            for a in 0..n * n {
                for b in a + 1..n * n {
                    let (ax, ay) = (a / n, a % n);
                    let (bx, by) = (b / n, b % n);
                    if ax.abs_diff(bx) == 1 && ay.abs_diff(by) == 1 {
                        count += 1;
                    }
                }
            }
            assert_eq!(t.edges.len(), count, "n={n}");
        }
        assert_eq!(uniform(3, 3, Orientation::Rotated, Boundary::Open).edges.len(), 8);
    }

    #[test]
    fn rotated_and_unrotated_differ_on_torus() {
        let r = uniform(4, 4, Orientation::Rotated, Boundary::Periodic);
        let u = uniform(4, 4, Orientation::Unrotated, Boundary::Periodic);
        let pairs = |t: &SiteTable| {
            let mut v: Vec<(usize, usize)> = t.edges.iter().map(|e| (e.a.min(e.b), e.a.max(e.b))).collect();
            v.sort();
            v
        };
        assert_ne!(pairs(&r), pairs(&u));
        let deg = |t: &SiteTable| (0..t.num_sites()).map(|s| t.degree(s)).collect::<Vec<_>>();
        assert_eq!(deg(&r), deg(&u));
    }

    #[test]
    fn adjacency_is_symmetric() {
        let t = uniform(5, 4, Orientation::Rotated, Boundary::Open);
        for s in 0..t.num_sites() {
            for &(n, k) in t.neighbors(s) {
                assert!(t.neighbors(n).iter().any(|&(m, k2)| m == s && k2 == k));
            }
        }
    }

    #[test]
    fn region_errors() {
        let spec = LatticeSpec::new(6, 3, Orientation::Rotated, Boundary::Open).unwrap();
        let gap = RegionMap::new(vec![Region::new("a", 0, 2, params()), Region::new("b", 3, 6, params())]);
        assert!(matches!(build_lattice(spec, gap), Err(Error::RegionGap { column: 2 })));
        let long = RegionMap::new(vec![Region::new("a", 0, 7, params())]);
        assert!(matches!(build_lattice(spec, long), Err(Error::DimensionMismatch(_))));
        let bad = RegionMap::uniform(6, RegionParams::new(0.0, 0.0, 1.0, 0.0));
        assert!(matches!(build_lattice(spec, bad), Err(Error::NonPositiveHopping(_))));
        assert!(LatticeSpec::new(1, 4, Orientation::Rotated, Boundary::Open).is_err());
    }

    #[test]
    fn cross_edge_policies() {
        let spec = LatticeSpec::new(4, 2, Orientation::Unrotated, Boundary::Open).unwrap();
        let map = RegionMap::new(vec![
            Region::new("a", 0, 2, RegionParams::new(0.0, 0.0, 0.0, 1.0)),
            Region::new("b", 2, 4, RegionParams::new(0.0, 0.0, 0.0, 4.0)),
        ]);
        let cross = |policy| {
            let t = build_lattice(spec, map.clone().with_cross_edge(policy)).unwrap();
            t.edges.iter().find(|e| t.sites[e.a].ix == 1 && t.sites[e.b].ix == 2).unwrap().kappa
        };
        assert_eq!(cross(CrossEdgePolicy::GeometricMean), 2.0);
        assert_eq!(cross(CrossEdgePolicy::LowerX), 1.0);
        assert_eq!(cross(CrossEdgePolicy::HigherX), 4.0);
    }

    #[test]
    fn grin_examples() {
        let g = |x| grin_detuning(x, 0.0, -6.0, 4.0, 20.0, GrinBranch::Symmetric).unwrap();
        assert!(g(1e-9).abs() < 1e-12);
        assert_eq!(g(4.0), -6.0);
        assert!((g(2.0) + 3.0).abs() < 1e-14);
        assert_eq!(g(10.0), -6.0);
        assert!(g(20.0).abs() < 1e-14);
        assert!(grin_detuning(0.0, 0.0, 1.0, 2.0, 8.0, GrinBranch::Symmetric).is_err());
        assert!(grin_detuning(9.0, 0.0, 1.0, 2.0, 8.0, GrinBranch::Symmetric).is_err());
        assert!(grin_detuning(1.0, 0.0, 1.0, 5.0, 8.0, GrinBranch::Symmetric).is_err());
    }

    #[test]
    fn literal_grin_branch_misses_exit_value() {
        // with w = 3, W = 10 the literal exit ramp ends at cos^2(17 pi / 6) = 3/4
        let lit = grin_detuning(10.0, 0.0, 1.0, 3.0, 10.0, GrinBranch::Literal).unwrap();
        assert!((lit - 0.75).abs() < 1e-12);
        let sym = grin_detuning(10.0, 0.0, 1.0, 3.0, 10.0, GrinBranch::Symmetric).unwrap();
        assert!(sym.abs() < 1e-12);
    }

    #[test]
    fn grin_applies_to_lens_columns() {
        let spec = LatticeSpec::new(20, 2, Orientation::Rotated, Boundary::Periodic).unwrap();
        let lens = RegionParams::new(0.0, 4.0, 100.0, 1.0);
        let map = RegionMap::new(vec![
            Region::new("src", 0, 5, params()),
            Region::new("lens", 5, 15, lens),
            Region::new("img", 15, 20, params()),
        ])
        .with_grin(GrinSpec {
            region: "lens".into(),
            profile: GrinProfile { delta1: 0.0, delta2: 4.0, ramp: 3.0, width: 10.0, branch: GrinBranch::Symmetric },
        });
        let t = build_lattice(spec, map).unwrap();
        let d = t.column_detuning();
        assert_eq!(d[4], 0.0);
        assert!((d[5] - 1.0).abs() < 1e-12); // 4 sin^2(pi/6)
        assert_eq!(d[7], 4.0);
        assert_eq!(d[10], 4.0);
        assert!(d[14].abs() < 1e-12);
        let s = t.sites[spec.index(6, 1)];
        assert!((s.detuning() - d[6]).abs() < 1e-15);
    }
}
