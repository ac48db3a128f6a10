//! TOML experiment configuration.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::Branch;
use crate::lattice::{
    Boundary, CrossEdgePolicy, GrinBranch, GrinProfile, GrinSpec, LatticeSpec, Orientation, Region, RegionMap,
    RegionParams,
};
use crate::optics::LensReading;
use crate::propagator::{Method, WavePacketSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    BandReport,
    NegativeRefraction,
    FocalRetune,
    PointSourceImaging,
    GrinScan,
    ReflectionTradeoff,
    EweScan,
    EweTimeseries,
    SurfaceBandReport,
}

impl ExperimentId {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::BandReport => "band_report",
            ExperimentId::NegativeRefraction => "negative_refraction",
            ExperimentId::FocalRetune => "focal_retune",
            ExperimentId::PointSourceImaging => "point_source_imaging",
            ExperimentId::GrinScan => "grin_scan",
            ExperimentId::ReflectionTradeoff => "reflection_tradeoff",
            ExperimentId::EweScan => "ewe_scan",
            ExperimentId::EweTimeseries => "ewe_timeseries",
            ExperimentId::SurfaceBandReport => "surface_band_report",
        }
    }
}

/// How detunings are quoted in a config file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetuningSign {
    /// Quoted value is `omega - epsilon`.
    #[default]
    OmegaMinusEpsilon,
    /// Quoted value is `epsilon - omega`.
    EpsilonMinusOmega,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Convention {
    #[serde(default = "upper")]
    pub branch: Branch,
    #[serde(default)]
    pub detuning_sign: DetuningSign,
}

fn upper() -> Branch {
    Branch::Upper
}

impl Default for Convention {
    fn default() -> Self {
        Self { branch: Branch::Upper, detuning_sign: DetuningSign::default() }
    }
}

impl Convention {
    /// Quoted detuning to `omega - epsilon`.
    pub fn internal(&self, quoted: f64) -> f64 {
        match self.detuning_sign {
            DetuningSign::OmegaMinusEpsilon => quoted,
            DetuningSign::EpsilonMinusOmega => -quoted,
        }
    }

    /// `omega - epsilon` to the quoted convention.
    pub fn quoted(&self, internal: f64) -> f64 {
        self.internal(internal)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionConfig {
    pub name: String,
    pub x_start: usize,
    pub x_end: usize,
    #[serde(default)]
    pub omega: f64,
    /// In the quoted convention.
    #[serde(default)]
    pub detuning: f64,
    pub beta: f64,
    #[serde(default = "one")]
    pub kappa: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrinConfig {
    pub region: String,
    /// Ramp width in sites; `0` means an abrupt interface.
    pub ramp: f64,
    /// Defaults to the region width.
    #[serde(default)]
    pub width: Option<f64>,
    /// Outer detuning (quoted); defaults to the region to the left.
    #[serde(default)]
    pub delta1: Option<f64>,
    #[serde(default)]
    pub branch: GrinBranch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_end: f64,
    /// Observation spacing for time series.
    #[serde(default = "one")]
    pub observe_every: f64,
    /// Spacing of stored field snapshots.
    #[serde(default)]
    pub snapshot_every: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    #[serde(default = "default_tol")]
    pub propagator: f64,
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_guard")]
    pub guard: f64,
    #[serde(default = "two")]
    pub guard_margin: usize,
    /// Column range checked by the boundary guard; all columns when absent.
    #[serde(default)]
    pub guard_columns: Option<[usize; 2]>,
    #[serde(default = "three")]
    pub angle_deg: f64,
    #[serde(default = "five_pct")]
    pub reflection_abs: f64,
    /// Allowed focus error as a fraction of the lens width.
    #[serde(default = "ten_pct")]
    pub focus_fraction: f64,
}

fn default_tol() -> f64 {
    1e-8
}
fn default_guard() -> f64 {
    crate::propagator::DEFAULT_GUARD_THRESHOLD
}
fn two() -> usize {
    2
}
fn three() -> f64 {
    3.0
}
fn five_pct() -> f64 {
    0.05
}
fn ten_pct() -> f64 {
    0.1
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            propagator: default_tol(),
            method: Method::default(),
            guard: default_guard(),
            guard_margin: 2,
            guard_columns: None,
            angle_deg: 3.0,
            reflection_abs: 0.05,
            focus_fraction: 0.1,
        }
    }
}

/// Replace a region's detuning by the value whose predicted refraction
/// angle equals `target_angle_deg`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub region: String,
    /// Incident momentum in the region to the left.
    pub k0: [f64; 2],
    pub target_angle_deg: f64,
    /// Added (quoted convention) after calibration.
    #[serde(default)]
    pub offset: f64,
    /// Search bracket in `omega - epsilon`; the propagating window by default.
    #[serde(default)]
    pub bracket: Option<[f64; 2]>,
    /// Quoted detuning whose prediction is reported alongside the calibration.
    #[serde(default)]
    pub reference_detuning: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefractionConfig {
    #[serde(default = "source_name")]
    pub source: String,
    #[serde(default = "lens_name")]
    pub lens: String,
    #[serde(default = "image_name")]
    pub image: String,
    /// Time window over which the source-region population is averaged as
    /// the reflected population.
    #[serde(default)]
    pub reflection_window: Option<[f64; 2]>,
    /// Centroid samples need at least this fraction of the peak lens population.
    #[serde(default = "ninety_pct")]
    pub angle_fraction: f64,
    /// Half-height of the on-axis band used by the focus detector.
    #[serde(default = "one_usize")]
    pub focus_band: usize,
    /// Quoted change of the lens detuning for the retuned run.
    #[serde(default)]
    pub retune_offset: f64,
    /// Ramp widths for the GRIN scan; `0` is the abrupt interface.
    #[serde(default)]
    pub ramps: Vec<f64>,
    /// Quoted lens detunings for the analytic trade-off sweep.
    #[serde(default)]
    pub sweep: Option<LinearAxis>,
    /// Quoted lens detunings checked in the time domain.
    #[serde(default)]
    pub spot_checks: Vec<f64>,
    /// Required ratio of the widest-ramp to abrupt reflection.
    #[serde(default = "twenty_pct")]
    pub grin_ratio: f64,
    /// Expected focal shift to assert, in sites.
    #[serde(default)]
    pub expected_shift: Option<f64>,
    /// Focus runs stop this long after the predicted image time.
    #[serde(default = "focus_margin")]
    pub focus_margin_time: f64,
    /// Rays sampled for the ensemble focus prediction.
    #[serde(default = "ray_samples")]
    pub ray_samples: usize,
}

fn ray_samples() -> usize {
    200_000
}

fn focus_margin() -> f64 {
    25.0
}

fn source_name() -> String {
    "source".into()
}
fn lens_name() -> String {
    "lens".into()
}
fn image_name() -> String {
    "image".into()
}
fn ninety_pct() -> f64 {
    0.9
}
fn one_usize() -> usize {
    1
}
fn twenty_pct() -> f64 {
    0.2
}

impl Default for RefractionConfig {
    fn default() -> Self {
        Self {
            source: source_name(),
            lens: lens_name(),
            image: image_name(),
            reflection_window: None,
            angle_fraction: 0.9,
            focus_band: 1,
            retune_offset: 0.0,
            ramps: Vec::new(),
            sweep: None,
            spot_checks: Vec::new(),
            grin_ratio: 0.2,
            expected_shift: None,
            focus_margin_time: focus_margin(),
            ray_samples: ray_samples(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearAxis {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl LinearAxis {
    pub fn values(&self) -> Vec<f64> {
        if self.count <= 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.start + step * i as f64).collect()
    }
}

/// Quasi-1D strip for evanescent-wave enhancement:
/// outer barrier | well | barrier | lens | image barrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EweConfig {
    #[serde(default = "two")]
    pub ny: usize,
    #[serde(default)]
    pub omega: f64,
    pub beta: f64,
    #[serde(default = "one")]
    pub kappa: f64,
    pub outer_width: usize,
    pub well_width: usize,
    pub barrier_width: usize,
    pub lens_width: usize,
    pub image_width: usize,
    /// Quoted detunings.
    pub barrier_detuning: f64,
    #[serde(default)]
    pub well_detuning: f64,
    #[serde(default)]
    pub lens_detuning: f64,
    /// Target `E - omega` of the prepared well eigenstate.
    pub target_energy: f64,
    #[serde(default = "window")]
    pub window: f64,
    /// Scan grid (quoted lens detunings).
    #[serde(default)]
    pub scan: Option<ScanGrid>,
    #[serde(default = "scan_time")]
    pub scan_time: f64,
    #[serde(default = "one")]
    pub observe_every: f64,
    /// Off-resonance lens detuning for the enhancement baseline (quoted).
    #[serde(default)]
    pub off_resonance: Option<f64>,
    /// Barrier widths for the exponential baseline.
    #[serde(default)]
    pub baseline_barriers: Vec<usize>,
    /// Fit a full exchange `sin^2(Omega t)` instead of the two-parameter model.
    #[serde(default)]
    pub resonant_fit: bool,
    /// Expected fitted `eta` band for the anchor geometry.
    #[serde(default)]
    pub eta_band: Option<[f64; 2]>,
    #[serde(default)]
    pub lens_reading: LensReading,
}

fn window() -> f64 {
    5.0
}
fn scan_time() -> f64 {
    400.0
}

/// Coarse grid plus fine windows around predicted crossings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanGrid {
    pub start: f64,
    pub stop: f64,
    #[serde(default = "coarse")]
    pub coarse_step: f64,
    #[serde(default = "fine")]
    pub fine_step: f64,
    /// Half-width of the fine windows.
    #[serde(default = "fine_reach")]
    pub fine_reach: f64,
}

fn coarse() -> f64 {
    0.05
}
fn fine() -> f64 {
    0.01
}
fn fine_reach() -> f64 {
    0.06
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandConfig {
    #[serde(default)]
    pub omega: f64,
    #[serde(default)]
    pub detuning: f64,
    pub beta: f64,
    #[serde(default = "one")]
    pub kappa: f64,
    #[serde(default = "both")]
    pub orientations: Vec<Orientation>,
    #[serde(default = "table_grid")]
    pub grid: usize,
    #[serde(default = "contour_grid")]
    pub contour_grid: usize,
    /// Contour energies as offsets above the bottom of the chosen band.
    #[serde(default)]
    pub contour_offsets: Vec<f64>,
    #[serde(default = "velocity_checks")]
    pub velocity_checks: usize,
    #[serde(default)]
    pub torus_sizes: Vec<usize>,
}

fn both() -> Vec<Orientation> {
    vec![Orientation::Rotated, Orientation::Unrotated]
}
fn table_grid() -> usize {
    64
}
fn contour_grid() -> usize {
    crate::bands::DEFAULT_CONTOUR_GRID
}
fn velocity_checks() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceConfig {
    #[serde(default = "one")]
    pub kappa: f64,
    #[serde(default)]
    pub omega: f64,
    pub beta: f64,
    /// Quoted detunings of the surface and bulk atoms.
    pub surface_detuning: f64,
    pub bulk_detuning: f64,
    #[serde(default = "surface_samples")]
    pub samples: usize,
}

fn surface_samples() -> usize {
    256
}

/// One sweep axis: a dotted path into the config plus values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub convention: Convention,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub lattice: Option<LatticeSpec>,
    #[serde(default)]
    pub regions: Vec<RegionConfig>,
    #[serde(default)]
    pub cross_edge: CrossEdgePolicy,
    #[serde(default)]
    pub grin: Option<GrinConfig>,
    #[serde(default)]
    pub calibration: Option<Calibration>,
    #[serde(default)]
    pub packet: Option<WavePacketSpec>,
    #[serde(default)]
    pub time: Option<TimeGrid>,
    #[serde(default)]
    pub refraction: Option<RefractionConfig>,
    #[serde(default)]
    pub ewe: Option<EweConfig>,
    #[serde(default)]
    pub bands: Option<BandConfig>,
    #[serde(default)]
    pub surface: Option<SurfaceConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    /// Long-running geometry; refused unless explicitly enabled.
    #[serde(default)]
    pub paper_scale: bool,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        use ExperimentId::*;
        let need = |present: bool, what: &str| -> Result<()> {
            if present {
                Ok(())
            } else {
                Err(Error::Config(format!("{} requires a [{what}] section", self.experiment.name())))
            }
        };
        match self.experiment {
            BandReport => need(self.bands.is_some(), "bands")?,
            SurfaceBandReport => need(self.surface.is_some(), "surface")?,
            EweScan | EweTimeseries => need(self.ewe.is_some(), "ewe")?,
            ReflectionTradeoff => {
                need(!self.regions.is_empty(), "regions")?;
            }
            NegativeRefraction | FocalRetune | PointSourceImaging | GrinScan => {
                need(self.lattice.is_some(), "lattice")?;
                need(!self.regions.is_empty(), "regions")?;
                need(self.packet.is_some(), "packet")?;
                need(self.time.is_some(), "time")?;
            }
        }
        if let Some(spec) = &self.lattice {
            spec.validate()?;
        }
        let r = self.refraction.clone().unwrap_or_default();
        if matches!(self.experiment, NegativeRefraction | FocalRetune | PointSourceImaging | GrinScan | ReflectionTradeoff) {
            for name in [&r.source, &r.lens] {
                self.region(name)?;
            }
        }
        if let Some(c) = &self.calibration {
            self.region(&c.region)?;
        }
        if let Some(g) = &self.grin {
            self.region(&g.region)?;
        }
        if self.experiment == GrinScan && r.ramps.is_empty() {
            return Err(Error::Config("grin_scan needs a non-empty refraction.ramps axis".into()));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(Error::Config("sweep axis is empty".into()));
            }
        }
        if !(self.tolerances.propagator > 0.0 && self.tolerances.propagator < 1.0) {
            return Err(Error::Config(format!("propagator tolerance must lie in (0, 1), got {}", self.tolerances.propagator)));
        }
        if let Some(t) = &self.time {
            if !(t.t_end > 0.0) || !(t.observe_every > 0.0) {
                return Err(Error::Config("time grid must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn region(&self, name: &str) -> Result<&RegionConfig> {
        self.regions.iter().find(|r| r.name == name).ok_or_else(|| Error::Config(format!("unknown region '{name}'")))
    }

    pub fn region_mut(&mut self, name: &str) -> Result<&mut RegionConfig> {
        self.regions.iter_mut().find(|r| r.name == name).ok_or_else(|| Error::Config(format!("unknown region '{name}'")))
    }

    pub fn refraction(&self) -> RefractionConfig {
        self.refraction.clone().unwrap_or_default()
    }

    /// Region parameters in `omega - epsilon` form.
    pub fn region_params(&self, name: &str) -> Result<RegionParams> {
        let r = self.region(name)?;
        Ok(RegionParams::new(r.omega, self.convention.internal(r.detuning), r.beta, r.kappa))
    }

    pub fn orientation(&self) -> Orientation {
        self.lattice.map_or(Orientation::Rotated, |l| l.orientation)
    }

    /// Resolve regions (and GRIN) into a [`RegionMap`].
    pub fn region_map(&self) -> Result<RegionMap> {
        let regions = self
            .regions
            .iter()
            .map(|r| {
                Region::new(
                    r.name.clone(),
                    r.x_start,
                    r.x_end,
                    RegionParams::new(r.omega, self.convention.internal(r.detuning), r.beta, r.kappa),
                )
            })
            .collect::<Vec<_>>();
        let mut map = RegionMap::new(regions).with_cross_edge(self.cross_edge);
        if let Some(g) = &self.grin {
            if g.ramp > 0.0 {
                let region = self.region(&g.region)?;
                let idx = self.regions.iter().position(|r| r.name == g.region).unwrap();
                let outer = match g.delta1 {
                    Some(d) => self.convention.internal(d),
                    None if idx > 0 => self.convention.internal(self.regions[idx - 1].detuning),
                    None => 0.0,
                };
                let profile = GrinProfile {
                    delta1: outer,
                    delta2: self.convention.internal(region.detuning),
                    ramp: g.ramp,
                    width: g.width.unwrap_or((region.x_end - region.x_start) as f64),
                    branch: g.branch,
                };
                map = map.with_grin(GrinSpec { region: g.region.clone(), profile });
            }
        }
        Ok(map)
    }

    pub fn lattice_spec(&self) -> Result<LatticeSpec> {
        self.lattice.ok_or_else(|| Error::Config("missing [lattice]".into()))
    }
}

/// Default strip lattice for EWE runs.
pub fn ewe_lattice(nx: usize, ny: usize) -> Result<LatticeSpec> {
    LatticeSpec::new(nx, ny, Orientation::Rotated, Boundary::Periodic)
}

pub const QUARTER_PI: f64 = PI / 4.0;
