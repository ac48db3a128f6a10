//! Config-driven experiments: each run yields datasets plus a
//! predicted-versus-measured table.

pub mod config;
pub mod convention;
pub mod ewe;
pub mod output;
pub mod raytrace;
pub mod refraction;
pub mod reports;
pub mod sweep;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagator::Snapshot;

pub use config::*;
pub use convention::{ConventionRecord, CalibrationRecord};
pub use output::{verify_checksums, write_result};
pub use raytrace::{ensemble_profile, ray_trace, EnsembleProfile, Layer, ProbeLine, RayPath};
pub use sweep::{apply_override, run_sweep, SweepPoint};

/// Columnar numeric table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

/// A closed-form prediction next to its time-domain measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub quantity: String,
    pub predicted: f64,
    pub measured: f64,
    /// `measured - predicted`.
    pub discrepancy: f64,
    /// Allowed `|discrepancy|`, when the quantity has an acceptance band.
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub bound: Bound,
}

/// How `tolerance` is applied to the discrepancy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// `|measured - predicted| <= tolerance`.
    #[default]
    Band,
    /// `measured - predicted <= tolerance`: `predicted` is an upper limit.
    AtMost,
}

impl Comparison {
    pub fn new(quantity: impl Into<String>, predicted: f64, measured: f64, tolerance: Option<f64>) -> Self {
        Self { quantity: quantity.into(), predicted, measured, discrepancy: measured - predicted, tolerance, bound: Bound::Band }
    }

    /// `measured <= limit`.
    pub fn at_most(quantity: impl Into<String>, limit: f64, measured: f64) -> Self {
        Self { bound: Bound::AtMost, ..Self::new(quantity, limit, measured, Some(0.0)) }
    }

    pub fn pass(&self) -> Option<bool> {
        let d = self.discrepancy;
        self.tolerance.map(|t| match self.bound {
            Bound::Band => d.abs() <= t,
            Bound::AtMost => d <= t,
        })
    }
}

/// Snapshots of one run on an `nx x ny` lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSeries {
    pub label: String,
    pub nx: usize,
    pub ny: usize,
    pub frames: Vec<Snapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: ExperimentId,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub convention: ConventionRecord,
    pub calibration: Option<CalibrationRecord>,
    pub timings: Vec<Timing>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub manifest: Manifest,
    pub datasets: Vec<Dataset>,
    pub snapshots: Vec<SnapshotSeries>,
    pub comparisons: Vec<Comparison>,
}

impl ExperimentResult {
    pub fn comparison(&self, quantity: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.quantity == quantity)
    }

    pub fn dataset(&self, name: &str) -> Option<&Dataset> {
        self.datasets.iter().find(|d| d.name == name)
    }
}

/// Per-run switches that are not part of the physics config.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub allow_paper_scale: bool,
    /// Keep full snapshot series in the result.
    pub keep_snapshots: bool,
}

/// What an individual experiment driver produces; wrapped into an
/// [`ExperimentResult`] by [`run_experiment`].
#[derive(Debug, Default)]
pub struct Outcome {
    pub datasets: Vec<Dataset>,
    pub snapshots: Vec<SnapshotSeries>,
    pub comparisons: Vec<Comparison>,
    pub notes: Vec<String>,
    pub timings: Vec<Timing>,
}

impl Outcome {
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        self.timings.push(Timing { stage: stage.to_string(), seconds: start.elapsed().as_secs_f64() });
        Ok(out)
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_with(config, &RunOptions::default())
}

pub fn run_experiment_with(config: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentResult> {
    config.validate()?;
    if config.paper_scale && !opts.allow_paper_scale {
        return Err(Error::Config("paper-scale config refused; enable it explicitly".into()));
    }
    let convention = convention::convention_record(config);
    let mut cfg = config.clone();
    let calibration = convention::apply_calibration(&mut cfg)?;
    let start = Instant::now();
    use ExperimentId::*;
    let mut outcome = match cfg.experiment {
        BandReport => reports::band_report(&cfg)?,
        SurfaceBandReport => reports::surface_band_report(&cfg)?,
        NegativeRefraction => refraction::negative_refraction(&cfg, opts)?,
        FocalRetune => refraction::focal_retune(&cfg, opts)?,
        PointSourceImaging => refraction::point_source_imaging(&cfg, opts)?,
        GrinScan => refraction::grin_scan(&cfg, opts)?,
        ReflectionTradeoff => refraction::reflection_tradeoff(&cfg, opts)?,
        EweScan => ewe::ewe_scan(&cfg)?,
        EweTimeseries => ewe::ewe_timeseries(&cfg)?,
    };
    outcome.timings.push(Timing { stage: "total".into(), seconds: start.elapsed().as_secs_f64() });
    let manifest = Manifest {
        experiment: cfg.experiment,
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        config: serde_json::to_value(config).map_err(|e| Error::Config(e.to_string()))?,
        convention,
        calibration,
        timings: outcome.timings,
        notes: outcome.notes,
    };
    Ok(ExperimentResult {
        manifest,
        datasets: outcome.datasets,
        snapshots: if opts.keep_snapshots { outcome.snapshots } else { Vec::new() },
        comparisons: outcome.comparisons,
    })
}
