//! Gaussian-pulse refraction experiments on the 2D lattice.

use rayon::prelude::*;

use super::config::{ExperimentConfig, GrinConfig};
use super::raytrace::{ensemble_profile, ray_trace, Layer, ProbeLine, RayPath};
use super::{Comparison, Dataset, Outcome, RunOptions, SnapshotSeries};
use crate::bands::Medium;
use crate::error::{Error, Result};
use crate::hamiltonian::{assemble, Branch, SparseHamiltonian};
use crate::lattice::{build_lattice, Boundary, SiteTable};
use crate::optics::{effective_reflection, scatter, MomentumDistribution};
use crate::propagator::{
    evolve, fit_track, gaussian_packet, masked_centroid, BoundaryGuard, EvolutionResult,
    EvolveOptions, PreparedPacket, Snapshot,
};

/// Lattice, operator and initial packet of one run.
pub struct PulseRun {
    pub table: SiteTable,
    pub h: SparseHamiltonian,
    pub packet: PreparedPacket,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<PulseRun> {
    let table = build_lattice(cfg.lattice_spec()?, cfg.region_map()?)?;
    let h = assemble(&table)?;
    let spec = cfg.packet.as_ref().ok_or_else(|| Error::Config("missing [packet]".into()))?;
    let packet = gaussian_packet(spec, &table)?;
    if let Some(w) = &packet.warning {
        log::warn!("{w}");
    }
    Ok(PulseRun { table, h, packet })
}

fn evolve_options(cfg: &ExperimentConfig, table: &SiteTable) -> EvolveOptions {
    let tol = &cfg.tolerances;
    let columns = tol.guard_columns.map(|[a, b]| (a, b)).or_else(|| {
        let lens = cfg.region(&cfg.refraction().lens).ok()?;
        Some((lens.x_start, table.spec.nx))
    });
    EvolveOptions {
        tol: tol.propagator,
        method: tol.method,
        snapshot_every: cfg.time.as_ref().map(|t| t.observe_every),
        guard: Some(BoundaryGuard { mask: table.boundary_mask(tol.guard_margin, columns), threshold: tol.guard }),
        ..EvolveOptions::default()
    }
}

/// Evolve to `t_end`, failing on a guard breach.
pub fn run_pulse(cfg: &ExperimentConfig, run: &PulseRun, t_end: f64) -> Result<EvolutionResult> {
    let opts = evolve_options(cfg, &run.table);
    let out = evolve(&run.h, &run.packet.state, t_end, &opts)?;
    if let Some((time, population)) = out.guard_breach {
        return Err(Error::BoundaryGuard { population, time });
    }
    Ok(out)
}

fn branch(cfg: &ExperimentConfig) -> Branch {
    cfg.convention.branch
}

fn primary_k(cfg: &ExperimentConfig) -> Result<[f64; 2]> {
    cfg.packet
        .as_ref()
        .and_then(|p| p.components.first())
        .map(|c| c.k0)
        .ok_or_else(|| Error::Config("packet has no components".into()))
}

fn media(cfg: &ExperimentConfig) -> Result<(Medium, Medium)> {
    let r = cfg.refraction();
    let o = cfg.orientation();
    Ok((Medium::new(cfg.region_params(&r.source)?, o), Medium::new(cfg.region_params(&r.lens)?, o)))
}

/// Slab stack in site units; interfaces sit half-way between columns.
pub fn layers(cfg: &ExperimentConfig) -> Result<Vec<Layer>> {
    let o = cfg.orientation();
    cfg.regions
        .iter()
        .map(|r| {
            Ok(Layer {
                x_start: r.x_start as f64 - 0.5,
                x_end: r.x_end as f64 - 0.5,
                medium: Medium::new(cfg.region_params(&r.name)?, o),
            })
        })
        .collect()
}

fn trace(cfg: &ExperimentConfig) -> Result<RayPath> {
    let r0 = cfg.packet.as_ref().map(|p| p.r0).unwrap_or_default();
    ray_trace(r0, primary_k(cfg)?, &layers(cfg)?, branch(cfg))
}

/// Region populations per snapshot.
fn population_series(frames: &[Snapshot], masks: &[Vec<bool>]) -> Vec<Vec<f64>> {
    frames
        .iter()
        .map(|f| {
            let p = f.populations();
            masks.iter().map(|m| p.iter().zip(m).filter(|(_, &b)| b).map(|(v, _)| v).sum()).collect()
        })
        .collect()
}

fn mean_in_window(times: &[f64], values: &[f64], window: [f64; 2]) -> Result<f64> {
    let picked: Vec<f64> =
        times.iter().zip(values).filter(|(t, _)| **t >= window[0] - 1e-9 && **t <= window[1] + 1e-9).map(|(_, v)| *v).collect();
    if picked.is_empty() {
        return Err(Error::Config(format!("no observation inside window {window:?}")));
    }
    Ok(picked.iter().sum::<f64>() / picked.len() as f64)
}

/// Centroid-velocity angle over the snapshots in which the lens holds at
/// least `fraction` of its peak population.
pub fn lens_angle(frames: &[Snapshot], table: &SiteTable, lens: &[bool], fraction: f64) -> Result<(f64, f64, Vec<(f64, [f64; 2])>)> {
    let pts: Vec<(f64, f64, [f64; 2])> = frames
        .iter()
        .map(|f| {
            let (w, c) = masked_centroid(&f.populations(), table, lens);
            (f.time, w, c)
        })
        .collect();
    let peak = pts.iter().map(|p| p.1).fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::InsufficientPopulation("lens never populated".into()));
    }
    let used: Vec<(f64, [f64; 2])> = pts.iter().filter(|p| p.1 >= fraction * peak).map(|p| (p.0, p.2)).collect();
    let track = fit_track(used.iter().map(|p| p.0).collect(), used.iter().map(|p| p.1).collect())?;
    Ok((track.angle, track.angle_sigma, used))
}

/// Image-plane focus from the time-maximum on-axis population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Focus {
    pub column: usize,
    pub x: f64,
    pub width: f64,
    pub peak: f64,
}

/// `M(x) = max_t sum_{|y - y0| <= band} P(x, y, t)` over `columns`.
pub fn axis_profile(frames: &[Snapshot], table: &SiteTable, y0: f64, band: usize, columns: (usize, usize)) -> Vec<f64> {
    let ny = table.spec.ny;
    let yc = y0.round() as i64;
    let rows: Vec<usize> =
        (yc - band as i64..=yc + band as i64).filter(|y| *y >= 0 && (*y as usize) < ny).map(|y| y as usize).collect();
    let mut m = vec![0.0f64; columns.1 - columns.0];
    for f in frames {
        for (i, ix) in (columns.0..columns.1).enumerate() {
            let s: f64 = rows.iter().map(|&iy| f.total(table.spec.index(ix, iy))).sum();
            m[i] = m[i].max(s);
        }
    }
    m
}

/// Argmax of the profile refined by the centroid of its half-maximum lobe;
/// `width` is the full lobe extent.
pub fn detect_focus(profile: &[f64], first_column: usize) -> Result<Focus> {
    let (imax, &peak) =
        profile.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).ok_or(Error::NoPeak)?;
    if !(peak > 0.0) {
        return Err(Error::NoPeak);
    }
    let half = 0.5 * peak;
    let mut lo = imax;
    while lo > 0 && profile[lo - 1] >= half {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < profile.len() && profile[hi + 1] >= half {
        hi += 1;
    }
    let (mut w, mut acc) = (0.0, 0.0);
    for (i, &p) in profile.iter().enumerate().take(hi + 1).skip(lo) {
        w += p;
        acc += p * i as f64;
    }
    Ok(Focus { column: first_column + imax, x: first_column as f64 + acc / w, width: (hi - lo + 1) as f64, peak })
}

fn snapshot_series(label: &str, cfg: &ExperimentConfig, table: &SiteTable, frames: &[Snapshot]) -> Option<SnapshotSeries> {
    let every = cfg.time.as_ref()?.snapshot_every?;
    let mut next = 0.0;
    let mut kept = Vec::new();
    for f in frames {
        if f.time + 1e-9 >= next {
            kept.push(f.clone());
            next = f.time + every;
        }
    }
    Some(SnapshotSeries { label: label.to_string(), nx: table.spec.nx, ny: table.spec.ny, frames: kept })
}

fn t_end(cfg: &ExperimentConfig) -> Result<f64> {
    cfg.time.as_ref().map(|t| t.t_end).ok_or_else(|| Error::Config("missing [time]".into()))
}

fn reflection_window(cfg: &ExperimentConfig) -> Result<[f64; 2]> {
    match cfg.refraction().reflection_window {
        Some(w) => Ok(w),
        None => {
            let t = t_end(cfg)?;
            Ok([t, t])
        }
    }
}

struct ReflectionRun {
    times: Vec<f64>,
    source: Vec<f64>,
    lens: Vec<f64>,
    rest: Vec<f64>,
    measured: f64,
    predicted: f64,
    single_k: f64,
    norm_drift: f64,
    frames: Vec<Snapshot>,
    table: SiteTable,
}

fn reflection_run(cfg: &ExperimentConfig, until: f64) -> Result<ReflectionRun> {
    let r = cfg.refraction();
    let run = prepare(cfg)?;
    let (inc, lens) = media(cfg)?;
    let predicted = effective_reflection(&run.packet.distribution, branch(cfg), &inc, &lens)?;
    let single_k = scatter(primary_k(cfg)?, branch(cfg), &inc, &lens)?.reflection;
    let out = run_pulse(cfg, &run, until)?;
    let source_mask = run.table.mask_for(&[&r.source])?;
    let lens_mask = run.table.mask_for(&[&r.lens])?;
    let series = population_series(&out.snapshots, &[source_mask, lens_mask]);
    let times: Vec<f64> = out.snapshots.iter().map(|f| f.time).collect();
    let source: Vec<f64> = series.iter().map(|s| s[0]).collect();
    let lens_pop: Vec<f64> = series.iter().map(|s| s[1]).collect();
    let rest: Vec<f64> = out.snapshots.iter().zip(&series).map(|(f, s)| f.populations().iter().sum::<f64>() - s[0] - s[1]).collect();
    let measured = mean_in_window(&times, &source, reflection_window(cfg)?)?;
    Ok(ReflectionRun {
        times,
        source,
        lens: lens_pop,
        rest,
        measured,
        predicted,
        single_k,
        norm_drift: out.norm_drift,
        frames: out.snapshots,
        table: run.table,
    })
}

fn population_dataset(name: &str, rr: &ReflectionRun) -> Dataset {
    let mut d = Dataset::new(name, &["t", "source", "lens", "beyond"]);
    for i in 0..rr.times.len() {
        d.push(vec![rr.times[i], rr.source[i], rr.lens[i], rr.rest[i]]);
    }
    d
}

pub fn negative_refraction(cfg: &ExperimentConfig, _opts: &RunOptions) -> Result<Outcome> {
    let mut out = Outcome::default();
    let r = cfg.refraction();
    let (inc, lens) = media(cfg)?;
    let k0 = primary_k(cfg)?;
    let predicted = scatter(k0, branch(cfg), &inc, &lens)?;
    let theta = predicted.theta_refracted.ok_or(Error::EvanescentRay { x: cfg.region(&r.lens)?.x_start as f64 })?;
    let rr = out.time("evolve", || reflection_run(cfg, t_end(cfg)?))?;
    let lens_mask = rr.table.mask_for(&[&r.lens])?;
    let (angle, sigma, used) = lens_angle(&rr.frames, &rr.table, &lens_mask, r.angle_fraction)?;
    out.comparisons.push(Comparison::new("theta_r_deg", theta.to_degrees(), angle.to_degrees(), Some(cfg.tolerances.angle_deg)));
    out.comparisons.push(Comparison::new("theta_r_fit_sigma_deg", 0.0, sigma.to_degrees(), None));
    out.comparisons.push(Comparison::new("reflection_eff", rr.predicted, rr.measured, Some(cfg.tolerances.reflection_abs)));
    out.comparisons.push(Comparison::new("reflection_single_k", rr.single_k, rr.measured, None));
    out.comparisons.push(Comparison::new("norm_drift", 0.0, rr.norm_drift, None));
    out.datasets.push(population_dataset("populations", &rr));
    let mut track = Dataset::new("lens_track", &["t", "x", "y"]);
    for (t, c) in &used {
        track.push(vec![*t, c[0], c[1]]);
    }
    out.datasets.push(track);
    out.snapshots.extend(snapshot_series("pulse", cfg, &rr.table, &rr.frames));
    out.notes.push(format!("transmitted k2x = {:?}", predicted.mode));
    Ok(out)
}

struct FocusRun {
    /// Central ray.
    predicted: RayPath,
    /// Focus of the ray-ensemble profile.
    predicted_focus: Focus,
    /// Ray estimate of the largest wrapped population on the probe line.
    wrapped: f64,
    predicted_profile: Vec<f64>,
    focus: Focus,
    profile: Vec<f64>,
    first_column: usize,
    frames: Vec<Snapshot>,
    table: SiteTable,
}

fn focus_run(cfg: &ExperimentConfig) -> Result<FocusRun> {
    let r = cfg.refraction();
    let predicted = trace(cfg)?;
    let image_time = predicted.image_time.ok_or(Error::NoPeak)?;
    let until = t_end(cfg)?.min(image_time + r.focus_margin_time);
    let run = prepare(cfg)?;
    let out = run_pulse(cfg, &run, until)?;
    let image = cfg.region(&r.image)?;
    let spec = cfg.packet.as_ref().ok_or_else(|| Error::Config("missing [packet]".into()))?;
    let lattice = &run.table.spec;
    let period = (lattice.boundary_y() == Boundary::Periodic).then_some(lattice.ny as f64 * lattice.spacing);
    let probe = ProbeLine { y0: spec.r0[1], band: r.focus_band, columns: (image.x_start, image.x_end), period };
    let profile = axis_profile(&out.snapshots, &run.table, probe.y0, probe.band, probe.columns);
    let focus = detect_focus(&profile, image.x_start)?;
    let times: Vec<f64> = out.snapshots.iter().map(|f| f.time).collect();
    let ensemble = ensemble_profile(spec, &layers(cfg)?, branch(cfg), &times, &probe, r.ray_samples, cfg.seed)?;
    let predicted_focus = detect_focus(&ensemble.profile, image.x_start)?;
    Ok(FocusRun {
        predicted,
        wrapped: ensemble.wrapped.iter().copied().fold(0.0, f64::max),
        predicted_focus,
        predicted_profile: ensemble.profile,
        focus,
        profile,
        first_column: image.x_start,
        frames: out.snapshots,
        table: run.table,
    })
}

fn profile_dataset(name: &str, f: &FocusRun) -> Dataset {
    let mut d = Dataset::new(name, &["x", "max_axis_population", "ray_ensemble"]);
    for (i, (m, e)) in f.profile.iter().zip(&f.predicted_profile).enumerate() {
        d.push(vec![(f.first_column + i) as f64, *m, *e]);
    }
    d
}

fn ray_dataset(name: &str, p: &RayPath) -> Dataset {
    let mut d = Dataset::new(name, &["x", "y", "t"]);
    for (pt, t) in p.points.iter().zip(&p.times) {
        d.push(vec![pt[0], pt[1], *t]);
    }
    d
}

fn lens_width(cfg: &ExperimentConfig) -> Result<f64> {
    let l = cfg.region(&cfg.refraction().lens)?;
    Ok((l.x_end - l.x_start) as f64)
}

/// The retuned copy of `cfg`.
pub fn retuned(cfg: &ExperimentConfig) -> Result<ExperimentConfig> {
    let mut c = cfg.clone();
    let r = cfg.refraction();
    c.region_mut(&r.lens)?.detuning += r.retune_offset;
    c.calibration = None;
    Ok(c)
}

pub fn focal_retune(cfg: &ExperimentConfig, _opts: &RunOptions) -> Result<Outcome> {
    let mut out = Outcome::default();
    let r = cfg.refraction();
    if r.retune_offset == 0.0 {
        return Err(Error::Config("focal_retune needs a non-zero refraction.retune_offset".into()));
    }
    let other = retuned(cfg)?;
    let runs = out.time("evolve", || {
        let pair: Vec<Result<FocusRun>> = [cfg, &other].into_par_iter().map(focus_run).collect();
        pair.into_iter().collect::<Result<Vec<_>>>()
    })?;
    let (base, ret) = (&runs[0], &runs[1]);
    let tol = cfg.tolerances.focus_fraction * lens_width(cfg)?;
    let ray_x = |f: &FocusRun| f.predicted.image.map_or(f64::NAN, |p| p[0]);
    out.comparisons.push(Comparison::new("focus_base_x", base.predicted_focus.x, base.focus.x, Some(tol)));
    out.comparisons.push(Comparison::new("focus_retuned_x", ret.predicted_focus.x, ret.focus.x, Some(tol)));
    let predicted_shift = ret.predicted_focus.x - base.predicted_focus.x;
    let measured_shift = ret.focus.x - base.focus.x;
    out.comparisons.push(Comparison::new("focus_shift", predicted_shift, measured_shift, Some(tol)));
    out.comparisons.push(Comparison::new(
        "focus_shift_direction",
        predicted_shift.signum(),
        measured_shift.signum(),
        Some(0.0),
    ));
    if let Some(expected) = r.expected_shift {
        out.comparisons.push(Comparison::new("focus_shift_expected", expected, measured_shift, Some(tol)));
    }
    out.comparisons.push(Comparison::new("focus_shift_central_ray", ray_x(ret) - ray_x(base), measured_shift, None));
    let wrapped = base.wrapped.max(ret.wrapped);
    out.comparisons.push(Comparison::at_most("probe_wrapped_population", cfg.tolerances.guard, wrapped));
    out.comparisons.push(Comparison::new("focus_base_width", base.predicted_focus.width, base.focus.width, None));
    out.comparisons.push(Comparison::new("focus_retuned_width", ret.predicted_focus.width, ret.focus.width, None));
    let (inc, _) = media(cfg)?;
    let k0 = primary_k(cfg)?;
    for (label, c, run) in [("base", cfg, base), ("retuned", &other, ret)] {
        let (_, lens) = media(c)?;
        let theta = scatter(k0, branch(c), &inc, &lens)?.theta_refracted.map_or(f64::NAN, f64::to_degrees);
        out.notes.push(format!(
            "{label}: lens detuning (quoted) {}, predicted theta_r {theta:.3} deg, image {:?}",
            c.region(&r.lens)?.detuning,
            run.predicted.image
        ));
        out.datasets.push(profile_dataset(&format!("axis_profile_{label}"), run));
        out.datasets.push(ray_dataset(&format!("ray_{label}"), &run.predicted));
        out.snapshots.extend(snapshot_series(label, c, &run.table, &run.frames));
    }
    Ok(out)
}

pub fn point_source_imaging(cfg: &ExperimentConfig, _opts: &RunOptions) -> Result<Outcome> {
    let mut out = Outcome::default();
    let run = out.time("evolve", || focus_run(cfg))?;
    let tol = cfg.tolerances.focus_fraction * lens_width(cfg)?;
    out.comparisons.push(Comparison::new("image_x", run.predicted_focus.x, run.focus.x, Some(tol)));
    let ray_x = run.predicted.image.map_or(f64::NAN, |p| p[0]);
    out.comparisons.push(Comparison::new("image_x_central_ray", ray_x, run.focus.x, None));
    out.comparisons.push(Comparison::new("image_width", run.predicted_focus.width, run.focus.width, None));
    out.comparisons.push(Comparison::at_most("probe_wrapped_population", cfg.tolerances.guard, run.wrapped));
    out.datasets.push(profile_dataset("axis_profile", &run));
    out.datasets.push(ray_dataset("ray", &run.predicted));
    out.snapshots.extend(snapshot_series("image", cfg, &run.table, &run.frames));
    Ok(out)
}

/// Copy of `cfg` with a GRIN ramp of width `ramp` on the lens (`0`: abrupt).
pub fn with_ramp(cfg: &ExperimentConfig, ramp: f64) -> ExperimentConfig {
    let mut c = cfg.clone();
    let lens = cfg.refraction().lens;
    c.grin = (ramp > 0.0).then(|| {
        let base = cfg.grin.clone().unwrap_or(GrinConfig {
            region: lens.clone(),
            ramp,
            width: None,
            delta1: None,
            branch: Default::default(),
        });
        GrinConfig { ramp, ..base }
    });
    c.calibration = None;
    c
}

pub fn grin_scan(cfg: &ExperimentConfig, _opts: &RunOptions) -> Result<Outcome> {
    let mut out = Outcome::default();
    let r = cfg.refraction();
    let until = reflection_window(cfg)?[1];
    let runs = out.time("evolve", || {
        r.ramps
            .par_iter()
            .map(|&w| reflection_run(&with_ramp(cfg, w), until))
            .collect::<Vec<_>>()
            .into_iter()
            .collect::<Result<Vec<_>>>()
    })?;
    let mut d = Dataset::new("grin_reflection", &["ramp", "reflected"]);
    for (w, rr) in r.ramps.iter().zip(&runs) {
        d.push(vec![*w, rr.measured]);
        out.datasets.push(population_dataset(&format!("populations_w{w}"), rr));
    }
    out.datasets.push(d);
    if let Some(i) = r.ramps.iter().position(|&w| w == 0.0) {
        let rr = &runs[i];
        out.comparisons.push(Comparison::new("reflection_abrupt", rr.predicted, rr.measured, Some(cfg.tolerances.reflection_abs)));
        let widest = r.ramps.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(j, _)| j).unwrap_or(i);
        let ratio = runs[widest].measured / rr.measured;
        out.comparisons.push(Comparison::at_most("reflection_ratio_widest", r.grin_ratio, ratio));
    }
    let mut order: Vec<usize> = (0..r.ramps.len()).collect();
    order.sort_by(|&a, &b| r.ramps[a].total_cmp(&r.ramps[b]));
    let increases = order.windows(2).filter(|w| runs[w[1]].measured > runs[w[0]].measured).count();
    out.comparisons.push(Comparison::new("reflection_increases_with_ramp", 0.0, increases as f64, Some(0.0)));
    Ok(out)
}

pub fn reflection_tradeoff(cfg: &ExperimentConfig, _opts: &RunOptions) -> Result<Outcome> {
    let mut out = Outcome::default();
    let r = cfg.refraction();
    let (inc, lens) = media(cfg)?;
    let k0 = cfg
        .packet
        .as_ref()
        .and_then(|p| p.components.first().map(|c| c.k0))
        .or(cfg.calibration.as_ref().map(|c| c.k0))
        .unwrap_or([std::f64::consts::FRAC_PI_4; 2]);
    let g = match &cfg.packet {
        Some(p) => p.momentum_distribution(41)?,
        None => MomentumDistribution::point(k0),
    };
    let axis = r.sweep.ok_or_else(|| Error::Config("reflection_tradeoff needs refraction.sweep".into()))?;
    let mut d = Dataset::new(
        "tradeoff",
        &["delta2_quoted", "delta2", "theta_i_deg", "theta_r_deg", "reflection", "reflection_eff"],
    );
    let mut track = Vec::new();
    for q in axis.values() {
        let internal = cfg.convention.internal(q);
        let m = lens.with_detuning(internal);
        let s = scatter(k0, branch(cfg), &inc, &m)?;
        let reff = effective_reflection(&g, branch(cfg), &inc, &m)?;
        let theta_i = inc.velocity(k0, branch(cfg));
        let theta_i = theta_i[1].atan2(theta_i[0]).to_degrees();
        let theta_r = s.theta_refracted.map_or(f64::NAN, f64::to_degrees);
        d.push(vec![q, internal, theta_i, theta_r, s.reflection, reff]);
        track.push((theta_r, s.reflection));
    }
    out.datasets.push(d);
    let (mismatches, steps) = tradeoff_mismatches(&track);
    if steps == 0 {
        return Err(Error::Config("sweep has no two consecutive negatively refracting points".into()));
    }
    out.comparisons.push(Comparison::new("tradeoff_sign_mismatches", 0.0, mismatches as f64, Some(0.0)));
    out.notes.push(format!("trade-off compared over {steps} consecutive steps"));
    if !r.spot_checks.is_empty() {
        if cfg.lattice.is_none() || cfg.packet.is_none() {
            return Err(Error::Config("time-domain spot checks need [lattice] and [packet]".into()));
        }
        let until = reflection_window(cfg)?[1];
        let runs = out.time("evolve", || {
            r.spot_checks
                .par_iter()
                .map(|&q| {
                    let mut c = cfg.clone();
                    c.region_mut(&r.lens)?.detuning = q;
                    c.calibration = None;
                    reflection_run(&c, until)
                })
                .collect::<Vec<_>>()
                .into_iter()
                .collect::<Result<Vec<_>>>()
        })?;
        for (q, rr) in r.spot_checks.iter().zip(&runs) {
            out.comparisons.push(Comparison::new(
                format!("reflection_eff_at_{q}"),
                rr.predicted,
                rr.measured,
                Some(cfg.tolerances.reflection_abs),
            ));
        }
    }
    Ok(out)
}

/// Steps along a sweep where `|theta_R|` and `R` change with opposite signs,
/// counted over consecutive points that both refract negatively; also the
/// number of steps examined.
pub fn tradeoff_mismatches(track: &[(f64, f64)]) -> (usize, usize) {
    let mut mismatches = 0;
    let mut steps = 0;
    for w in track.windows(2) {
        let ((t0, r0), (t1, r1)) = (w[0], w[1]);
        if !(t0 < 0.0 && t1 < 0.0) {
            continue;
        }
        steps += 1;
        let (dt, dr) = (t1.abs() - t0.abs(), r1 - r0);
        if dt * dr < 0.0 {
            mismatches += 1;
        }
    }
    (mismatches, steps)
}
