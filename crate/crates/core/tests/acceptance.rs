//! Acceptance criteria, one test per criterion. Each check prints a
//! `PASS`/`FAIL` line; the test fails if any check fails.

mod common;

use std::f64::consts::PI;
use std::io::Write;

use jch_core::bands::{surface_band, torus_spectrum, SurfaceCell};
use jch_core::experiments::convention::{probe_conventions, REFERENCE_ANGLE_DEG, REFERENCE_DETUNING};
use jch_core::experiments::reports::{dense_torus, max_relative_gap, surface_ring_spectrum, velocity_fd_error};
use jch_core::experiments::{run_experiment, run_experiment_with, ExperimentResult, RunOptions};
use jch_core::optics::{relative_resolution, resolution};
use jch_core::propagator::{evolve, EvolveOptions};
use jch_core::{
    assemble, build_lattice, Boundary, Branch, Complex64, LatticeSpec, Medium, Orientation, Region, RegionMap,
    RegionParams, StateVector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Criterion {
    id: u32,
    failures: Vec<String>,
}

impl Criterion {
    fn new(id: u32) -> Self {
        Self { id, failures: Vec::new() }
    }

    /// Written straight to stderr so the lines survive output capture.
    fn check(&mut self, name: &str, pass: bool, detail: String) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        let line = format!("{verdict}  [{:>2}] {name}: {detail}\n", self.id);
        std::io::stderr().write_all(line.as_bytes()).unwrap();
        if !pass {
            self.failures.push(name.to_string());
        }
    }

    /// Re-judge a comparison row at an explicit tolerance.
    fn band(&mut self, r: &ExperimentResult, quantity: &str, tol: f64) {
        match r.comparison(quantity) {
            Some(c) => self.check(
                quantity,
                c.discrepancy.abs() <= tol,
                format!("predicted {:.6e} measured {:.6e} |diff| {:.3e} <= {tol:e}", c.predicted, c.measured, c.discrepancy.abs()),
            ),
            None => self.check(quantity, false, "comparison missing".into()),
        }
    }

    fn at_most(&mut self, r: &ExperimentResult, quantity: &str, limit: f64) {
        match r.comparison(quantity) {
            Some(c) => self.check(quantity, c.measured <= limit, format!("measured {:.6e} <= {limit:e}", c.measured)),
            None => self.check(quantity, false, "comparison missing".into()),
        }
    }

    fn finish(self) {
        assert!(self.failures.is_empty(), "criterion {} failed: {:?}", self.id, self.failures);
    }
}

fn run(name: &str) -> ExperimentResult {
    run_experiment(&common::load(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn criterion_01_bloch_spectrum_matches_dense_torus() {
    let mut c = Criterion::new(1);
    for orientation in [Orientation::Rotated, Orientation::Unrotated] {
        for detuning in [0.0, -5.27] {
            let m = Medium::new(RegionParams::new(0.0, detuning, 100.0, 1.0), orientation);
            let worst = (2..=8)
                .map(|n| max_relative_gap(&dense_torus(n, &m).unwrap(), &torus_spectrum(n, n, &m)))
                .fold(0.0, f64::max);
            c.check(
                &format!("torus N=2..8 {orientation:?} delta={detuning}"),
                worst <= 1e-9,
                format!("max relative gap {worst:.3e} <= 1e-9"),
            );
        }
    }
    c.finish();
}

#[test]
fn criterion_02_propagator_matches_exponential_and_stays_unitary() {
    let mut c = Criterion::new(2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let spec = LatticeSpec::new(7, 7, Orientation::Rotated, Boundary::Open).unwrap();
    let map = RegionMap::new(vec![
        Region::new("a", 0, 3, RegionParams::new(0.0, 0.0, 100.0, 1.0)),
        Region::new("b", 3, 7, RegionParams::new(0.0, -5.27, 100.0, 1.0)),
    ]);
    let h = assemble(&build_lattice(spec, map).unwrap()).unwrap();
    let mut psi = StateVector::zeros(h.num_sites());
    for a in &mut psi.amps {
        *a = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
    psi.normalize().unwrap();
    for t in [1.0, 10.0, 50.0] {
        let out = evolve(&h, &psi, t, &EvolveOptions::default().with_tol(1e-10)).unwrap();
        let err = common::l2_distance(&out.state.amps, &common::expm_oracle(&h, &psi, t));
        c.check(&format!("expm oracle, {} sites, t={t}", h.num_sites()), err <= 1e-8, format!("2-norm {err:.3e} <= 1e-8"));
    }
    let anchor = run("ewe_anchor.toml");
    let t_end = anchor.manifest.config["time"]["t_end"].as_f64();
    c.check("EWE strip runs to t >= 1e4", t_end.is_some_and(|t| t >= 1e4), format!("t_end {t_end:?}"));
    c.at_most(&anchor, "norm_drift", 1e-8);
    c.finish();
}

#[test]
fn criterion_03_group_velocity_matches_finite_differences() {
    let mut c = Criterion::new(3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for orientation in [Orientation::Rotated, Orientation::Unrotated] {
        let m = Medium::new(RegionParams::new(0.0, -5.27, 100.0, 1.0), orientation);
        let (mut worst, mut ratios) = (0.0f64, Vec::new());
        for _ in 0..1000 {
            let k = [rng.gen_range(-PI..PI), rng.gen_range(-PI..PI)];
            for branch in [Branch::Upper, Branch::Lower] {
                worst = worst.max(velocity_fd_error(&m, branch, k, 1e-4));
                let (a, b) = (velocity_fd_error(&m, branch, k, 2e-2), velocity_fd_error(&m, branch, k, 1e-2));
                if b > 1e-9 {
                    ratios.push(a / b);
                }
            }
        }
        ratios.sort_by(f64::total_cmp);
        let median = ratios[ratios.len() / 2];
        c.check(&format!("1000 k-points {orientation:?}"), worst <= 1e-6, format!("max relative error {worst:.3e} <= 1e-6"));
        c.check(
            &format!("second-order convergence {orientation:?}"),
            (median - 4.0).abs() < 0.2,
            format!("median error ratio for halved step {median:.4} (4 expected)"),
        );
    }
    c.finish();
}

#[test]
fn criterion_04_negative_refraction_angle() {
    let mut c = Criterion::new(4);
    let r = run("negative_refraction.toml");
    c.band(&r, "theta_r_deg", 3.0);

    // the quoted detuning itself, under every (branch, sign) reading
    let incident = Medium::new(RegionParams::new(0.0, 0.0, 100.0, 1.0), Orientation::Rotated);
    let probes = probe_conventions([PI / 4.0, PI / 4.0], &incident, &incident, REFERENCE_DETUNING);
    let angles: Vec<Option<f64>> = probes.iter().map(|p| p.theta_deg).collect();
    let hit = angles.iter().flatten().any(|a| (a - REFERENCE_ANGLE_DEG).abs() <= 0.5);
    c.check(
        "prediction at quoted delta=-5.27 is -25 deg",
        hit,
        format!("predicted angles over the four readings {angles:?} (None = evanescent)"),
    );
    c.finish();
}

#[test]
fn criterion_05_reflection() {
    let mut c = Criterion::new(5);
    let r = run("negative_refraction.toml");
    c.band(&r, "reflection_eff", 0.05);
    let strip = common::two_kappa_strip();
    let rel = (strip.measured - strip.predicted).abs() / strip.predicted;
    c.check(
        "single-k strip reflection",
        rel <= 0.02,
        format!("predicted {:.5} measured {:.5} relative {rel:.3e} <= 0.02", strip.predicted, strip.measured),
    );
    c.finish();
}

fn slab_width(r: &ExperimentResult) -> f64 {
    let regions = r.manifest.config["regions"].as_array().unwrap();
    let lens = regions.iter().find(|g| g["name"] == "lens").unwrap();
    (lens["x_end"].as_u64().unwrap() - lens["x_start"].as_u64().unwrap()) as f64
}

#[test]
fn criterion_06_focal_retune() {
    let mut c = Criterion::new(6);
    let r = run("focal_retune.toml");
    let w = slab_width(&r);
    c.band(&r, "focus_shift_direction", 0.0);
    c.band(&r, "focus_shift", 0.1 * w);
    c.finish();
}

/// Long-running; enabled with `JCH_FULL_SCALE=1`.
#[test]
fn criterion_06_focal_retune_full_scale() {
    let mut c = Criterion::new(6);
    if std::env::var_os("JCH_FULL_SCALE").is_none() {
        std::io::stderr().write_all(b"SKIP  [ 6] full-scale 56-site shift (set JCH_FULL_SCALE=1)\n").unwrap();
        return;
    }
    let opts = RunOptions { allow_paper_scale: true, keep_snapshots: false };
    let r = run_experiment_with(&common::load("paper_scale/focal_retune.toml"), &opts).unwrap();
    let w = slab_width(&r);
    c.band(&r, "focus_shift_direction", 0.0);
    c.band(&r, "focus_shift_expected", 0.1 * w);
    c.finish();
}

#[test]
fn criterion_07_grin_suppresses_reflection() {
    let mut c = Criterion::new(7);
    let r = run("grin_scan.toml");
    let data = r.dataset("grin_reflection").expect("ramp dataset");
    let (w, refl) = (data.column("ramp").unwrap(), data.column("reflected").unwrap());
    c.check("ramp widths", w == [0.0, 2.0, 4.0, 8.0, 16.0], format!("{w:?}"));
    let monotone = refl.windows(2).all(|p| p[1] <= p[0]);
    c.check("reflection non-increasing in ramp width", monotone, format!("{refl:?}"));
    let ratio = refl[refl.len() - 1] / refl[0];
    c.check("widest ramp at most 20% of abrupt", ratio <= 0.2, format!("ratio {ratio:.4e} <= 0.2"));
    c.finish();
}

#[test]
fn criterion_08_ewe_resonances() {
    let mut c = Criterion::new(8);
    let scan = run("ewe_scan.toml");
    let cfg = common::load("ewe_scan.toml");
    let ewe = cfg.ewe.as_ref().unwrap();
    let resolution = ewe.scan.as_ref().map(|s| s.fine_step).unwrap();
    let peaks: Vec<_> = scan.comparisons.iter().filter(|k| k.quantity.ends_with("_vs_gap_min")).collect();
    c.check("scan found resonance peaks", peaks.len() >= 2, format!("{} peaks", peaks.len()));
    for p in peaks {
        c.check(
            &p.quantity,
            p.discrepancy.abs() <= resolution,
            format!("peak {:.6} gap minimum {:.6} |diff| {:.2e} <= {resolution:e}", p.measured, p.predicted, p.discrepancy.abs()),
        );
    }

    let series = run("ewe_timeseries.toml");
    c.at_most(&series, "fit_residual", 1e-3);

    let off = run("ewe_offresonance.toml");
    match off.comparison("eta") {
        Some(k) => {
            let rel = k.discrepancy.abs() / k.predicted.abs();
            c.check("eta", rel <= 0.1, format!("fit {:.6e} direct {:.6e} relative {rel:.3e} <= 0.1", k.measured, k.predicted));
        }
        None => c.check("eta", false, "comparison missing".into()),
    }

    let anchor = run("ewe_anchor.toml");
    match anchor.comparison("eta") {
        Some(k) => c.check(
            "anchor eta near 1e-3 at lens detuning 0.305",
            (5e-4..=2e-3).contains(&k.measured),
            format!("fit {:.6e} in [5e-4, 2e-3]", k.measured),
        ),
        None => c.check("anchor eta", false, "comparison missing".into()),
    }
    c.finish();
}

#[test]
fn criterion_09_resolution_calculators() {
    let mut c = Criterion::new(9);
    for lambda in [1.0, 2.0, 0.75, 1024.0] {
        let r = resolution(lambda / 2.0, lambda).unwrap();
        c.check(&format!("delta(d = lambda/2) for lambda={lambda}"), r.delta == lambda, format!("{} == {lambda}", r.delta));
    }
    let r = resolution(0.25, 1.0).unwrap();
    c.check("delta(d = 1/4, lambda = 1)", r.delta == 1.0 / 3.0 && r.subwavelength, format!("{}", r.delta));
    for (omega, beta, up, down) in [(300.0, 100.0, 0.5, 2.0), (5.0, 3.0, 0.25, 4.0), (7.0, 0.0, 1.0, 1.0)] {
        let (u, d) = (relative_resolution(omega, beta, Branch::Upper).unwrap(), relative_resolution(omega, beta, Branch::Lower).unwrap());
        c.check(&format!("(omega -+ beta)/(omega +- beta) at ({omega}, {beta})"), u == up && d == down, format!("{u}, {d}"));
    }
    c.check("rejects d >= lambda", resolution(1.0, 1.0).is_err(), String::new());
    c.check("rejects omega <= beta", relative_resolution(1.0, 1.0, Branch::Upper).is_err(), String::new());
    c.finish();
}

#[test]
fn criterion_10_surface_bands() {
    let mut c = Criterion::new(10);
    let cell = SurfaceCell { kappa: 1.0, omega: 0.0, beta: 100.0, epsilon_surface: -20.0, epsilon_bulk: 0.0, spacing: 1.0 };
    let n = 256;
    let mut analytic: Vec<f64> =
        (0..n).flat_map(|m| surface_band(2.0 * PI * m as f64 / (n as f64 * 2f64.sqrt()), &cell)).collect();
    analytic.sort_by(f64::total_cmp);
    let gap = max_relative_gap(&analytic, &surface_ring_spectrum(n, &cell));
    c.check("4x4 cell vs 256-point strip diagonalisation", gap <= 1e-9, format!("max relative gap {gap:.3e} <= 1e-9"));

    let r = run("surface_band_report.toml");
    c.band(&r, "strip_oracle", 1e-9);
    c.at_most(&r, "surface_to_bulk_spread", 1.0);
    c.finish();
}
