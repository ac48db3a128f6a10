//! Closed-form interface optics: transmitted-mode matching, refraction,
//! reflection, pulse-averaged reflection, lens transmission and resolution.
//!
//! Interfaces are normal to `+x`; `k_y` is conserved across them.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bands::{bloch_energy, group_velocity, Medium};
use crate::error::{Error, Result};
use crate::hamiltonian::Branch;
use crate::lattice::Orientation;

/// Transmitted `k_x` in the second medium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransmittedMode {
    /// Real `k_x`, signed so that the group velocity points along `+x`.
    Propagating { k2x: f64 },
    /// `k_x = i decay` (zone centre) or `pi/d + i decay` (zone edge).
    Evanescent { decay: f64, zone_edge: bool },
}

impl TransmittedMode {
    pub fn is_propagating(&self) -> bool {
        matches!(self, TransmittedMode::Propagating { .. })
    }

    pub fn real(&self) -> Option<f64> {
        match *self {
            TransmittedMode::Propagating { k2x } => Some(k2x),
            TransmittedMode::Evanescent { .. } => None,
        }
    }

    pub fn complex(&self, spacing: f64) -> Complex64 {
        match *self {
            TransmittedMode::Propagating { k2x } => Complex64::new(k2x, 0.0),
            TransmittedMode::Evanescent { decay, zone_edge } => {
                Complex64::new(if zone_edge { PI / spacing } else { 0.0 }, decay)
            }
        }
    }
}

/// Kernel value a mode of energy `e1` needs in `medium`:
/// `K = omega - E + beta^2 / (E - epsilon)`.
pub fn required_kernel(e1: f64, medium: &Medium) -> Result<f64> {
    let p = &medium.params;
    let gap = e1 - p.epsilon();
    if gap.abs() < 1e-12 * (1.0 + e1.abs()) {
        return Err(Error::AtomicPole { energy: e1 });
    }
    Ok(p.omega - e1 + p.beta * p.beta / gap)
}

/// Argument of the arccos in the matching condition.
pub fn matching_argument(e1: f64, ky: f64, medium: &Medium) -> Result<f64> {
    let kreq = required_kernel(e1, medium)?;
    let (kappa, d) = (medium.params.kappa, medium.spacing);
    match medium.orientation {
        Orientation::Rotated => {
            let c = (ky * d).cos();
            if c.abs() < 1e-12 {
                return Err(Error::ZoneEdge { ky });
            }
            Ok(kreq / (4.0 * kappa * c))
        }
        Orientation::Unrotated => Ok(kreq / (2.0 * kappa) - (ky * d).cos()),
    }
}

/// Solve energy conservation plus `k_y` matching for the transmitted mode.
pub fn solve_k2x(e1: f64, ky: f64, medium: &Medium) -> Result<TransmittedMode> {
    let arg = matching_argument(e1, ky, medium)?;
    let d = medium.spacing;
    if arg.abs() > 1.0 {
        return Ok(TransmittedMode::Evanescent { decay: arg.abs().acosh() / d, zone_edge: arg < 0.0 });
    }
    let mut k2x = arg.acos() / d;
    // dE/dK < 0, so v_x > 0 requires dK/dk_x < 0
    let forward = match medium.orientation {
        Orientation::Rotated => (ky * d).cos() > 0.0,
        Orientation::Unrotated => true,
    };
    if !forward {
        k2x = -k2x;
    }
    Ok(TransmittedMode::Propagating { k2x })
}

/// `theta_R = atan(tan k_y cot k_2x)`.
pub fn refraction_angle(ky: f64, mode: &TransmittedMode) -> Result<f64> {
    match *mode {
        TransmittedMode::Propagating { k2x } => Ok((ky.tan() / k2x.tan()).atan()),
        TransmittedMode::Evanescent { .. } => Err(Error::Evanescent),
    }
}

/// Direction of the group velocity, `atan2(v_y, v_x)`.
pub fn velocity_angle(k: [f64; 2], medium: &Medium, branch: Branch) -> f64 {
    let v = group_velocity(k, medium, branch);
    v[1].atan2(v[0])
}

/// Branch of the mode of `medium` with kernel `kernel` and energy `energy`.
pub fn branch_at(energy: f64, kernel: f64, medium: &Medium) -> Branch {
    let p = &medium.params;
    if energy >= 0.5 * (p.omega + p.epsilon() - kernel) {
        Branch::Upper
    } else {
        Branch::Lower
    }
}

fn clamp_unit(r: f64) -> f64 {
    if !(0.0..=1.0).contains(&r) {
        log::debug!("reflection {r:e} clamped to [0, 1]");
    }
    r.clamp(0.0, 1.0)
}

/// `R = |r|^2` at a step between hoppings `kappa1` and `kappa2`.
///
/// Evanescent transmission gives `R = 1`.
pub fn reflection(k1x: f64, mode: &TransmittedMode, kappa1: f64, kappa2: f64) -> Result<f64> {
    let k2x = match *mode {
        TransmittedMode::Propagating { k2x } => k2x,
        TransmittedMode::Evanescent { .. } => return Ok(1.0),
    };
    let cross = 2.0 * kappa1 * kappa2;
    let base = kappa1 * kappa1 + kappa2 * kappa2;
    let den = base - cross * (k1x + k2x).cos();
    if den.abs() < 1e-14 * base {
        return Err(Error::SingularMatching);
    }
    Ok(clamp_unit((base - cross * (k1x - k2x).cos()) / den))
}

/// Complex reflection amplitude for possibly complex `k2x`.
pub fn reflection_amplitude(k1x: f64, k2x: Complex64, kappa1: f64, kappa2: f64) -> Result<Complex64> {
    let i = Complex64::i();
    let e1 = (i * k1x).exp();
    let e2m = (-i * k2x).exp();
    let den = e1 * kappa1 - e2m * kappa2;
    if den.norm() < 1e-14 * (kappa1 + kappa2) {
        return Err(Error::SingularMatching);
    }
    Ok((e2m * kappa2 - e1.conj() * kappa1) / den)
}

/// Full closed-form description of one interface crossing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteringSolution {
    pub k1: [f64; 2],
    pub energy: f64,
    pub mode: TransmittedMode,
    pub theta_incident: f64,
    pub theta_refracted: Option<f64>,
    pub reflection: f64,
    pub transmission: f64,
}

pub fn scatter(k1: [f64; 2], branch: Branch, incident: &Medium, transmitted: &Medium) -> Result<ScatteringSolution> {
    let energy = bloch_energy(k1, incident, branch);
    let mode = solve_k2x(energy, k1[1], transmitted)?;
    let theta_refracted = mode.real().map(|k2x| velocity_angle([k2x, k1[1]], transmitted, branch_at(energy, transmitted.kernel([k2x, k1[1]]), transmitted)));
    let r = reflection(k1[0], &mode, incident.params.kappa, transmitted.params.kappa)?;
    Ok(ScatteringSolution {
        k1,
        energy,
        mode,
        theta_incident: velocity_angle(k1, incident, branch),
        theta_refracted,
        reflection: r,
        transmission: 1.0 - r,
    })
}

/// Normalised weighted momentum samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumDistribution {
    pub samples: Vec<([f64; 2], f64)>,
}

impl MomentumDistribution {
    pub fn new(mut samples: Vec<([f64; 2], f64)>) -> Result<Self> {
        if samples.iter().any(|(_, w)| !(*w >= 0.0)) {
            return Err(Error::InvalidArgument("momentum weights must be non-negative".into()));
        }
        let total: f64 = samples.iter().map(|(_, w)| w).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument("momentum weights sum to zero".into()));
        }
        for (_, w) in &mut samples {
            *w /= total;
        }
        Ok(Self { samples })
    }

    pub fn point(k: [f64; 2]) -> Self {
        Self { samples: vec![(k, 1.0)] }
    }

    /// `|G(k)|^2 ∝ exp(-|k - k0|^2 / sigma^2)` on a square grid reaching
    /// `reach` standard deviations, with `per_axis` points along each axis.
    pub fn gaussian(k0: [f64; 2], sigma: f64, reach: f64, per_axis: usize) -> Result<Self> {
        let n = per_axis.max(1);
        let half = reach * sigma;
        let step = if n > 1 { 2.0 * half / (n - 1) as f64 } else { 0.0 };
        let mut samples = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let k = [k0[0] - half + step * i as f64, k0[1] - half + step * j as f64];
                let r2 = (k[0] - k0[0]).powi(2) + (k[1] - k0[1]).powi(2);
                samples.push((k, (-r2 / (sigma * sigma)).exp()));
            }
        }
        Self::new(samples)
    }

    pub fn total(&self) -> f64 {
        self.samples.iter().map(|(_, w)| w).sum()
    }
}

/// `R_eff = sum_k G(k) R(k)`; evanescent components count as `R = 1`.
pub fn effective_reflection(g: &MomentumDistribution, branch: Branch, incident: &Medium, transmitted: &Medium) -> Result<f64> {
    let mut acc = 0.0;
    for &(k, w) in &g.samples {
        acc += w * scatter(k, branch, incident, transmitted)?.reflection;
    }
    Ok(acc)
}

/// Which numerator to use in the lens transmission.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LensReading {
    /// `T12 T23 R23 / (exp(-2ikW) - R23^2)`.
    #[default]
    Literal,
    /// `T12 T23 exp(-ikW) / (exp(-2ikW) - R23^2)`.
    FabryPerot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LensTransmission {
    pub value: Complex64,
    pub denominator: Complex64,
    pub divergent: bool,
}

pub const DIVERGENCE_THRESHOLD: f64 = 1e-9;

/// Multiple-scattering transmission through a slab. With `r23` from
/// [`reflection_amplitude`], `width` is the distance between the outer sites
/// flanking the slab (its column count plus one).
pub fn lens_transmission(
    t12: Complex64,
    t23: Complex64,
    r23: Complex64,
    k2x: Complex64,
    width: f64,
    reading: LensReading,
) -> LensTransmission {
    let i = Complex64::i();
    let denominator = (-2.0 * i * k2x * width).exp() - r23 * r23;
    let numerator = match reading {
        LensReading::Literal => t12 * t23 * r23,
        LensReading::FabryPerot => t12 * t23 * (-i * k2x * width).exp(),
    };
    let divergent = denominator.norm() < DIVERGENCE_THRESHOLD;
    let value = if divergent { Complex64::new(f64::INFINITY, 0.0) } else { numerator / denominator };
    LensTransmission { value, denominator, divergent }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub delta: f64,
    pub subwavelength: bool,
}

/// `delta = d / (1 - d / lambda0)`.
pub fn resolution(spacing: f64, wavelength: f64) -> Result<Resolution> {
    if !(spacing > 0.0) || !(spacing < wavelength) {
        return Err(Error::InvalidArgument(format!("need 0 < d < lambda0, got d = {spacing}, lambda0 = {wavelength}")));
    }
    let delta = spacing / (1.0 - spacing / wavelength);
    Ok(Resolution { delta, subwavelength: delta < wavelength })
}

/// `delta0 / delta = (omega ∓ beta) / (omega ± beta)` for the upper/lower branch.
pub fn relative_resolution(omega: f64, beta: f64, branch: Branch) -> Result<f64> {
    if !(beta >= 0.0) || !(omega > beta) {
        return Err(Error::InvalidArgument(format!("need omega > beta >= 0, got omega = {omega}, beta = {beta}")));
    }
    Ok(match branch {
        Branch::Upper => (omega - beta) / (omega + beta),
        Branch::Lower => (omega + beta) / (omega - beta),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta2: f64,
    pub theta_incident: f64,
    pub theta_refracted: Option<f64>,
    pub reflection: f64,
}

/// Refraction and reflection along a sweep of the second medium's detuning.
pub fn detuning_sweep(
    k1: [f64; 2],
    branch: Branch,
    incident: &Medium,
    transmitted: &Medium,
    detunings: &[f64],
) -> Result<Vec<SweepRow>> {
    detunings
        .iter()
        .map(|&delta2| {
            let s = scatter(k1, branch, incident, &transmitted.with_detuning(delta2))?;
            Ok(SweepRow {
                delta2,
                theta_incident: s.theta_incident,
                theta_refracted: s.theta_refracted,
                reflection: s.reflection,
            })
        })
        .collect()
}

/// Columns `delta2 theta_i theta_r R`; angles in degrees, `nan` when evanescent.
pub fn write_sweep<W: Write>(mut w: W, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "delta2\ttheta_i_deg\ttheta_r_deg\treflection")?;
    for r in rows {
        let tr = r.theta_refracted.map_or(f64::NAN, f64::to_degrees);
        writeln!(w, "{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}", r.delta2, r.theta_incident.to_degrees(), tr, r.reflection)?;
    }
    Ok(())
}
