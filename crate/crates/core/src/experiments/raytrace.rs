//! Geometric ray tracing through a stack of x-slabs.

use rand::distributions::WeightedIndex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bands::Medium;
use crate::error::{Error, Result};
use crate::hamiltonian::Branch;
use crate::optics::{branch_at, scatter, solve_k2x, velocity_angle};
use crate::propagator::WavePacketSpec;

/// A slab `x_start <= x < x_end` (site units; interfaces sit half-way
/// between columns).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub x_start: f64,
    pub x_end: f64,
    pub medium: Medium,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayPath {
    /// Source, each interface hit and the end of the last layer.
    pub points: Vec<[f64; 2]>,
    /// Group-velocity angle (radians) in each layer.
    pub angles: Vec<f64>,
    pub momenta: Vec<[f64; 2]>,
    /// Travel time to each of `points` at the group speed.
    pub times: Vec<f64>,
    /// Every crossing of the line `y = source.y` after the source.
    pub axis_crossings: Vec<[f64; 2]>,
    /// Axis crossing in the last layer: where the mirrored ray meets this one.
    pub image: Option<[f64; 2]>,
    pub image_time: Option<f64>,
}

/// Trace the ray launched at `source` with momentum `k` in the first
/// layer. `k_y` is conserved; each layer uses its forward-going mode.
pub fn ray_trace(source: [f64; 2], k: [f64; 2], layers: &[Layer], branch: Branch) -> Result<RayPath> {
    let first = layers.first().ok_or_else(|| Error::InvalidArgument("empty layer stack".into()))?;
    if source[0] < first.x_start || source[0] >= first.x_end {
        return Err(Error::InvalidArgument(format!("source x = {} outside the first layer", source[0])));
    }
    let energy = first.medium.energy(k, branch);
    let mut path = RayPath {
        points: vec![source],
        angles: Vec::new(),
        momenta: Vec::new(),
        times: vec![0.0],
        axis_crossings: Vec::new(),
        image: None,
        image_time: None,
    };
    let mut now = 0.0;
    let mut pos = source;
    for (i, layer) in layers.iter().enumerate() {
        let (kl, b) = if i == 0 {
            (k, branch)
        } else {
            let mode = solve_k2x(energy, k[1], &layer.medium)?;
            let kx = mode.real().ok_or(Error::EvanescentRay { x: layer.x_start })?;
            let kl = [kx, k[1]];
            (kl, branch_at(energy, layer.medium.kernel(kl), &layer.medium))
        };
        let angle = velocity_angle(kl, &layer.medium, b);
        if angle.cos() <= 0.0 {
            return Err(Error::InvalidArgument(format!("ray does not move towards +x in layer {i}")));
        }
        let v = layer.medium.velocity(kl, b);
        let speed = v[0].hypot(v[1]);
        let end_x = layer.x_end;
        let end = [end_x, pos[1] + (end_x - pos[0]) * angle.tan()];
        let span = (end[0] - pos[0]).hypot(end[1] - pos[1]) / speed;
        let y0 = source[1];
        let crosses = (pos[1] - y0) * (end[1] - y0) < 0.0 || (end[1] == y0 && pos[1] != y0);
        if crosses {
            let t = (y0 - pos[1]) / (end[1] - pos[1]);
            let hit = [pos[0] + t * (end[0] - pos[0]), y0];
            path.axis_crossings.push(hit);
            if i + 1 == layers.len() {
                path.image = Some(hit);
                path.image_time = Some(now + t * span);
            }
        }
        path.angles.push(angle);
        path.momenta.push(kl);
        path.points.push(end);
        now += span;
        path.times.push(now);
        pos = end;
    }
    Ok(path)
}

/// Straight piece of a ray, valid for `t0 <= t < t1`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Segment {
    t0: f64,
    t1: f64,
    start: [f64; 2],
    v: [f64; 2],
}

/// One sampled ray: its straight pieces and transmitted weight.
#[derive(Debug, Clone, PartialEq)]
struct TracedRay {
    segments: Vec<Segment>,
    weight: f64,
}

impl TracedRay {
    fn position(&self, t: f64) -> Option<[f64; 2]> {
        let s = self.segments.iter().find(|s| t >= s.t0 && t < s.t1)?;
        let dt = t - s.t0;
        Some([s.start[0] + s.v[0] * dt, s.start[1] + s.v[1] * dt])
    }
}

/// Trace one ray from `pos` with momentum `k`; `None` if it turns back or
/// meets an evanescent layer. The weight is the product of interface
/// transmissions.
fn trace_weighted(pos: [f64; 2], k: [f64; 2], layers: &[Layer], branch: Branch) -> Option<TracedRay> {
    let start = layers.iter().position(|l| pos[0] >= l.x_start && pos[0] < l.x_end)?;
    let energy = layers[start].medium.energy(k, branch);
    let (mut kl, mut b) = (k, branch);
    let (mut now, mut p, mut weight) = (0.0, pos, 1.0);
    let mut segments = Vec::with_capacity(layers.len() - start);
    for (i, layer) in layers.iter().enumerate().skip(start) {
        if i > start {
            let prev = &layers[i - 1].medium;
            weight *= scatter(kl, b, prev, &layer.medium).ok()?.transmission;
            let kx = solve_k2x(energy, k[1], &layer.medium).ok()?.real()?;
            kl = [kx, k[1]];
            b = branch_at(energy, layer.medium.kernel(kl), &layer.medium);
        }
        let v = layer.medium.velocity(kl, b);
        if v[0] <= 0.0 {
            return None;
        }
        let span = (layer.x_end - p[0]) / v[0];
        segments.push(Segment { t0: now, t1: now + span, start: p, v });
        p = [layer.x_end, p[1] + v[1] * span];
        now += span;
    }
    Some(TracedRay { segments, weight })
}

/// Columns `columns.0..columns.1` and rows within `band` of `y0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeLine {
    pub y0: f64,
    pub band: usize,
    pub columns: (usize, usize),
    /// Period of a periodic y axis; rays near `y0 + n * period` (`n != 0`)
    /// are the wrapped copies that reach the probe.
    pub period: Option<f64>,
}

/// Ray-optics estimate of the time-maximum population on a probe line.
///
/// Rays are drawn from the packet's Gaussian phase-space density (position
/// spread `1/(sqrt 2 sigma_k)`, momentum spread `sigma_k/sqrt 2` per axis,
/// components chosen by `|weight|^2`) and carried at their group velocity.
/// Entry `i` is the largest weighted fraction of rays, over `times`, in
/// column `columns.0 + i` of the probe line.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleProfile {
    pub profile: Vec<f64>,
    /// Same statistic for the wrapped copies of the probe line.
    pub wrapped: Vec<f64>,
    /// Transmitted weight per sampled ray.
    pub transmitted: f64,
}

pub fn ensemble_profile(
    packet: &WavePacketSpec,
    layers: &[Layer],
    branch: Branch,
    times: &[f64],
    probe: &ProbeLine,
    samples: usize,
    seed: u64,
) -> Result<EnsembleProfile> {
    if packet.components.is_empty() || samples == 0 {
        return Err(Error::InvalidArgument("ensemble needs components and samples".into()));
    }
    let weights: Vec<f64> = packet.components.iter().map(|c| c.weight.norm_sqr()).collect();
    let pick = WeightedIndex::new(&weights).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let pos_spread = Normal::new(0.0, 1.0 / (2f64.sqrt() * packet.sigma_k)).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let k_spread = Normal::new(0.0, packet.sigma_k / 2f64.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<([f64; 2], [f64; 2])> = (0..samples)
        .map(|_| {
            let c = &packet.components[pick.sample(&mut rng)];
            let r = [packet.r0[0] + pos_spread.sample(&mut rng), packet.r0[1] + pos_spread.sample(&mut rng)];
            let k = [c.k0[0] + k_spread.sample(&mut rng), c.k0[1] + k_spread.sample(&mut rng)];
            (r, k)
        })
        .collect();
    let rays: Vec<TracedRay> = draws.par_iter().filter_map(|&(r, k)| trace_weighted(r, k, layers, branch)).collect();
    let transmitted = rays.iter().map(|r| r.weight).sum::<f64>() / samples as f64;
    let (lo, hi) = probe.columns;
    let yc = probe.y0.round();
    let reach = probe.band as f64 + 0.5;
    let per_time: Vec<(Vec<f64>, Vec<f64>)> = times
        .par_iter()
        .map(|&t| {
            let (mut direct, mut wrapped) = (vec![0.0; hi - lo], vec![0.0; hi - lo]);
            for ray in &rays {
                let Some([x, y]) = ray.position(t) else { continue };
                let col = x.round();
                if col < lo as f64 || col >= hi as f64 {
                    continue;
                }
                let i = col as usize - lo;
                let dy = y - yc;
                if dy.abs() <= reach {
                    direct[i] += ray.weight;
                } else if let Some(p) = probe.period {
                    let n = (dy / p).round();
                    if n != 0.0 && (dy - n * p).abs() <= reach {
                        wrapped[i] += ray.weight;
                    }
                }
            }
            (direct, wrapped)
        })
        .collect();
    let mut profile = vec![0.0f64; hi - lo];
    let mut wrapped = vec![0.0f64; hi - lo];
    for (d, w) in &per_time {
        for i in 0..hi - lo {
            profile[i] = profile[i].max(d[i] / samples as f64);
            wrapped[i] = wrapped[i].max(w[i] / samples as f64);
        }
    }
    Ok(EnsembleProfile { profile, wrapped, transmitted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Orientation, RegionParams};
    use std::f64::consts::FRAC_PI_4;

    fn medium(delta: f64) -> Medium {
        Medium::new(RegionParams::new(0.0, delta, 100.0, 1.0), Orientation::Rotated)
    }

    #[test]
    fn identical_layers_give_a_straight_line() {
        let m = medium(0.0);
        let layers = [
            Layer { x_start: 0.0, x_end: 10.0, medium: m },
            Layer { x_start: 10.0, x_end: 30.0, medium: m },
            Layer { x_start: 30.0, x_end: 50.0, medium: m },
        ];
        let path = ray_trace([2.0, 0.0], [FRAC_PI_4, 0.3], &layers, Branch::Upper).unwrap();
        let slope = (path.points[3][1] - path.points[0][1]) / (path.points[3][0] - path.points[0][0]);
        for w in path.points.windows(2) {
            let s = (w[1][1] - w[0][1]) / (w[1][0] - w[0][0]);
            assert!((s - slope).abs() < 1e-12);
        }
        assert!(path.image.is_none());
    }

    #[test]
    fn mirrored_rays_meet_on_the_axis() {
        let (a, lens) = (medium(0.0), medium(3.3));
        let layers = [
            Layer { x_start: 0.0, x_end: 20.0, medium: a },
            Layer { x_start: 20.0, x_end: 60.0, medium: lens },
            Layer { x_start: 60.0, x_end: 200.0, medium: a },
        ];
        let up = ray_trace([5.0, 0.0], [FRAC_PI_4, FRAC_PI_4], &layers, Branch::Upper).unwrap();
        let down = ray_trace([5.0, 0.0], [FRAC_PI_4, -FRAC_PI_4], &layers, Branch::Upper).unwrap();
        assert!(up.angles[1] < 0.0 && down.angles[1] > 0.0);
        let (iu, id) = (up.image.unwrap(), down.image.unwrap());
        assert!((iu[0] - id[0]).abs() < 1e-9);
        for w in up.points.iter().zip(&down.points) {
            assert!((w.0[1] + w.1[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn evanescent_layer_has_no_ray() {
        let layers = [
            Layer { x_start: 0.0, x_end: 20.0, medium: medium(0.0) },
            Layer { x_start: 20.0, x_end: 40.0, medium: medium(5.27) },
        ];
        let r = ray_trace([1.0, 0.0], [FRAC_PI_4, FRAC_PI_4], &layers, Branch::Upper);
        assert!(matches!(r, Err(Error::EvanescentRay { .. })));
    }
}
