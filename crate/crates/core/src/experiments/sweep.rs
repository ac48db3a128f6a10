//! Parameter sweeps via dotted-path overrides.

use rayon::prelude::*;
use serde_json::Value;

use super::{run_experiment_with, ExperimentConfig, ExperimentResult, RunOptions};
use crate::error::{Error, Result};

/// Set `path` (e.g. `regions.lens.detuning`) to `value`. Path segments
/// address object keys, array indices, or array elements by `name`.
pub fn apply_override(cfg: &ExperimentConfig, path: &str, value: f64) -> Result<ExperimentConfig> {
    let mut root = serde_json::to_value(cfg).map_err(|e| Error::Config(e.to_string()))?;
    let mut node = &mut root;
    for seg in path.split('.') {
        node = match node {
            Value::Object(map) => map.get_mut(seg),
            Value::Array(items) => match seg.parse::<usize>() {
                Ok(i) => items.get_mut(i),
                Err(_) => items.iter_mut().find(|v| v.get("name").and_then(Value::as_str) == Some(seg)),
            },
            _ => None,
        }
        .ok_or_else(|| Error::Config(format!("override path '{path}' not found at '{seg}'")))?;
    }
    if !(node.is_number() || node.is_null()) {
        return Err(Error::Config(format!("override path '{path}' is not numeric")));
    }
    *node = serde_json::json!(value);
    let out: ExperimentConfig = serde_json::from_value(root).map_err(|e| Error::Config(e.to_string()))?;
    out.validate()?;
    Ok(out)
}

pub struct SweepPoint {
    pub index: usize,
    pub value: f64,
    pub result: ExperimentResult,
}

/// Run every point of the config's sweep axis in parallel; results come
/// back in axis order.
pub fn run_sweep(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<SweepPoint>> {
    let axis = cfg.sweep.as_ref().ok_or_else(|| Error::Config("config has no [sweep] section".into()))?;
    let configs = axis
        .values
        .iter()
        .map(|&v| {
            let mut c = apply_override(cfg, &axis.parameter, v)?;
            c.sweep = None;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut points = configs
        .into_par_iter()
        .enumerate()
        .map(|(index, c)| {
            let value = axis.values[index];
            run_experiment_with(&c, opts).map(|result| SweepPoint { index, value, result })
        })
        .collect::<Result<Vec<_>>>()?;
    points.sort_by_key(|p| p.index);
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CFG: &str = r#"
experiment = "reflection_tradeoff"
[[regions]]
name = "source"
x_start = 0
x_end = 10
beta = 100.0
[[regions]]
name = "lens"
x_start = 10
x_end = 20
beta = 100.0
detuning = -3.0
"#;

    #[test]
    fn override_by_region_name_and_index() {
        let cfg = ExperimentConfig::from_toml(CFG).unwrap();
        let a = apply_override(&cfg, "regions.lens.detuning", -4.5).unwrap();
        assert_eq!(a.region("lens").unwrap().detuning, -4.5);
        let b = apply_override(&cfg, "regions.0.beta", 50.0).unwrap();
        assert_eq!(b.region("source").unwrap().beta, 50.0);
        assert!(apply_override(&cfg, "regions.slab.detuning", 1.0).is_err());
        assert!(apply_override(&cfg, "regions.lens.name", 1.0).is_err());
    }
}
