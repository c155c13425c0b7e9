//! Run configuration: a human-editable `key = value` file merged with
//! command-line overrides.
//!
//! Recognized keys: `preset`, `model`, `horizon`, `dt`, `k_v`, `alpha_e`,
//! `k_c`, `trials`, `seed`, `jobs`, `out_dir`, `no_perturb`, `summary_tol`,
//! and repeatable `perturb` lines:
//!
//! ```text
//! perturb = displace T DX DY DZ RX RY RZ
//! perturb = pulse T_START T_END AX AY AZ WX WY WZ
//! ```

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use cartesian_dmp::sim::Perturbation;
use nalgebra::Vector3;

#[derive(Clone, Debug, Default)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub model: Option<PathBuf>,
    pub demo: Option<PathBuf>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub k_v: Option<f64>,
    pub k_v_angular: Option<f64>,
    pub alpha_e: Option<f64>,
    pub k_c: Option<f64>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub no_perturb: Option<bool>,
    pub summary_tol: Option<f64>,
    pub perturbations: Vec<Perturbation>,
}

fn parse_floats(fields: &[&str]) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .with_context(|| format!("bad number '{f}'"))
        })
        .collect()
}

fn parse_perturb(value: &str) -> Result<Perturbation> {
    let fields: Vec<&str> = value.split_whitespace().collect();
    match fields.first() {
        Some(&"displace") => {
            if fields.len() != 8 {
                bail!("displace expects 7 numbers: T DX DY DZ RX RY RZ");
            }
            let v = parse_floats(&fields[1..])?;
            Ok(Perturbation::DisplaceRelease {
                t: v[0],
                delta_position: Vector3::new(v[1], v[2], v[3]),
                delta_rotation: Vector3::new(v[4], v[5], v[6]),
            })
        }
        Some(&"pulse") => {
            if fields.len() != 9 {
                bail!("pulse expects 8 numbers: T0 T1 AX AY AZ WX WY WZ");
            }
            let v = parse_floats(&fields[1..])?;
            Ok(Perturbation::AccelPulse {
                t_start: v[0],
                t_end: v[1],
                linear: Vector3::new(v[2], v[3], v[4]),
                angular: Vector3::new(v[5], v[6], v[7]),
            })
        }
        _ => bail!("perturb must start with 'displace' or 'pulse'"),
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{}:{}: expected 'key = value'", path.display(), i + 1))?;
            let (key, value) = (key.trim(), value.trim());
            let ctx = || format!("{}:{}: key '{key}'", path.display(), i + 1);
            match key {
                "preset" => cfg.preset = Some(value.to_string()),
                "model" => cfg.model = Some(PathBuf::from(value)),
                "demo" => cfg.demo = Some(PathBuf::from(value)),
                "horizon" => cfg.horizon = Some(value.parse().with_context(ctx)?),
                "dt" => cfg.dt = Some(value.parse().with_context(ctx)?),
                "k_v" => cfg.k_v = Some(value.parse().with_context(ctx)?),
                "k_v_angular" => cfg.k_v_angular = Some(value.parse().with_context(ctx)?),
                "alpha_e" => cfg.alpha_e = Some(value.parse().with_context(ctx)?),
                "k_c" => cfg.k_c = Some(value.parse().with_context(ctx)?),
                "trials" => cfg.trials = Some(value.parse().with_context(ctx)?),
                "seed" => cfg.seed = Some(value.parse().with_context(ctx)?),
                "jobs" => cfg.jobs = Some(value.parse().with_context(ctx)?),
                "out_dir" => cfg.out_dir = Some(PathBuf::from(value)),
                "no_perturb" => cfg.no_perturb = Some(value.parse().with_context(ctx)?),
                "summary_tol" => cfg.summary_tol = Some(value.parse().with_context(ctx)?),
                "perturb" => cfg
                    .perturbations
                    .push(parse_perturb(value).with_context(ctx)?),
                other => bail!("{}:{}: unknown key '{other}'", path.display(), i + 1),
            }
        }
        Ok(cfg)
    }
}
