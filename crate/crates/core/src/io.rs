//! On-disk formats: demonstration CSV, model key-value text, and episode-log
//! CSV.
//!
//! Floats are written with the shortest representation that round-trips, so
//! a written file parses back to bit-identical values and repeated runs are
//! byte-for-byte reproducible.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use thiserror::Error;

use crate::dmp::{DmpModel, DmpModelParts, ModelError};
use crate::learning::{Demonstration, LearnError};
use crate::quaternion::UnitQuaternion;
use crate::sim::EpisodeLog;

pub const DEMO_HEADER: &str = "t,y1,y2,y3,qw,qx,qy,qz";
pub const EPISODE_HEADER: &str = "t,x,tau_a,n_ypos,n_yvel,n_dac,n_womega,n_e,n_ycg,n_z,n_dcg,n_wz,\
ypos_x,ypos_y,ypos_z,yvel_x,yvel_y,yvel_z,dac_x,dac_y,dac_z,womega_x,womega_y,womega_z,\
e_px,e_py,e_pz,e_ox,e_oy,e_oz,ycg_x,ycg_y,ycg_z,z_x,z_y,z_z,dcg_x,dcg_y,dcg_z,wz_x,wz_y,wz_z";
const MODEL_FORMAT_TAG: &str = "dmp-model-v1";

#[derive(Debug, Error)]
pub enum IoFormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("missing key '{key}' in {path}")]
    MissingKey { path: String, key: String },
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> IoFormatError {
    IoFormatError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Writes `t,y1,y2,y3,qw,qx,qy,qz` rows, SI units, one row per sample.
pub fn write_demo_csv(path: &Path, demo: &Demonstration) -> Result<(), IoFormatError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(DEMO_HEADER.split(','))?;
    for k in 0..demo.len() {
        let y = demo.positions()[k];
        let q = demo.orientations()[k].components();
        w.write_record([
            demo.times()[k].to_string(),
            y.x.to_string(),
            y.y.to_string(),
            y.z.to_string(),
            q[0].to_string(),
            q[1].to_string(),
            q[2].to_string(),
            q[3].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_demo_csv(path: &Path) -> Result<Demonstration, IoFormatError> {
    let mut r = csv::Reader::from_path(path)?;
    {
        let headers = r.headers()?;
        let expected: Vec<&str> = DEMO_HEADER.split(',').collect();
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(parse_err(
                path,
                1,
                format!("expected header '{DEMO_HEADER}'"),
            ));
        }
    }
    let mut t = Vec::new();
    let mut positions = Vec::new();
    let mut orientations = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        let line = i + 2;
        if row.len() != 8 {
            return Err(parse_err(
                path,
                line,
                format!("expected 8 fields, got {}", row.len()),
            ));
        }
        let mut vals = [0.0f64; 8];
        for (j, field) in row.iter().enumerate() {
            vals[j] = field
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line, format!("bad number '{field}'")))?;
        }
        t.push(vals[0]);
        positions.push(Vector3::new(vals[1], vals[2], vals[3]));
        orientations.push(
            UnitQuaternion::try_new(vals[4], vals[5], vals[6], vals[7])
                .ok_or_else(|| parse_err(path, line, "zero-norm quaternion"))?,
        );
    }
    Ok(Demonstration::new(t, positions, orientations)?)
}

fn push_row(out: &mut String, key: &str, values: &[f64]) {
    let _ = write!(out, "{key} =");
    for v in values {
        let _ = write!(out, " {v}");
    }
    out.push('\n');
}

/// Key-value text holding every model field; see the repository README for
/// the format.
pub fn write_model_file(path: &Path, model: &DmpModel) -> Result<(), IoFormatError> {
    let mut out = String::new();
    let _ = writeln!(out, "format = {MODEL_FORMAT_TAG}");
    push_row(&mut out, "alpha_z", &[model.alpha_z()]);
    push_row(&mut out, "beta_z", &[model.beta_z()]);
    push_row(&mut out, "alpha_x", &[model.alpha_x()]);
    push_row(&mut out, "tau", &[model.tau()]);
    let _ = writeln!(out, "n_basis = {}", model.n_basis());
    let y0 = model.start_position();
    let g = model.goal_position();
    push_row(&mut out, "y0", &[y0.x, y0.y, y0.z]);
    push_row(&mut out, "g", &[g.x, g.y, g.z]);
    push_row(&mut out, "q0", &model.start_orientation().components());
    push_row(&mut out, "qg", &model.goal_orientation().components());
    for dim in 0..6 {
        push_row(
            &mut out,
            &format!("centers_{}", dim + 1),
            model.centers(dim),
        );
        push_row(&mut out, &format!("widths_{}", dim + 1), model.widths(dim));
        push_row(
            &mut out,
            &format!("weights_{}", dim + 1),
            model.weights(dim),
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

struct KvFile<'a> {
    path: &'a Path,
    entries: HashMap<String, (usize, String)>,
}

impl<'a> KvFile<'a> {
    fn load(path: &'a Path) -> Result<Self, IoFormatError> {
        let text = std::fs::read_to_string(path)?;
        let mut entries = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(path, i + 1, "expected 'key = value'"))?;
            entries.insert(key.trim().to_string(), (i + 1, value.trim().to_string()));
        }
        Ok(KvFile { path, entries })
    }

    fn raw(&self, key: &str) -> Result<&(usize, String), IoFormatError> {
        self.entries
            .get(key)
            .ok_or_else(|| IoFormatError::MissingKey {
                path: self.path.display().to_string(),
                key: key.to_string(),
            })
    }

    fn f64(&self, key: &str) -> Result<f64, IoFormatError> {
        let (line, v) = self.raw(key)?;
        v.parse()
            .map_err(|_| parse_err(self.path, *line, format!("bad number '{v}' for {key}")))
    }

    fn usize(&self, key: &str) -> Result<usize, IoFormatError> {
        let (line, v) = self.raw(key)?;
        v.parse()
            .map_err(|_| parse_err(self.path, *line, format!("bad integer '{v}' for {key}")))
    }

    fn row(&self, key: &str, expected: usize) -> Result<Vec<f64>, IoFormatError> {
        let (line, v) = self.raw(key)?;
        let vals: Result<Vec<f64>, _> = v.split_whitespace().map(str::parse).collect();
        let vals =
            vals.map_err(|_| parse_err(self.path, *line, format!("bad number list for {key}")))?;
        if vals.len() != expected {
            return Err(parse_err(
                self.path,
                *line,
                format!("{key}: expected {expected} values, got {}", vals.len()),
            ));
        }
        Ok(vals)
    }

    fn vector3(&self, key: &str) -> Result<Vector3<f64>, IoFormatError> {
        let v = self.row(key, 3)?;
        Ok(Vector3::new(v[0], v[1], v[2]))
    }

    fn quaternion(&self, key: &str) -> Result<UnitQuaternion, IoFormatError> {
        let (line, _) = *self.raw(key)?;
        let v = self.row(key, 4)?;
        UnitQuaternion::try_new(v[0], v[1], v[2], v[3])
            .ok_or_else(|| parse_err(self.path, line, format!("{key}: zero-norm quaternion")))
    }
}

pub fn read_model_file(path: &Path) -> Result<DmpModel, IoFormatError> {
    let kv = KvFile::load(path)?;
    let (line, tag) = kv.raw("format")?;
    if tag != MODEL_FORMAT_TAG {
        return Err(parse_err(
            path,
            *line,
            format!("unsupported format '{tag}'"),
        ));
    }
    let alpha_z = kv.f64("alpha_z")?;
    let beta_z = kv.f64("beta_z")?;
    if beta_z != alpha_z / 4.0 {
        let (line, _) = *kv.raw("beta_z")?;
        return Err(parse_err(path, line, "beta_z must equal alpha_z / 4"));
    }
    let n_basis = kv.usize("n_basis")?;
    let mut centers: [Vec<f64>; 6] = Default::default();
    let mut widths: [Vec<f64>; 6] = Default::default();
    let mut weights: [Vec<f64>; 6] = Default::default();
    for dim in 0..6 {
        centers[dim] = kv.row(&format!("centers_{}", dim + 1), n_basis)?;
        widths[dim] = kv.row(&format!("widths_{}", dim + 1), n_basis)?;
        weights[dim] = kv.row(&format!("weights_{}", dim + 1), n_basis)?;
    }
    Ok(DmpModel::new(DmpModelParts {
        alpha_z,
        alpha_x: kv.f64("alpha_x")?,
        tau: kv.f64("tau")?,
        centers,
        widths,
        weights,
        start_position: kv.vector3("y0")?,
        goal_position: kv.vector3("g")?,
        start_orientation: kv.quaternion("q0")?,
        goal_orientation: kv.quaternion("qg")?,
    })?)
}

/// Writes the per-step norms and raw state components of an episode.
pub fn write_episode_csv(path: &Path, log: &EpisodeLog) -> Result<(), IoFormatError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(EPISODE_HEADER.split(','))?;
    for r in log.records() {
        let n = r.xi.norms();
        let s = r.xi.stacked();
        let mut row: Vec<String> = Vec::with_capacity(42);
        for v in [
            r.t,
            r.xi.phase,
            r.tau_a,
            n.position_err,
            n.velocity_err,
            n.d_ac,
            n.omega_err,
            n.e,
            n.goal_err,
            n.z,
            n.d_cg,
            n.omega_z,
        ] {
            row.push(v.to_string());
        }
        // raw xi components except the phase, which already has a column
        for v in s[..18].iter().chain(s[19..].iter()) {
            row.push(v.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// The scalar columns of one episode row: time, phase, time parameter, and
/// the nine component norms in header order.
#[derive(Clone, Copy, Debug)]
pub struct EpisodeNormRow {
    pub t: f64,
    pub x: f64,
    pub tau_a: f64,
    pub norms: [f64; 9],
}

impl EpisodeNormRow {
    /// Largest component norm, the phase included.
    pub fn max_component(&self) -> f64 {
        self.norms.iter().fold(self.x.abs(), |a, b| a.max(*b))
    }
}

pub fn read_episode_norms(path: &Path) -> Result<Vec<EpisodeNormRow>, IoFormatError> {
    let mut r = csv::Reader::from_path(path)?;
    {
        let headers = r.headers()?;
        let expected: Vec<&str> = EPISODE_HEADER.split(',').collect();
        let got: Vec<&str> = headers.iter().collect();
        if got != expected {
            return Err(parse_err(path, 1, "unexpected episode log header"));
        }
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let get = |j: usize| -> Result<f64, IoFormatError> {
            rec.get(j)
                .ok_or_else(|| parse_err(path, line, "short row"))?
                .parse()
                .map_err(|_| parse_err(path, line, format!("bad number in column {j}")))
        };
        let t = get(0)?;
        let x = get(1)?;
        let tau_a = get(2)?;
        let mut norms = [0.0; 9];
        for (k, slot) in norms.iter_mut().enumerate() {
            *slot = get(3 + k)?;
        }
        rows.push(EpisodeNormRow { t, x, tau_a, norms });
    }
    Ok(rows)
}
