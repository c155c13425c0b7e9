//! Episode post-processing: convergence summaries, decay-rate estimation,
//! and geometric path comparison.

use nalgebra::Vector3;

use crate::controller::Gains;
use crate::dmp::Pose;
use crate::quaternion::{quat_diff, UnitQuaternion};
use crate::sim::{EpisodeConfig, EpisodeLog, XiNorms};

/// Least-squares fit of `ln |xi|` against time over a decay window.
#[derive(Clone, Copy, Debug)]
pub struct DecayFit {
    /// Slope in 1/s; clearly negative for exponential-looking decay.
    pub slope: f64,
    /// Coefficient of determination of the linear fit.
    pub r_squared: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

/// Fits the post-perturbation decay of the total stacked norm: the window
/// runs from the norm's peak at or after `after` until the norm first drops
/// below `floor_ratio` times the peak (or the log ends).
pub fn decay_fit(log: &EpisodeLog, after: f64, floor_ratio: f64) -> Option<DecayFit> {
    let records = log.records();
    let start = log.index_at(after);
    let (peak_idx, peak) = records
        .iter()
        .enumerate()
        .skip(start)
        .map(|(i, r)| (i, r.xi.total_norm()))
        .max_by(|a, b| a.1.total_cmp(&b.1))?;
    if peak <= 0.0 {
        return None;
    }
    let floor = peak * floor_ratio;
    let mut end_idx = records.len() - 1;
    for (i, r) in records.iter().enumerate().skip(peak_idx) {
        if r.xi.total_norm() <= floor {
            end_idx = i;
            break;
        }
    }
    if end_idx <= peak_idx + 1 {
        return None;
    }
    let pts: Vec<(f64, f64)> = records[peak_idx..=end_idx]
        .iter()
        .map(|r| (r.t, r.xi.total_norm()))
        .collect();
    let (slope, r_squared) = log_linear_fit(&pts)?;
    Some(DecayFit {
        slope,
        r_squared,
        window: (pts[0].0, pts[pts.len() - 1].0),
        samples: pts.len(),
    })
}

/// Least-squares slope and `r^2` of `ln(value)` against time; entries with
/// non-positive values are skipped.
pub fn log_linear_fit(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.1 > 0.0)
        .map(|p| (p.0, p.1.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut stt = 0.0;
    let mut sty = 0.0;
    let mut syy = 0.0;
    for (t, y) in &pts {
        stt += (t - mean_t) * (t - mean_t);
        sty += (t - mean_t) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    if stt == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sty / stt, (sty * sty) / (stt * syy)))
}

/// Final position error below this means the coupled system reached its
/// goal, meters.
pub const GOAL_POS_TOL: f64 = 1e-3;
/// Final orientation-difference norm below this means the coupled system
/// reached its goal, radians.
pub const GOAL_ANG_TOL: f64 = 1e-2;

/// Headline numbers for one episode.
#[derive(Clone, Debug)]
pub struct EpisodeSummary {
    pub convergence_tol: f64,
    /// All component norms (the slowly decaying phase included) below the
    /// tolerance by the end of the log. The release experiment's notion.
    pub converged: bool,
    pub convergence_time: Option<f64>,
    /// The coupled pose settled at the goal within [`GOAL_POS_TOL`] /
    /// [`GOAL_ANG_TOL`]. The cross-experiment notion.
    pub goal_converged: bool,
    pub final_norms: XiNorms,
    pub max_tau_ratio: f64,
    pub decay: Option<DecayFit>,
    pub equator_crossed: bool,
    pub min_qc_dot: f64,
    pub initial_dcg: f64,
    pub final_dcg: f64,
    pub final_goal_err: f64,
}

/// Summarizes a log; the decay fit starts after the last scheduled
/// perturbation ends.
pub fn summarize(
    log: &EpisodeLog,
    _gains: &Gains,
    config: &EpisodeConfig,
    tau: f64,
    convergence_tol: f64,
) -> EpisodeSummary {
    let convergence_time = log.converged_within(convergence_tol);
    let after = config.last_perturbation_end().unwrap_or(0.0);
    let final_goal_err = log.last().xi.goal_err.norm();
    let final_dcg = log.last().xi.d_cg.norm();
    EpisodeSummary {
        convergence_tol,
        converged: convergence_time.is_some(),
        convergence_time,
        goal_converged: final_goal_err < GOAL_POS_TOL && final_dcg < GOAL_ANG_TOL,
        final_norms: log.last().xi.norms(),
        max_tau_ratio: log.max_tau_ratio(tau),
        decay: decay_fit(log, after, 1e-4),
        equator_crossed: log.crosses_equator(),
        min_qc_dot: log.min_successive_qc_dot(),
        initial_dcg: log.records()[0].xi.d_cg.norm(),
        final_dcg,
        final_goal_err,
    }
}

fn lerp(a: &Vector3<f64>, b: &Vector3<f64>, f: f64) -> Vector3<f64> {
    a + (b - a) * f
}

fn geodesic_interp(a: &UnitQuaternion, b: &UnitQuaternion, f: f64) -> UnitQuaternion {
    let r = quat_diff(b, a)
        .expect("adjacent samples are close")
        .vector();
    UnitQuaternion::exp_map(&(r * (0.5 * f))).multiply(a)
}

/// Cumulative combined arc length (position plus orientation geodesic) of a
/// pose path, normalized to end at 1.
fn normalized_arc_length(path: &[Pose]) -> Vec<f64> {
    let mut s = Vec::with_capacity(path.len());
    let mut acc = 0.0;
    s.push(0.0);
    for w in path.windows(2) {
        let dp = (w[1].position - w[0].position).norm_squared();
        let da = quat_diff(&w[1].orientation, &w[0].orientation)
            .expect("adjacent samples are close")
            .angle()
            .powi(2);
        acc += (dp + da).sqrt();
        s.push(acc);
    }
    if acc > 0.0 {
        for v in &mut s {
            *v /= acc;
        }
    }
    s
}

/// Compares two pose paths as geometric curves: both are reparameterized by
/// normalized arc length, the denser path is interpolated at the sparser
/// path's stations, and the maximal position and orientation deviations are
/// returned.
pub fn max_pose_deviation_by_arc_length(a: &[Pose], b: &[Pose]) -> (f64, f64) {
    assert!(
        a.len() >= 2 && b.len() >= 2,
        "paths need at least two samples"
    );
    let (coarse, fine) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let s_coarse = normalized_arc_length(coarse);
    let s_fine = normalized_arc_length(fine);
    let mut max_pos = 0.0f64;
    let mut max_ang = 0.0f64;
    let mut j = 0;
    for (pose, &s) in coarse.iter().zip(&s_coarse) {
        while j + 2 < s_fine.len() && s_fine[j + 1] < s {
            j += 1;
        }
        let seg = (s_fine[j + 1] - s_fine[j]).max(f64::MIN_POSITIVE);
        let f = ((s - s_fine[j]) / seg).clamp(0.0, 1.0);
        let pos = lerp(&fine[j].position, &fine[j + 1].position, f);
        let ori = geodesic_interp(&fine[j].orientation, &fine[j + 1].orientation, f);
        max_pos = max_pos.max((pose.position - pos).norm());
        max_ang = max_ang.max(
            quat_diff(&pose.orientation, &ori)
                .expect("paths stay comparable")
                .angle(),
        );
    }
    (max_pos, max_ang)
}
