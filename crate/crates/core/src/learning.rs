//! Training from demonstrated pose trajectories, and synthetic
//! demonstrations for desk-scale experiments.
//!
//! The pipeline inverts the coupled dynamics sample by sample (with the
//! adaptive time parameter pinned to the nominal one), then fits each basis
//! weight by locally weighted regression on the one-dimensional regressor
//! `x * scale`.

use nalgebra::{Vector3, Vector6};
use thiserror::Error;

use crate::dmp::{DmpModel, ModelError, Pose, DEGENERATE_SCALE};
use crate::quaternion::{quat_diff, DomainError, UnitQuaternion};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("demonstration needs at least 3 samples, got {got}")]
    TooFewSamples { got: usize },
    #[error("sample times must be strictly increasing (violated at index {index})")]
    NonMonotonicTime { index: usize },
    #[error("demonstration arrays have mismatched lengths ({what})")]
    LengthMismatch { what: &'static str },
    #[error("orientation jump of half a turn at sample {index}; sign continuity is ambiguous")]
    DiscontinuousOrientation { index: usize },
    #[error("orientations around sample {index} differ by a full turn")]
    AntipodalSamples { index: usize },
    #[error("rotation angle {angle} rad outside {required}")]
    InvalidAngle { angle: f64, required: &'static str },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A recorded pose trajectory with strictly increasing sample times.
///
/// On ingestion the quaternion sequence is re-signed so that successive dot
/// products stay positive. That is permissible for raw recorded data, where
/// the sign is an artifact of the recorder; live control states are never
/// re-signed.
#[derive(Clone, Debug)]
pub struct Demonstration {
    t: Vec<f64>,
    positions: Vec<Vector3<f64>>,
    orientations: Vec<UnitQuaternion>,
}

impl Demonstration {
    pub fn new(
        t: Vec<f64>,
        positions: Vec<Vector3<f64>>,
        mut orientations: Vec<UnitQuaternion>,
    ) -> Result<Self, LearnError> {
        if t.len() < 3 {
            return Err(LearnError::TooFewSamples { got: t.len() });
        }
        if positions.len() != t.len() {
            return Err(LearnError::LengthMismatch {
                what: "positions vs times",
            });
        }
        if orientations.len() != t.len() {
            return Err(LearnError::LengthMismatch {
                what: "orientations vs times",
            });
        }
        for k in 1..t.len() {
            if !(t[k] - t[k - 1]).is_finite() || t[k] <= t[k - 1] {
                return Err(LearnError::NonMonotonicTime { index: k });
            }
        }
        for k in 1..orientations.len() {
            let dot = orientations[k - 1].dot(&orientations[k]);
            if dot < 0.0 {
                orientations[k] = orientations[k].negated();
            } else if dot == 0.0 {
                return Err(LearnError::DiscontinuousOrientation { index: k });
            }
        }
        Ok(Demonstration {
            t,
            positions,
            orientations,
        })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn orientations(&self) -> &[UnitQuaternion] {
        &self.orientations
    }

    pub fn duration(&self) -> f64 {
        self.t[self.t.len() - 1] - self.t[0]
    }

    pub fn pose(&self, k: usize) -> Pose {
        Pose::new(self.positions[k], self.orientations[k])
    }

    pub fn start_pose(&self) -> Pose {
        self.pose(0)
    }

    /// The final sample defines the goal pose for training.
    pub fn goal_pose(&self) -> Pose {
        self.pose(self.len() - 1)
    }
}

/// Sample-wise derivatives of a demonstration, from three-point finite
/// differences (exact for quadratics, including at the endpoints).
#[derive(Clone, Debug)]
pub struct DemoDerivatives {
    pub velocity: Vec<Vector3<f64>>,
    pub acceleration: Vec<Vector3<f64>>,
    pub omega: Vec<Vector3<f64>>,
    pub omega_dot: Vec<Vector3<f64>>,
    /// Set when sample spacing varies by more than 10%.
    pub non_uniform_sampling: bool,
}

fn three_point_first(
    prev: &Vector3<f64>,
    mid: &Vector3<f64>,
    next: &Vector3<f64>,
    h1: f64,
    h2: f64,
) -> Vector3<f64> {
    -prev * (h2 / (h1 * (h1 + h2))) + mid * ((h2 - h1) / (h1 * h2)) + next * (h1 / (h2 * (h1 + h2)))
}

fn three_point_second(
    prev: &Vector3<f64>,
    mid: &Vector3<f64>,
    next: &Vector3<f64>,
    h1: f64,
    h2: f64,
) -> Vector3<f64> {
    (prev / (h1 * (h1 + h2)) - mid / (h1 * h2) + next / (h2 * (h1 + h2))) * 2.0
}

fn one_sided_first(
    f0: &Vector3<f64>,
    f1: &Vector3<f64>,
    f2: &Vector3<f64>,
    h1: f64,
    h2: f64,
) -> Vector3<f64> {
    -f0 * ((2.0 * h1 + h2) / (h1 * (h1 + h2))) + f1 * ((h1 + h2) / (h1 * h2))
        - f2 * (h1 / (h2 * (h1 + h2)))
}

/// Rate at the origin of a quadratic through `(0, 0)`, `(s1, r1)`,
/// `(s2, r2)`.
fn chord_rate(r1: &Vector3<f64>, r2: &Vector3<f64>, s1: f64, s2: f64) -> Vector3<f64> {
    (r1 * (s2 * s2) - r2 * (s1 * s1)) / (s1 * s2 * (s2 - s1))
}

/// Second derivative at `ts[0]` of the cubic through four samples (Newton
/// divided differences), second-order accurate one-sided.
fn one_sided_second(ts: [f64; 4], fs: [&Vector3<f64>; 4]) -> Vector3<f64> {
    let d01 = (fs[1] - fs[0]) / (ts[1] - ts[0]);
    let d12 = (fs[2] - fs[1]) / (ts[2] - ts[1]);
    let d23 = (fs[3] - fs[2]) / (ts[3] - ts[2]);
    let d012 = (d12 - d01) / (ts[2] - ts[0]);
    let d123 = (d23 - d12) / (ts[3] - ts[1]);
    let d0123 = (d123 - d012) / (ts[3] - ts[0]);
    d012 * 2.0 + d0123 * (2.0 * (2.0 * ts[0] - ts[1] - ts[2]))
}

/// Finite-difference velocities, accelerations, world-frame angular
/// velocities and angular accelerations of a demonstration.
pub fn differentiate_demo(demo: &Demonstration) -> Result<DemoDerivatives, LearnError> {
    let n = demo.len();
    let t = demo.times();
    let y = demo.positions();
    let q = demo.orientations();

    let mut dt_min = f64::INFINITY;
    let mut dt_max: f64 = 0.0;
    for k in 1..n {
        let h = t[k] - t[k - 1];
        dt_min = dt_min.min(h);
        dt_max = dt_max.max(h);
    }
    let non_uniform_sampling = dt_max > 1.1 * dt_min;

    let diff = |a: usize, b: usize| -> Result<Vector3<f64>, LearnError> {
        quat_diff(&q[a], &q[b])
            .map(|d| d.vector())
            .map_err(|_| LearnError::AntipodalSamples { index: a })
    };

    let mut velocity = vec![Vector3::zeros(); n];
    let mut acceleration = vec![Vector3::zeros(); n];
    let mut omega = vec![Vector3::zeros(); n];
    let mut omega_dot = vec![Vector3::zeros(); n];
    // rates and their derivatives come from rotation vectors anchored at
    // each sample, where they coincide with the world angular velocity and
    // acceleration
    let zero = Vector3::zeros();
    for k in 1..n - 1 {
        let h1 = t[k] - t[k - 1];
        let h2 = t[k + 1] - t[k];
        velocity[k] = three_point_first(&y[k - 1], &y[k], &y[k + 1], h1, h2);
        acceleration[k] = three_point_second(&y[k - 1], &y[k], &y[k + 1], h1, h2);
        let back = diff(k - 1, k)?;
        let fwd = diff(k + 1, k)?;
        omega[k] = three_point_first(&back, &zero, &fwd, h1, h2);
        omega_dot[k] = three_point_second(&back, &zero, &fwd, h1, h2);
    }
    {
        let (h1, h2) = (t[1] - t[0], t[2] - t[1]);
        velocity[0] = one_sided_first(&y[0], &y[1], &y[2], h1, h2);
        let r1 = diff(1, 0)?;
        let r2 = diff(2, 0)?;
        omega[0] = chord_rate(&r1, &r2, h1, h1 + h2);
        if n >= 4 {
            acceleration[0] =
                one_sided_second([t[0], t[1], t[2], t[3]], [&y[0], &y[1], &y[2], &y[3]]);
            let r3 = diff(3, 0)?;
            omega_dot[0] = one_sided_second([t[0], t[1], t[2], t[3]], [&zero, &r1, &r2, &r3]);
        } else {
            acceleration[0] = three_point_second(&y[0], &y[1], &y[2], h1, h2);
            omega_dot[0] = three_point_second(&zero, &r1, &r2, h1, h2);
        }
    }
    {
        let (h1, h2) = (t[n - 2] - t[n - 3], t[n - 1] - t[n - 2]);
        velocity[n - 1] = -one_sided_first(&y[n - 1], &y[n - 2], &y[n - 3], h2, h1);
        // mirrored: rotation vectors measured backward from the last sample;
        // the angular acceleration is even under time reversal
        let r1 = diff(n - 2, n - 1)?;
        let r2 = diff(n - 3, n - 1)?;
        omega[n - 1] = -chord_rate(&r1, &r2, h2, h1 + h2);
        if n >= 4 {
            acceleration[n - 1] = one_sided_second(
                [t[n - 1], t[n - 2], t[n - 3], t[n - 4]],
                [&y[n - 1], &y[n - 2], &y[n - 3], &y[n - 4]],
            );
            let r3 = diff(n - 4, n - 1)?;
            omega_dot[n - 1] = one_sided_second(
                [t[n - 1], t[n - 2], t[n - 3], t[n - 4]],
                [&zero, &r1, &r2, &r3],
            );
        } else {
            acceleration[n - 1] = three_point_second(&y[n - 3], &y[n - 2], &y[n - 1], h1, h2);
            omega_dot[n - 1] = three_point_second(&r2, &r1, &zero, h1, h2);
        }
    }

    Ok(DemoDerivatives {
        velocity,
        acceleration,
        omega,
        omega_dot,
        non_uniform_sampling,
    })
}

/// Per-sample phases and forcing targets from inverting the transformation
/// systems, plus the forcing scale.
#[derive(Clone, Debug)]
pub struct RegressionTargets {
    pub phase: Vec<f64>,
    pub forcing: Vec<Vector6<f64>>,
    /// `(g - y0, d(q_g * conj(q0)))`.
    pub scale: Vector6<f64>,
}

/// Gain/shape choices for training. `tau` is always the demonstration
/// duration; `beta_z` is derived.
#[derive(Clone, Copy, Debug)]
pub struct TrainConfig {
    pub alpha_z: f64,
    pub alpha_x: f64,
    pub n_basis: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha_z: 25.0,
            alpha_x: 1.0,
            n_basis: 25,
        }
    }
}

/// Inverts the coupled dynamics with the time parameter pinned to `tau`:
/// `f_p = tau^2 ddy - alpha_z (beta_z (g - y) - tau dy)` and the analogous
/// orientation expression with `d(q * conj(q_g))`.
pub fn compute_targets(
    demo: &Demonstration,
    derivs: &DemoDerivatives,
    alpha_z: f64,
    alpha_x: f64,
    tau: f64,
) -> Result<RegressionTargets, LearnError> {
    let n = demo.len();
    let beta_z = alpha_z / 4.0;
    let goal = demo.goal_pose();
    let start = demo.start_pose();
    let d_goal = quat_diff(&goal.orientation, &start.orientation)?;
    let lin = goal.position - start.position;
    let scale = Vector6::new(lin.x, lin.y, lin.z, d_goal.0.x, d_goal.0.y, d_goal.0.z);

    let t0 = demo.times()[0];
    let mut phase = Vec::with_capacity(n);
    let mut forcing = Vec::with_capacity(n);
    for k in 0..n {
        phase.push((-alpha_x * (demo.times()[k] - t0) / tau).exp());
        let y = demo.positions()[k];
        let d_cg = quat_diff(&demo.orientations()[k], &goal.orientation)?.vector();
        let f_p = derivs.acceleration[k] * (tau * tau)
            - ((goal.position - y) * beta_z - derivs.velocity[k] * tau) * alpha_z;
        let f_o =
            derivs.omega_dot[k] * (tau * tau) - (-d_cg * beta_z - derivs.omega[k] * tau) * alpha_z;
        forcing.push(Vector6::new(f_p.x, f_p.y, f_p.z, f_o.x, f_o.y, f_o.z));
    }
    Ok(RegressionTargets {
        phase,
        forcing,
        scale,
    })
}

/// What happened during a fit.
#[derive(Clone, Debug, Default)]
pub struct FitReport {
    /// Dimensions skipped because their scaling is degenerate.
    pub skipped_dims: Vec<usize>,
    /// `(dim, basis)` pairs whose normal equation was ill conditioned.
    pub ill_conditioned: Vec<(usize, usize)>,
    /// RMS of target minus reproduced forcing, per dimension.
    pub rms_residual: [f64; 6],
}

/// Per-basis locally weighted least squares on the regressor
/// `s_k = x_k * scale_i`:
/// `w_ij = sum_k psi_ij(x_k) s_k f_i(k) / sum_k psi_ij(x_k) s_k^2`.
pub fn fit_weights(targets: &RegressionTargets, skeleton: &DmpModel) -> (DmpModel, FitReport) {
    let n_basis = skeleton.n_basis();
    let mut report = FitReport::default();
    let mut weights: [Vec<f64>; 6] = std::array::from_fn(|_| vec![0.0; n_basis]);
    for (dim, row) in weights.iter_mut().enumerate() {
        let scale = targets.scale[dim];
        if scale.abs() < DEGENERATE_SCALE {
            report.skipped_dims.push(dim);
            continue;
        }
        let activations: Vec<Vec<f64>> = targets
            .phase
            .iter()
            .map(|&x| skeleton.basis_activations(x, dim))
            .collect();
        for j in 0..n_basis {
            let mut num = 0.0;
            let mut den = 0.0;
            for (k, &x) in targets.phase.iter().enumerate() {
                let s = x * scale;
                let psi = activations[k][j];
                num += psi * s * targets.forcing[k][dim];
                den += psi * s * s;
            }
            if den < 1e-12 {
                report.ill_conditioned.push((dim, j));
            } else {
                row[j] = num / den;
            }
        }
    }
    let model = skeleton
        .with_weights(weights)
        .expect("skeleton shape fixed above");
    for dim in 0..6 {
        let mut acc = 0.0;
        for (k, &x) in targets.phase.iter().enumerate() {
            let r = targets.forcing[k][dim] - model.forcing_term(x)[dim];
            acc += r * r;
        }
        report.rms_residual[dim] = (acc / targets.phase.len() as f64).sqrt();
    }
    (model, report)
}

/// Result of the full training pipeline.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: DmpModel,
    pub report: FitReport,
    pub non_uniform_sampling: bool,
}

/// Differentiate, invert, fit. `tau` and the nominal duration both come
/// from the demonstration; the final sample defines the goal pose.
pub fn train_from_demo(
    demo: &Demonstration,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, LearnError> {
    let tau = demo.duration();
    let derivs = differentiate_demo(demo)?;
    let targets = compute_targets(demo, &derivs, cfg.alpha_z, cfg.alpha_x, tau)?;
    let skeleton = DmpModel::with_default_basis(
        cfg.alpha_z,
        cfg.alpha_x,
        tau,
        cfg.n_basis,
        tau,
        &demo.start_pose(),
        &demo.goal_pose(),
    )?;
    let (model, report) = fit_weights(&targets, &skeleton);
    Ok(TrainOutcome {
        model,
        report,
        non_uniform_sampling: derivs.non_uniform_sampling,
    })
}

/// Which synthetic demonstration to generate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DemoKind {
    /// Translate to the goal with a sub-half-turn orientation change.
    Reach,
    /// A handover-style motion whose rotation angle exceeds pi, exercising
    /// both quaternion half-spheres.
    HandoverGtPi,
}

/// Request for [`synth_demo`]. The goal orientation is
/// `exp_map(angle * axis / 2) * start.orientation`, reached along the
/// constant-axis geodesic with a minimum-jerk angle profile.
#[derive(Clone, Debug)]
pub struct SynthDemoConfig {
    pub kind: DemoKind,
    pub duration: f64,
    pub sample_rate: f64,
    pub start: Pose,
    pub goal_position: Vector3<f64>,
    pub rotation_axis: Vector3<f64>,
    pub rotation_angle: f64,
}

impl SynthDemoConfig {
    /// Reach toward an explicit goal pose; axis and angle come from the
    /// orientation difference map.
    pub fn reach(
        start: Pose,
        goal: Pose,
        duration: f64,
        sample_rate: f64,
    ) -> Result<Self, LearnError> {
        let d = quat_diff(&goal.orientation, &start.orientation)?;
        let angle = d.angle();
        let axis = if angle > 0.0 {
            d.vector() / angle
        } else {
            Vector3::x()
        };
        Ok(SynthDemoConfig {
            kind: DemoKind::Reach,
            duration,
            sample_rate,
            start,
            goal_position: goal.position,
            rotation_axis: axis,
            rotation_angle: angle,
        })
    }

    pub fn handover(
        start: Pose,
        goal_position: Vector3<f64>,
        rotation_axis: Vector3<f64>,
        rotation_angle: f64,
        duration: f64,
        sample_rate: f64,
    ) -> Self {
        SynthDemoConfig {
            kind: DemoKind::HandoverGtPi,
            duration,
            sample_rate,
            start,
            goal_position,
            rotation_axis,
            rotation_angle,
        }
    }
}

fn min_jerk(u: f64) -> f64 {
    u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
}

/// Generates a synthetic demonstration: minimum-jerk position profile and a
/// constant-axis geodesic orientation with a minimum-jerk angle profile.
/// Start and end are at rest; the sample count is `round(duration * rate)`.
pub fn synth_demo(cfg: &SynthDemoConfig) -> Result<Demonstration, LearnError> {
    match cfg.kind {
        DemoKind::Reach => {
            if !(cfg.rotation_angle >= 0.0 && cfg.rotation_angle < 2.0 * std::f64::consts::PI) {
                return Err(LearnError::InvalidAngle {
                    angle: cfg.rotation_angle,
                    required: "[0, 2*pi) for a reach",
                });
            }
        }
        DemoKind::HandoverGtPi => {
            if !(cfg.rotation_angle > std::f64::consts::PI
                && cfg.rotation_angle < 2.0 * std::f64::consts::PI)
            {
                return Err(LearnError::InvalidAngle {
                    angle: cfg.rotation_angle,
                    required: "(pi, 2*pi) for a handover",
                });
            }
        }
    }
    let n = (cfg.duration * cfg.sample_rate).round() as i64;
    if n < 3 {
        return Err(LearnError::TooFewSamples {
            got: n.max(0) as usize,
        });
    }
    let n = n as usize;
    let t_end = (n - 1) as f64 / cfg.sample_rate;
    let axis_norm = cfg.rotation_axis.norm();
    let axis = if axis_norm > 0.0 {
        cfg.rotation_axis / axis_norm
    } else {
        Vector3::x()
    };
    let goal_orientation = UnitQuaternion::exp_map(&(axis * (0.5 * cfg.rotation_angle)))
        .multiply(&cfg.start.orientation);
    let mut t = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n);
    let mut orientations = Vec::with_capacity(n);
    for k in 0..n {
        let tk = k as f64 / cfg.sample_rate;
        t.push(tk);
        if k == 0 {
            positions.push(cfg.start.position);
            orientations.push(cfg.start.orientation);
        } else if k == n - 1 {
            // endpoints are bit-exact copies of the requested poses
            positions.push(cfg.goal_position);
            orientations.push(goal_orientation);
        } else {
            let s = min_jerk(tk / t_end);
            positions.push(cfg.start.position + (cfg.goal_position - cfg.start.position) * s);
            orientations.push(
                UnitQuaternion::exp_map(&(axis * (0.5 * cfg.rotation_angle * s)))
                    .multiply(&cfg.start.orientation),
            );
        }
    }
    Demonstration::new(t, positions, orientations)
}
