//! Closed-loop episode runner: the coupled DMP as outer loop, the critically
//! damped PD as inner loop, and a double-integrator robot model, with
//! scripted perturbations and per-step state logging.

pub mod analysis;
pub mod presets;

use nalgebra::{Vector3, Vector6};
use thiserror::Error;

use crate::controller::{
    adaptive_tau, adaptive_tau_rate, error_filter_rate, error_filter_step, pd_feedforward,
    ErrorFilterState, Gains, PoseRef,
};
use crate::dmp::{CoupledState, DmpModel};
use crate::quaternion::{integrate_orientation, quat_diff, DomainError, UnitQuaternion};

/// 250 Hz control loop.
pub const DEFAULT_DT: f64 = 1.0 / 250.0;

/// The robot block: a double integrator in both the linear and angular
/// domains, so the commanded accelerations are realized directly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobotState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub orientation: UnitQuaternion,
    pub omega: Vector3<f64>,
}

impl RobotState {
    /// At rest at the given pose.
    pub fn at_rest(position: Vector3<f64>, orientation: UnitQuaternion) -> Self {
        RobotState {
            position,
            velocity: Vector3::zeros(),
            orientation,
            omega: Vector3::zeros(),
        }
    }
}

/// One semi-implicit step of the double integrator. The disturbance is a
/// generalized acceleration (linear stacked over angular) added to the
/// commanded one.
pub fn robot_step(
    state: &RobotState,
    linear_acc: &Vector3<f64>,
    angular_acc: &Vector3<f64>,
    disturbance: &Vector6<f64>,
    dt: f64,
) -> RobotState {
    let velocity = state.velocity
        + (linear_acc + Vector3::new(disturbance[0], disturbance[1], disturbance[2])) * dt;
    let omega = state.omega
        + (angular_acc + Vector3::new(disturbance[3], disturbance[4], disturbance[5])) * dt;
    RobotState {
        position: state.position + velocity * dt,
        velocity,
        orientation: integrate_orientation(&state.orientation, &omega, dt),
        omega,
    }
}

/// Scripted stand-ins for a human perturbing the robot.
#[derive(Clone, Debug, PartialEq)]
pub enum Perturbation {
    /// Instantaneously offset the actual pose at time `t` and release the
    /// robot at rest there.
    DisplaceRelease {
        t: f64,
        delta_position: Vector3<f64>,
        /// Axis-angle offset applied on the left of the orientation.
        delta_rotation: Vector3<f64>,
    },
    /// A constant generalized acceleration added over `[t_start, t_end)`.
    AccelPulse {
        t_start: f64,
        t_end: f64,
        linear: Vector3<f64>,
        angular: Vector3<f64>,
    },
}

impl Perturbation {
    /// When the perturbation stops acting.
    pub fn end_time(&self) -> f64 {
        match self {
            Perturbation::DisplaceRelease { t, .. } => *t,
            Perturbation::AccelPulse { t_end, .. } => *t_end,
        }
    }
}

/// The stacked cascade state: tracking errors, the filter state, and the
/// DMP-side state, in the canonical order.
#[derive(Clone, Copy, Debug)]
pub struct XiState {
    /// `y_a - y_c`.
    pub position_err: Vector3<f64>,
    /// `dy_a - dy_c`.
    pub velocity_err: Vector3<f64>,
    /// Orientation difference from actual to coupled.
    pub d_ac: Vector3<f64>,
    /// `omega_a - omega_c`.
    pub omega_err: Vector3<f64>,
    /// Stacked filter state.
    pub e: Vector6<f64>,
    /// Canonical phase.
    pub phase: f64,
    /// `y_c - g`.
    pub goal_err: Vector3<f64>,
    pub z: Vector3<f64>,
    /// Orientation difference from coupled to goal.
    pub d_cg: Vector3<f64>,
    pub omega_z: Vector3<f64>,
}

/// 2-norms of every [`XiState`] component.
#[derive(Clone, Copy, Debug)]
pub struct XiNorms {
    pub position_err: f64,
    pub velocity_err: f64,
    pub d_ac: f64,
    pub omega_err: f64,
    pub e: f64,
    pub phase: f64,
    pub goal_err: f64,
    pub z: f64,
    pub d_cg: f64,
    pub omega_z: f64,
}

impl XiNorms {
    pub fn as_array(&self) -> [f64; 10] {
        [
            self.position_err,
            self.velocity_err,
            self.d_ac,
            self.omega_err,
            self.e,
            self.phase,
            self.goal_err,
            self.z,
            self.d_cg,
            self.omega_z,
        ]
    }

    pub fn max(&self) -> f64 {
        self.as_array().into_iter().fold(0.0, f64::max)
    }
}

impl XiState {
    pub fn norms(&self) -> XiNorms {
        XiNorms {
            position_err: self.position_err.norm(),
            velocity_err: self.velocity_err.norm(),
            d_ac: self.d_ac.norm(),
            omega_err: self.omega_err.norm(),
            e: self.e.norm(),
            phase: self.phase.abs(),
            goal_err: self.goal_err.norm(),
            z: self.z.norm(),
            d_cg: self.d_cg.norm(),
            omega_z: self.omega_z.norm(),
        }
    }

    /// All 31 scalars in canonical order.
    pub fn stacked(&self) -> [f64; 31] {
        let mut out = [0.0; 31];
        let mut i = 0;
        for v in [
            &self.position_err,
            &self.velocity_err,
            &self.d_ac,
            &self.omega_err,
        ] {
            out[i] = v.x;
            out[i + 1] = v.y;
            out[i + 2] = v.z;
            i += 3;
        }
        for k in 0..6 {
            out[i] = self.e[k];
            i += 1;
        }
        out[i] = self.phase;
        i += 1;
        for v in [&self.goal_err, &self.z, &self.d_cg, &self.omega_z] {
            out[i] = v.x;
            out[i + 1] = v.y;
            out[i + 2] = v.z;
            i += 3;
        }
        out
    }

    /// 2-norm of the full stacked state.
    pub fn total_norm(&self) -> f64 {
        self.stacked().iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Assembles the stacked cascade state from its parts. `tau_a` scales the
/// DMP-internal velocities into world rates.
pub fn xi_state(
    coupled: &CoupledState,
    robot: &RobotState,
    filter: &ErrorFilterState,
    model: &DmpModel,
    tau_a: f64,
) -> Result<XiState, DomainError> {
    let d_ac = quat_diff(&robot.orientation, &coupled.orientation)?;
    let d_cg = quat_diff(&coupled.orientation, &model.goal_orientation())?;
    Ok(XiState {
        position_err: robot.position - coupled.position,
        velocity_err: robot.velocity - coupled.z / tau_a,
        d_ac: d_ac.vector(),
        omega_err: robot.omega - coupled.omega_z / tau_a,
        e: filter.stacked(),
        phase: coupled.phase,
        goal_err: coupled.position - model.goal_position(),
        z: coupled.z,
        d_cg: d_cg.vector(),
        omega_z: coupled.omega_z,
    })
}

/// One logged control step.
#[derive(Clone, Copy, Debug)]
pub struct StepRecord {
    pub t: f64,
    pub tau_a: f64,
    pub xi: XiState,
    pub q_c: UnitQuaternion,
    pub q_a: UnitQuaternion,
}

/// Time series of the cascade state over one episode, one record per control
/// step plus a terminal record at the horizon.
#[derive(Clone, Debug)]
pub struct EpisodeLog {
    records: Vec<StepRecord>,
    dt: f64,
}

impl EpisodeLog {
    pub fn new(records: Vec<StepRecord>, dt: f64) -> Self {
        EpisodeLog { records, dt }
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> &StepRecord {
        self.records.last().expect("episode log is never empty")
    }

    /// Record index closest to time `t`.
    pub fn index_at(&self, t: f64) -> usize {
        ((t / self.dt).round() as usize).min(self.records.len().saturating_sub(1))
    }

    /// Earliest time after which every component norm stays below `tol`
    /// through the end of the log.
    pub fn converged_within(&self, tol: f64) -> Option<f64> {
        let mut last_bad = None;
        for (i, r) in self.records.iter().enumerate() {
            if r.xi.norms().max() >= tol {
                last_bad = Some(i);
            }
        }
        match last_bad {
            None => Some(self.records[0].t),
            Some(i) if i + 1 < self.records.len() => Some(self.records[i + 1].t),
            Some(_) => None,
        }
    }

    pub fn max_tau_ratio(&self, tau: f64) -> f64 {
        self.records
            .iter()
            .map(|r| r.tau_a / tau)
            .fold(0.0, f64::max)
    }

    /// Smallest dot product between successive coupled orientations; above
    /// zero means the log never sign-flipped.
    pub fn min_successive_qc_dot(&self) -> f64 {
        self.records
            .windows(2)
            .map(|w| w[0].q_c.dot(&w[1].q_c))
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether the coupled orientation's scalar part changed sign.
    pub fn crosses_equator(&self) -> bool {
        self.records
            .windows(2)
            .any(|w| w[0].q_c.w() * w[1].q_c.w() <= 0.0)
    }
}

/// How to run one episode.
#[derive(Clone, Debug)]
pub struct EpisodeConfig {
    pub horizon: f64,
    pub dt: f64,
    pub perturbations: Vec<Perturbation>,
    /// Initialize the coupled system already converged at the goal (with
    /// `converged_phase`) instead of at the start pose with unit phase.
    pub start_at_goal: bool,
    pub converged_phase: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            horizon: 8.0,
            dt: DEFAULT_DT,
            perturbations: Vec::new(),
            start_at_goal: false,
            converged_phase: 1e-6,
        }
    }
}

impl EpisodeConfig {
    fn validate(&self) -> Result<(), EpisodeError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.dt) || !positive(self.horizon) {
            return Err(EpisodeError::InvalidConfig {
                reason: format!(
                    "dt ({}) and horizon ({}) must be positive",
                    self.dt, self.horizon
                ),
            });
        }
        if !positive(self.converged_phase) {
            return Err(EpisodeError::InvalidConfig {
                reason: format!(
                    "converged_phase must be positive, got {}",
                    self.converged_phase
                ),
            });
        }
        for p in &self.perturbations {
            if let Perturbation::AccelPulse { t_start, t_end, .. } = p {
                if !t_start.is_finite() || !t_end.is_finite() || t_start >= t_end {
                    return Err(EpisodeError::InvalidConfig {
                        reason: format!("pulse window [{t_start}, {t_end}) is empty"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Latest instant at which any scheduled perturbation is still acting.
    pub fn last_perturbation_end(&self) -> Option<f64> {
        self.perturbations
            .iter()
            .map(|p| p.end_time())
            .fold(None, |acc, t| Some(acc.map_or(t, |a: f64| a.max(t))))
    }
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("invalid episode configuration: {reason}")]
    InvalidConfig { reason: String },
    /// The cascade evaluated an orientation difference inside the singular
    /// region; the log up to the offending step is retained.
    #[error("episode aborted at t = {t:.4} s (step {step}): {source}")]
    Aborted {
        t: f64,
        step: usize,
        source: DomainError,
        log: EpisodeLog,
    },
}

/// Runs the full cascade at fixed `dt`: filter update, adaptive time
/// parameter, coupled derivatives with analytic feedforward, tracking law,
/// robot step, coupled step. Deterministic in its inputs.
pub fn run_episode(
    model: &DmpModel,
    gains: &Gains,
    config: &EpisodeConfig,
) -> Result<EpisodeLog, EpisodeError> {
    config.validate()?;
    let dt = config.dt;
    let steps = (config.horizon / dt).round() as usize;
    let mut coupled = if config.start_at_goal {
        model.converged_state(config.converged_phase)
    } else {
        model.initial_state()
    };
    let mut robot = RobotState::at_rest(coupled.position, coupled.orientation);
    let mut filter = ErrorFilterState::zero();
    let mut records: Vec<StepRecord> = Vec::with_capacity(steps + 1);

    for step in 0..=steps {
        let t = step as f64 * dt;

        macro_rules! guard {
            ($expr:expr) => {
                match $expr {
                    Ok(v) => v,
                    Err(source) => {
                        return Err(EpisodeError::Aborted {
                            t,
                            step,
                            source,
                            log: EpisodeLog::new(records, dt),
                        })
                    }
                }
            };
        }

        let mut disturbance = Vector6::zeros();
        for p in &config.perturbations {
            match p {
                Perturbation::DisplaceRelease {
                    t: t0,
                    delta_position,
                    delta_rotation,
                } => {
                    if *t0 >= t && *t0 < t + dt {
                        robot.position += delta_position;
                        robot.orientation = UnitQuaternion::exp_map(&(delta_rotation * 0.5))
                            .multiply(&robot.orientation);
                        robot.velocity = Vector3::zeros();
                        robot.omega = Vector3::zeros();
                    }
                }
                Perturbation::AccelPulse {
                    t_start,
                    t_end,
                    linear,
                    angular,
                } => {
                    if t >= *t_start && t < *t_end {
                        disturbance += Vector6::new(
                            linear.x, linear.y, linear.z, angular.x, angular.y, angular.z,
                        );
                    }
                }
            }
        }

        let d_ac = guard!(quat_diff(&robot.orientation, &coupled.orientation));
        filter = error_filter_step(
            &filter,
            &robot.position,
            &coupled.position,
            &d_ac,
            gains.alpha_e(),
            dt,
        );
        let e = filter.stacked();
        let e_dot = error_filter_rate(
            &filter,
            &robot.position,
            &coupled.position,
            &d_ac,
            gains.alpha_e(),
        );
        let tau_a = adaptive_tau(gains, &e);
        let tau_a_dot = adaptive_tau_rate(gains, &e, &e_dot);

        let derivs = guard!(model.derivatives(&coupled, tau_a));
        let quot = tau_a_dot / (tau_a * tau_a);
        let reference = PoseRef {
            position: coupled.position,
            velocity: derivs.position_dot,
            acceleration: derivs.z_dot / tau_a - coupled.z * quot,
            omega: derivs.omega,
            omega_dot: derivs.omega_z_dot / tau_a - coupled.omega_z * quot,
        };

        let xi = guard!(xi_state(&coupled, &robot, &filter, model, tau_a));
        records.push(StepRecord {
            t,
            tau_a,
            xi,
            q_c: coupled.orientation,
            q_a: robot.orientation,
        });
        if step == steps {
            break;
        }

        let cmd = pd_feedforward(
            gains,
            &robot.position,
            &robot.velocity,
            &robot.omega,
            &d_ac,
            &reference,
        );
        robot = robot_step(&robot, &cmd.linear, &cmd.angular, &disturbance, dt);
        coupled = guard!(model.step(&coupled, tau_a, dt));
    }
    Ok(EpisodeLog::new(records, dt))
}
