//! The coupled pose DMP: transformation systems for position and
//! orientation, the canonical phase system, Gaussian basis forcing, and
//! fixed-step integration.
//!
//! All dynamics share one adaptive time parameter `tau_a`; every derivative
//! carries it as a single left divisor, so rescaling `tau_a` rescales every
//! derivative exactly.

use nalgebra::{Vector3, Vector6};
use thiserror::Error;

use crate::quaternion::{integrate_orientation, quat_diff, DomainError, UnitQuaternion};

/// A scaling component smaller than this marks the dimension degenerate:
/// its forcing is identically zero and training skips it.
pub const DEGENERATE_SCALE: f64 = 1e-12;

/// Position plus orientation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion,
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion) -> Self {
        Pose {
            position,
            orientation,
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{what} must be strictly positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("basis must contain at least one function")]
    EmptyBasis,
    #[error("dimension {dim}: expected {expected} basis entries, got {got}")]
    BasisShape {
        dim: usize,
        expected: usize,
        got: usize,
    },
    #[error("dimension {dim}: centers must be strictly decreasing (violated at index {index})")]
    CentersNotDecreasing { dim: usize, index: usize },
    #[error("goal and start orientations differ by a full turn: {0}")]
    Domain(#[from] DomainError),
}

/// All parameters of a coupled pose DMP.
///
/// Construction enforces `beta_z = alpha_z / 4` (critically damped
/// transformation systems) and caches the forcing scale
/// `(g - y0, d(q_g * conj(q0)))` together with its degenerate dimensions.
#[derive(Clone, Debug)]
pub struct DmpModel {
    alpha_z: f64,
    beta_z: f64,
    alpha_x: f64,
    tau: f64,
    n_basis: usize,
    centers: [Vec<f64>; 6],
    widths: [Vec<f64>; 6],
    weights: [Vec<f64>; 6],
    start_position: Vector3<f64>,
    goal_position: Vector3<f64>,
    start_orientation: UnitQuaternion,
    goal_orientation: UnitQuaternion,
    scale: Vector6<f64>,
    degenerate: [bool; 6],
}

/// Owned field set handed to [`DmpModel::new`].
#[derive(Clone, Debug)]
pub struct DmpModelParts {
    pub alpha_z: f64,
    pub alpha_x: f64,
    pub tau: f64,
    pub centers: [Vec<f64>; 6],
    pub widths: [Vec<f64>; 6],
    pub weights: [Vec<f64>; 6],
    pub start_position: Vector3<f64>,
    pub goal_position: Vector3<f64>,
    pub start_orientation: UnitQuaternion,
    pub goal_orientation: UnitQuaternion,
}

/// Evolving DMP-side state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoupledState {
    /// Coupled position `y_c`.
    pub position: Vector3<f64>,
    /// Scaled velocity state `z` (`tau_a * dy_c = z`).
    pub z: Vector3<f64>,
    /// Coupled orientation `q_c`.
    pub orientation: UnitQuaternion,
    /// Scaled angular-velocity state (`tau_a * omega_c = omega_z`).
    pub omega_z: Vector3<f64>,
    /// Canonical phase, in `(0, 1]` for the standard initialization.
    pub phase: f64,
}

/// Time derivatives of [`CoupledState`], all scaled by the same `1/tau_a`.
#[derive(Clone, Copy, Debug)]
pub struct CoupledDerivatives {
    /// `dy_c = z / tau_a`.
    pub position_dot: Vector3<f64>,
    pub z_dot: Vector3<f64>,
    /// Coupled angular velocity `omega_c = omega_z / tau_a`; the orientation
    /// advances by integrating it.
    pub omega: Vector3<f64>,
    pub omega_z_dot: Vector3<f64>,
    pub phase_dot: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Integrator {
    /// Velocity states first, positions with the updated velocities, phase
    /// multiplicatively. The production 250 Hz loop.
    SemiImplicitEuler,
    /// Classical 4-stage Runge-Kutta, for convergence studies.
    RungeKutta4,
}

/// Basis centers equally spaced in nominal time along the phase decay,
/// widths half the gap to the next center (last width copied).
pub fn default_basis(
    n_basis: usize,
    alpha_x: f64,
    tau: f64,
    t_nominal: f64,
) -> (Vec<f64>, Vec<f64>) {
    assert!(n_basis >= 1, "need at least one basis function");
    if n_basis == 1 {
        return (vec![(-0.5 * alpha_x * t_nominal / tau).exp()], vec![0.25]);
    }
    let centers: Vec<f64> = (0..n_basis)
        .map(|j| (-alpha_x * t_nominal / tau * j as f64 / (n_basis - 1) as f64).exp())
        .collect();
    let mut widths: Vec<f64> = centers.windows(2).map(|w| 0.5 * (w[0] - w[1])).collect();
    widths.push(*widths.last().unwrap());
    (centers, widths)
}

impl DmpModel {
    pub fn new(parts: DmpModelParts) -> Result<Self, ModelError> {
        fn positive(what: &'static str, value: f64) -> Result<(), ModelError> {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(ModelError::NonPositive { what, value })
            }
        }
        positive("alpha_z", parts.alpha_z)?;
        positive("alpha_x", parts.alpha_x)?;
        positive("tau", parts.tau)?;
        let n_basis = parts.centers[0].len();
        if n_basis == 0 {
            return Err(ModelError::EmptyBasis);
        }
        for dim in 0..6 {
            for row in [&parts.centers[dim], &parts.widths[dim], &parts.weights[dim]] {
                if row.len() != n_basis {
                    return Err(ModelError::BasisShape {
                        dim,
                        expected: n_basis,
                        got: row.len(),
                    });
                }
            }
            for &w in &parts.widths[dim] {
                if !w.is_finite() || w <= 0.0 {
                    return Err(ModelError::NonPositive {
                        what: "width",
                        value: w,
                    });
                }
            }
            for index in 1..n_basis {
                if parts.centers[dim][index] >= parts.centers[dim][index - 1] {
                    return Err(ModelError::CentersNotDecreasing { dim, index });
                }
            }
        }
        let d0g = quat_diff(&parts.goal_orientation, &parts.start_orientation)?;
        let lin = parts.goal_position - parts.start_position;
        let scale = Vector6::new(lin.x, lin.y, lin.z, d0g.0.x, d0g.0.y, d0g.0.z);
        let mut degenerate = [false; 6];
        for dim in 0..6 {
            degenerate[dim] = scale[dim].abs() < DEGENERATE_SCALE;
        }
        Ok(DmpModel {
            alpha_z: parts.alpha_z,
            beta_z: parts.alpha_z / 4.0,
            alpha_x: parts.alpha_x,
            tau: parts.tau,
            n_basis,
            centers: parts.centers,
            widths: parts.widths,
            weights: parts.weights,
            start_position: parts.start_position,
            goal_position: parts.goal_position,
            start_orientation: parts.start_orientation,
            goal_orientation: parts.goal_orientation,
            scale,
            degenerate,
        })
    }

    /// Zero-weight model with [`default_basis`] placement shared by all six
    /// dimensions. The usual starting point for training.
    pub fn with_default_basis(
        alpha_z: f64,
        alpha_x: f64,
        tau: f64,
        n_basis: usize,
        t_nominal: f64,
        start: &Pose,
        goal: &Pose,
    ) -> Result<Self, ModelError> {
        if n_basis == 0 {
            return Err(ModelError::EmptyBasis);
        }
        let (centers, widths) = default_basis(n_basis, alpha_x, tau, t_nominal);
        Self::new(DmpModelParts {
            alpha_z,
            alpha_x,
            tau,
            centers: std::array::from_fn(|_| centers.clone()),
            widths: std::array::from_fn(|_| widths.clone()),
            weights: std::array::from_fn(|_| vec![0.0; n_basis]),
            start_position: start.position,
            goal_position: goal.position,
            start_orientation: start.orientation,
            goal_orientation: goal.orientation,
        })
    }

    /// Same model with replaced forcing weights.
    pub fn with_weights(&self, weights: [Vec<f64>; 6]) -> Result<Self, ModelError> {
        for (dim, row) in weights.iter().enumerate() {
            if row.len() != self.n_basis {
                return Err(ModelError::BasisShape {
                    dim,
                    expected: self.n_basis,
                    got: row.len(),
                });
            }
        }
        let mut model = self.clone();
        model.weights = weights;
        Ok(model)
    }

    pub fn alpha_z(&self) -> f64 {
        self.alpha_z
    }

    /// Always `alpha_z / 4`.
    pub fn beta_z(&self) -> f64 {
        self.beta_z
    }

    pub fn alpha_x(&self) -> f64 {
        self.alpha_x
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn centers(&self, dim: usize) -> &[f64] {
        &self.centers[dim]
    }

    pub fn widths(&self, dim: usize) -> &[f64] {
        &self.widths[dim]
    }

    pub fn weights(&self, dim: usize) -> &[f64] {
        &self.weights[dim]
    }

    pub fn start_position(&self) -> Vector3<f64> {
        self.start_position
    }

    pub fn goal_position(&self) -> Vector3<f64> {
        self.goal_position
    }

    pub fn start_orientation(&self) -> UnitQuaternion {
        self.start_orientation
    }

    pub fn goal_orientation(&self) -> UnitQuaternion {
        self.goal_orientation
    }

    /// Forcing scale `(g - y0, d(q_g * conj(q0)))`, cached at construction.
    pub fn scaling(&self) -> Vector6<f64> {
        self.scale
    }

    /// Dimensions whose scaling magnitude is below [`DEGENERATE_SCALE`];
    /// their forcing is identically zero and their weights unidentifiable.
    pub fn degenerate_dims(&self) -> [bool; 6] {
        self.degenerate
    }

    /// State at the start pose with unit phase, at rest.
    pub fn initial_state(&self) -> CoupledState {
        CoupledState {
            position: self.start_position,
            z: Vector3::zeros(),
            orientation: self.start_orientation,
            omega_z: Vector3::zeros(),
            phase: 1.0,
        }
    }

    /// State at the goal pose, at rest, with the given (small) phase.
    pub fn converged_state(&self, phase: f64) -> CoupledState {
        CoupledState {
            position: self.goal_position,
            z: Vector3::zeros(),
            orientation: self.goal_orientation,
            omega_z: Vector3::zeros(),
            phase,
        }
    }

    /// Gaussian activations of one dimension's basis row at phase `x`.
    pub fn basis_activations(&self, x: f64, dim: usize) -> Vec<f64> {
        (0..self.n_basis)
            .map(|j| {
                let t = (x - self.centers[dim][j]) / self.widths[dim][j];
                (-0.5 * t * t).exp()
            })
            .collect()
    }

    /// Forcing term at phase `x`: normalized basis mixture times
    /// `x * scale`, per dimension. Degenerate dimensions are exactly zero,
    /// as is any dimension whose activations underflow entirely.
    pub fn forcing_term(&self, x: f64) -> Vector6<f64> {
        let mut f = Vector6::zeros();
        for dim in 0..6 {
            if self.degenerate[dim] {
                continue;
            }
            let mut num = 0.0;
            let mut den = 0.0;
            for j in 0..self.n_basis {
                let t = (x - self.centers[dim][j]) / self.widths[dim][j];
                let psi = (-0.5 * t * t).exp();
                num += psi * self.weights[dim][j];
                den += psi;
            }
            if den > 0.0 {
                f[dim] = num / den * x * self.scale[dim];
            }
        }
        f
    }

    /// Time derivatives of the coupled system at `state` under `tau_a`.
    ///
    /// Every component is formed as a numerator divided once by `tau_a`, so
    /// `derivatives(s, 2 * tau_a)` equals `derivatives(s, tau_a)` halved,
    /// bitwise.
    pub fn derivatives(
        &self,
        state: &CoupledState,
        tau_a: f64,
    ) -> Result<CoupledDerivatives, DomainError> {
        let d_cg = quat_diff(&state.orientation, &self.goal_orientation)?;
        Ok(self.derivatives_with(state, tau_a, &d_cg.0))
    }

    fn derivatives_with(
        &self,
        state: &CoupledState,
        tau_a: f64,
        d_cg: &Vector3<f64>,
    ) -> CoupledDerivatives {
        let f = self.forcing_term(state.phase);
        let f_p = Vector3::new(f[0], f[1], f[2]);
        let f_o = Vector3::new(f[3], f[4], f[5]);
        let z_num =
            ((self.goal_position - state.position) * self.beta_z - state.z) * self.alpha_z + f_p;
        let omega_z_num = (-d_cg * self.beta_z - state.omega_z) * self.alpha_z + f_o;
        CoupledDerivatives {
            position_dot: state.z / tau_a,
            z_dot: z_num / tau_a,
            omega: state.omega_z / tau_a,
            omega_z_dot: omega_z_num / tau_a,
            phase_dot: (-self.alpha_x * state.phase) / tau_a,
        }
    }

    /// One fixed step of the coupled system.
    pub fn step(
        &self,
        state: &CoupledState,
        tau_a: f64,
        dt: f64,
    ) -> Result<CoupledState, DomainError> {
        self.step_with(state, tau_a, dt, Integrator::SemiImplicitEuler)
    }

    pub fn step_with(
        &self,
        state: &CoupledState,
        tau_a: f64,
        dt: f64,
        method: Integrator,
    ) -> Result<CoupledState, DomainError> {
        match method {
            Integrator::SemiImplicitEuler => {
                let d = self.derivatives(state, tau_a)?;
                let z = state.z + d.z_dot * dt;
                let position = state.position + (z / tau_a) * dt;
                let omega_z = state.omega_z + d.omega_z_dot * dt;
                let orientation = integrate_orientation(&state.orientation, &(omega_z / tau_a), dt);
                let phase = state.phase * (-self.alpha_x * dt / tau_a).exp();
                Ok(CoupledState {
                    position,
                    z,
                    orientation,
                    omega_z,
                    phase,
                })
            }
            Integrator::RungeKutta4 => self.step_rk4(state, tau_a, dt),
        }
    }

    fn step_rk4(
        &self,
        state: &CoupledState,
        tau_a: f64,
        dt: f64,
    ) -> Result<CoupledState, DomainError> {
        // the orientation is integrated on a local chart: q(delta) =
        // exp_map(delta / 2) * q0, with delta' = omega_c
        type Stage = (Vector3<f64>, Vector3<f64>, Vector3<f64>, Vector3<f64>, f64);
        let eval = |y: Vector3<f64>,
                    z: Vector3<f64>,
                    delta: Vector3<f64>,
                    omega_z: Vector3<f64>,
                    x: f64|
         -> Result<Stage, DomainError> {
            let orientation = UnitQuaternion::exp_map(&(delta * 0.5)).multiply(&state.orientation);
            let s = CoupledState {
                position: y,
                z,
                orientation,
                omega_z,
                phase: x,
            };
            let d = self.derivatives(&s, tau_a)?;
            Ok((d.position_dot, d.z_dot, d.omega, d.omega_z_dot, d.phase_dot))
        };
        let h = dt * 0.5;
        let zero = Vector3::zeros();
        let k1 = eval(state.position, state.z, zero, state.omega_z, state.phase)?;
        let k2 = eval(
            state.position + k1.0 * h,
            state.z + k1.1 * h,
            k1.2 * h,
            state.omega_z + k1.3 * h,
            state.phase + k1.4 * h,
        )?;
        let k3 = eval(
            state.position + k2.0 * h,
            state.z + k2.1 * h,
            k2.2 * h,
            state.omega_z + k2.3 * h,
            state.phase + k2.4 * h,
        )?;
        let k4 = eval(
            state.position + k3.0 * dt,
            state.z + k3.1 * dt,
            k3.2 * dt,
            state.omega_z + k3.3 * dt,
            state.phase + k3.4 * dt,
        )?;
        let sixth = dt / 6.0;
        let delta = (k1.2 + (k2.2 + k3.2) * 2.0 + k4.2) * sixth;
        Ok(CoupledState {
            position: state.position + (k1.0 + (k2.0 + k3.0) * 2.0 + k4.0) * sixth,
            z: state.z + (k1.1 + (k2.1 + k3.1) * 2.0 + k4.1) * sixth,
            orientation: UnitQuaternion::exp_map(&(delta * 0.5)).multiply(&state.orientation),
            omega_z: state.omega_z + (k1.3 + (k2.3 + k3.3) * 2.0 + k4.3) * sixth,
            phase: state.phase + (k1.4 + (k2.4 + k3.4) * 2.0 + k4.4) * sixth,
        })
    }

    /// Analytic accelerations of the coupled pose, for the feedforward path:
    /// `ddy_c = dz/tau_a - z * dtau_a / tau_a^2` and likewise for
    /// `domega_c`. Avoids numeric differentiation of the reference.
    pub fn feedforward(
        &self,
        state: &CoupledState,
        tau_a: f64,
        tau_a_dot: f64,
    ) -> Result<(Vector3<f64>, Vector3<f64>), DomainError> {
        let d = self.derivatives(state, tau_a)?;
        let quot = tau_a_dot / (tau_a * tau_a);
        Ok((
            d.z_dot / tau_a - state.z * quot,
            d.omega_z_dot / tau_a - state.omega_z * quot,
        ))
    }
}
