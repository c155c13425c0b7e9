//! Temporal-coupling machinery and the tracking controller.
//!
//! A first-order filter smooths the difference between the actual and
//! coupled poses; its squared norm inflates the adaptive time parameter
//! `tau_a = tau * (1 + k_c * e'e)`, which slows the coupled system while the
//! robot lags. Tracking itself is a critically damped PD law with the
//! coupled accelerations fed forward.

use nalgebra::{Vector3, Vector6};
use thiserror::Error;

use crate::quaternion::OrientationDiff;

#[derive(Debug, Error)]
pub enum GainsError {
    #[error("{what} must be strictly positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
}

/// Controller gains. `k_p` is derived as `k_v^2 / 4` at construction, which
/// makes the tracking loop critically damped. By default the same gains act
/// on the position and orientation domains; separate orientation gains can
/// be opted into with [`Gains::with_angular_k_v`].
#[derive(Clone, Copy, Debug)]
pub struct Gains {
    k_v: f64,
    k_p: f64,
    angular_k_v: f64,
    angular_k_p: f64,
    alpha_e: f64,
    k_c: f64,
    tau: f64,
}

impl Gains {
    pub fn new(k_v: f64, alpha_e: f64, k_c: f64, tau: f64) -> Result<Self, GainsError> {
        for (what, value) in [
            ("k_v", k_v),
            ("alpha_e", alpha_e),
            ("k_c", k_c),
            ("tau", tau),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(GainsError::NonPositive { what, value });
            }
        }
        Ok(Gains {
            k_v,
            k_p: k_v * k_v / 4.0,
            angular_k_v: k_v,
            angular_k_p: k_v * k_v / 4.0,
            alpha_e,
            k_c,
            tau,
        })
    }

    /// `k_v = 10`, `alpha_e = 10`, `k_c = 1000`: coupling engages visibly at
    /// centimeter / tenth-of-a-radian errors.
    pub fn defaults(tau: f64) -> Result<Self, GainsError> {
        Self::new(10.0, 10.0, 1000.0, tau)
    }

    /// Separate velocity gain for the orientation domain (its `k_p` is
    /// derived the same way, keeping the loop critically damped).
    pub fn with_angular_k_v(mut self, k_v: f64) -> Result<Self, GainsError> {
        if !(k_v > 0.0 && k_v.is_finite()) {
            return Err(GainsError::NonPositive {
                what: "angular k_v",
                value: k_v,
            });
        }
        self.angular_k_v = k_v;
        self.angular_k_p = k_v * k_v / 4.0;
        Ok(self)
    }

    pub fn k_v(&self) -> f64 {
        self.k_v
    }

    /// Always `k_v^2 / 4`.
    pub fn k_p(&self) -> f64 {
        self.k_p
    }

    /// Orientation-domain velocity gain; equals [`Gains::k_v`] unless set
    /// separately.
    pub fn angular_k_v(&self) -> f64 {
        self.angular_k_v
    }

    pub fn angular_k_p(&self) -> f64 {
        self.angular_k_p
    }

    pub fn alpha_e(&self) -> f64 {
        self.alpha_e
    }

    pub fn k_c(&self) -> f64 {
        self.k_c
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self, GainsError> {
        Self::new(self.k_v, self.alpha_e, self.k_c, tau)
            .and_then(|g| g.with_angular_k_v(self.angular_k_v))
    }
}

/// Low-pass filtered pose error, position part in meters and orientation
/// part in the rotation-vector difference space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorFilterState {
    pub position: Vector3<f64>,
    pub orientation: Vector3<f64>,
}

impl ErrorFilterState {
    pub fn zero() -> Self {
        ErrorFilterState {
            position: Vector3::zeros(),
            orientation: Vector3::zeros(),
        }
    }

    /// The stacked filter state `e = [e_p' e_o']'`.
    pub fn stacked(&self) -> Vector6<f64> {
        Vector6::new(
            self.position.x,
            self.position.y,
            self.position.z,
            self.orientation.x,
            self.orientation.y,
            self.orientation.z,
        )
    }

    pub fn norm_squared(&self) -> f64 {
        self.position.norm_squared() + self.orientation.norm_squared()
    }
}

/// One step of the error filters `de_p = alpha_e (y_a - y_c - e_p)` and
/// `de_o = alpha_e (d_ac - e_o)`, discretized exactly:
/// `e+ = u + (e - u) * exp(-alpha_e * dt)`. Unconditionally stable for any
/// step size.
pub fn error_filter_step(
    state: &ErrorFilterState,
    actual_position: &Vector3<f64>,
    coupled_position: &Vector3<f64>,
    d_ac: &OrientationDiff,
    alpha_e: f64,
    dt: f64,
) -> ErrorFilterState {
    let decay = (-alpha_e * dt).exp();
    let u_p = actual_position - coupled_position;
    let u_o = d_ac.vector();
    ErrorFilterState {
        position: u_p + (state.position - u_p) * decay,
        orientation: u_o + (state.orientation - u_o) * decay,
    }
}

/// Instantaneous filter rate `de = alpha_e (u - e)`, stacked. Feeds the
/// analytic `dtau_a`.
pub fn error_filter_rate(
    state: &ErrorFilterState,
    actual_position: &Vector3<f64>,
    coupled_position: &Vector3<f64>,
    d_ac: &OrientationDiff,
    alpha_e: f64,
) -> Vector6<f64> {
    let u_p = (actual_position - coupled_position - state.position) * alpha_e;
    let u_o = (d_ac.vector() - state.orientation) * alpha_e;
    Vector6::new(u_p.x, u_p.y, u_p.z, u_o.x, u_o.y, u_o.z)
}

/// Adaptive time parameter `tau_a = tau * (1 + k_c * e'e)`. Never below the
/// nominal `tau`; equal exactly when the filtered error is zero.
pub fn adaptive_tau(gains: &Gains, e: &Vector6<f64>) -> f64 {
    gains.tau * (1.0 + gains.k_c * e.norm_squared())
}

/// Analytic rate of the adaptive time parameter,
/// `dtau_a = 2 * tau * k_c * e'de`.
pub fn adaptive_tau_rate(gains: &Gains, e: &Vector6<f64>, e_dot: &Vector6<f64>) -> f64 {
    2.0 * gains.tau * gains.k_c * e.dot(e_dot)
}

/// Reference trajectory sample produced by the coupled system.
#[derive(Clone, Copy, Debug)]
pub struct PoseRef {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub omega: Vector3<f64>,
    pub omega_dot: Vector3<f64>,
}

/// Commanded accelerations for the robot.
#[derive(Clone, Copy, Debug)]
pub struct PdCommand {
    /// Reference linear acceleration.
    pub linear: Vector3<f64>,
    /// Reference angular acceleration.
    pub angular: Vector3<f64>,
}

/// Critically damped PD law with feedforward:
/// `ddy_r = k_p (y_c - y_a) + k_v (dy_c - dy_a) + ddy_c` and
/// `domega_r = -k_p d_ac - k_v (omega_a - omega_c) + domega_c`,
/// where `d_ac` is the orientation difference from actual to coupled.
pub fn pd_feedforward(
    gains: &Gains,
    actual_position: &Vector3<f64>,
    actual_velocity: &Vector3<f64>,
    actual_omega: &Vector3<f64>,
    d_ac: &OrientationDiff,
    reference: &PoseRef,
) -> PdCommand {
    PdCommand {
        linear: (reference.position - actual_position) * gains.k_p
            + (reference.velocity - actual_velocity) * gains.k_v
            + reference.acceleration,
        angular: -d_ac.vector() * gains.angular_k_p
            - (actual_omega - reference.omega) * gains.angular_k_v
            + reference.omega_dot,
    }
}
