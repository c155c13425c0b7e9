//! Unit-quaternion algebra on the full hypersphere.
//!
//! Orientations are stored scalar-first as points on the unit 3-sphere and
//! are deliberately *not* sign-canonicalized: both half-hyperspheres are
//! representable, and smooth paths may cross the `w = 0` equator without any
//! sign flip. The single point `(-1, 0, 0, 0)` is excluded from the domain
//! of the logarithm; operations that would evaluate at or very near it
//! return a [`DomainError`] instead of emitting rapidly changing values.
//!
//! The rotation-vector image of [`quat_diff`] lives in the difference space
//! whose norm is the geodesic rotation angle, in `[0, 2*pi)`.

use nalgebra::{Vector3, Vector4};
use thiserror::Error;

/// Default guard radius around the removed point `(-1, 0, 0, 0)` and around
/// the stereographic pole.
pub const EPS_POLE_DEFAULT: f64 = 1e-7;

/// Below this imaginary-part (or rotation-vector) norm, log/exp switch to
/// first-order series to avoid 0/0 at the identity.
const SMALL_IMAG: f64 = 1e-8;

/// An operation was evaluated inside a numerically singular region.
#[derive(Clone, Copy, Debug, PartialEq, Error)]
pub enum DomainError {
    /// The argument is within the guard radius of the removed point
    /// `(-1, 0, 0, 0)`, where the quaternion logarithm is undefined.
    #[error("quaternion within {dist:.3e} of the removed point (-1,0,0,0) (guard {eps:.3e})")]
    NearRemovedPoint { dist: f64, eps: f64 },
    /// The point to project coincides with the projection pole.
    #[error("point within {dist:.3e} of the stereographic pole (guard {eps:.3e})")]
    NearPole { dist: f64, eps: f64 },
}

/// Orientation on the unit 3-sphere, scalar part first.
///
/// The stored components always satisfy `w^2 + |v|^2 = 1` to within 1e-9;
/// every constructor and every product renormalizes. `q` and `-q` are kept
/// distinct (see module docs).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitQuaternion {
    w: f64,
    v: Vector3<f64>,
}

/// Element of the orientation difference space: the rotation vector
/// `2 * Im[log(q1 * conj(q2))]`, whose norm is the geodesic angle between
/// the two quaternions, in `[0, 2*pi)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientationDiff(pub Vector3<f64>);

impl OrientationDiff {
    pub fn zero() -> Self {
        OrientationDiff(Vector3::zeros())
    }

    /// The raw rotation vector in radians.
    pub fn vector(&self) -> Vector3<f64> {
        self.0
    }

    /// Geodesic rotation angle, `|d|`.
    pub fn angle(&self) -> f64 {
        self.0.norm()
    }
}

impl From<OrientationDiff> for Vector3<f64> {
    fn from(d: OrientationDiff) -> Self {
        d.0
    }
}

impl UnitQuaternion {
    pub fn identity() -> Self {
        UnitQuaternion {
            w: 1.0,
            v: Vector3::zeros(),
        }
    }

    /// Builds from scalar-first components and normalizes.
    ///
    /// Panics if the norm is below 1e-12; use [`UnitQuaternion::try_new`]
    /// for untrusted input.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self::try_new(w, x, y, z).expect("quaternion components have near-zero norm")
    }

    pub fn try_new(w: f64, x: f64, y: f64, z: f64) -> Option<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if n < 1e-12 {
            return None;
        }
        Some(UnitQuaternion {
            w: w / n,
            v: Vector3::new(x / n, y / n, z / n),
        })
    }

    /// Rotation by `angle` radians about `axis` (normalized internally).
    /// A zero axis yields the identity.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n < 1e-300 {
            return Self::identity();
        }
        Self::exp_map(&(axis * (0.5 * angle / n)))
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    /// Imaginary part.
    pub fn vector(&self) -> Vector3<f64> {
        self.v
    }

    /// Components as `[w, x, y, z]`.
    pub fn components(&self) -> [f64; 4] {
        [self.w, self.v.x, self.v.y, self.v.z]
    }

    pub fn as_vector4(&self) -> Vector4<f64> {
        Vector4::new(self.w, self.v.x, self.v.y, self.v.z)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.v.norm_squared()).sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.w * other.w + self.v.dot(&other.v)
    }

    /// The antipode `-q`. Represents the same rotation on the other
    /// half-hypersphere; nothing in this module ever applies it implicitly.
    pub fn negated(&self) -> Self {
        UnitQuaternion {
            w: -self.w,
            v: -self.v,
        }
    }

    /// Conjugate `(w, -v)`; equals the inverse for unit quaternions.
    pub fn conjugate(&self) -> Self {
        UnitQuaternion {
            w: self.w,
            v: -self.v,
        }
    }

    /// Hamilton product, renormalized.
    pub fn multiply(&self, rhs: &Self) -> Self {
        let w = self.w * rhs.w - self.v.dot(&rhs.v);
        let v = rhs.v * self.w + self.v * rhs.w + self.v.cross(&rhs.v);
        let n = (w * w + v.norm_squared()).sqrt();
        UnitQuaternion { w: w / n, v: v / n }
    }

    /// Distance on the embedding space to the removed point `(-1, 0, 0, 0)`.
    pub fn dist_to_removed_point(&self) -> f64 {
        ((self.w + 1.0) * (self.w + 1.0) + self.v.norm_squared()).sqrt()
    }

    /// Quaternion logarithm: `(theta/2) * n` for a rotation by
    /// `theta in [0, 2*pi)` about the unit axis `n`, i.e. the branch
    /// `atan2(|v|, w) * v/|v|` with norm in `[0, pi]`. No re-wrapping to the
    /// upper half-sphere is performed, so differences larger than `pi`
    /// survive.
    ///
    /// Fails when the quaternion is within `eps_pole` of the removed point.
    pub fn log_map_guarded(&self, eps_pole: f64) -> Result<Vector3<f64>, DomainError> {
        let dist = self.dist_to_removed_point();
        if dist < eps_pole {
            return Err(DomainError::NearRemovedPoint {
                dist,
                eps: eps_pole,
            });
        }
        let s = self.v.norm();
        if s < SMALL_IMAG && self.w > 0.0 {
            // first-order series about the identity
            Ok(self.v / self.w)
        } else {
            // atan2(s, w) equals acos(w) on the unit sphere but stays
            // well-conditioned near w = +-1
            Ok(self.v * (s.atan2(self.w) / s))
        }
    }

    /// [`UnitQuaternion::log_map_guarded`] with the default guard radius.
    pub fn log_map(&self) -> Result<Vector3<f64>, DomainError> {
        self.log_map_guarded(EPS_POLE_DEFAULT)
    }

    /// Inverse of [`UnitQuaternion::log_map`]: `(cos|r|, sin|r| * r/|r|)`.
    /// Intended for `|r| < pi`, where it inverts the log branch above.
    pub fn exp_map(r: &Vector3<f64>) -> Self {
        let a = r.norm();
        if a < SMALL_IMAG {
            // first-order series; normalization absorbs the truncation
            let n = (1.0 + a * a).sqrt();
            return UnitQuaternion {
                w: 1.0 / n,
                v: r / n,
            };
        }
        let w = a.cos();
        let v = r * (a.sin() / a);
        let n = (w * w + v.norm_squared()).sqrt();
        UnitQuaternion { w: w / n, v: v / n }
    }
}

impl std::ops::Mul for UnitQuaternion {
    type Output = UnitQuaternion;

    fn mul(self, rhs: UnitQuaternion) -> UnitQuaternion {
        self.multiply(&rhs)
    }
}

impl std::fmt::Display for UnitQuaternion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "({:.6}, {:.6}, {:.6}, {:.6})",
            self.w, self.v.x, self.v.y, self.v.z
        )
    }
}

/// Orientation difference `d(q1 * conj(q2)) = 2 * Im[log(q1 * conj(q2))]`.
///
/// Its norm is the geodesic rotation angle between `q1` and `q2`, in
/// `[0, 2*pi)`. Fails near the removed point (a relative rotation of 2*pi).
pub fn quat_diff(q1: &UnitQuaternion, q2: &UnitQuaternion) -> Result<OrientationDiff, DomainError> {
    quat_diff_guarded(q1, q2, EPS_POLE_DEFAULT)
}

pub fn quat_diff_guarded(
    q1: &UnitQuaternion,
    q2: &UnitQuaternion,
    eps_pole: f64,
) -> Result<OrientationDiff, DomainError> {
    let rel = q1.multiply(&q2.conjugate());
    Ok(OrientationDiff(rel.log_map_guarded(eps_pole)? * 2.0))
}

/// Advances an orientation by one step of the world-frame angular velocity
/// `omega`: `exp_map(dt * omega / 2) * q`. Continuous across the `w = 0`
/// equator; never flips the sign of `q`.
pub fn integrate_orientation(q: &UnitQuaternion, omega: &Vector3<f64>, dt: f64) -> UnitQuaternion {
    UnitQuaternion::exp_map(&(omega * (0.5 * dt))).multiply(q)
}

/// Orthonormal basis of the hyperplane orthogonal to `pole`, via the
/// Householder reflection that exchanges `pole` with a signed basis vector.
/// Deterministic in `pole`.
fn hyperplane_basis(pole: &Vector4<f64>) -> [Vector4<f64>; 3] {
    let mut j = 0;
    for i in 1..4 {
        if pole[i].abs() > pole[j].abs() {
            j = i;
        }
    }
    let sign = if pole[j] >= 0.0 { 1.0 } else { -1.0 };
    let mut u = *pole;
    u[j] += sign; // |u|^2 = 2 + 2|pole_j|, never degenerate
    let scale = 2.0 / u.norm_squared();
    let mut basis = [Vector4::zeros(); 3];
    let mut k = 0;
    for i in 0..4 {
        if i == j {
            continue;
        }
        let mut col = -u * (scale * u[i]);
        col[i] += 1.0;
        basis[k] = col;
        k += 1;
    }
    basis
}

/// Stereographic projection of `p` on the 3-sphere from `pole`, expressed in
/// an orthonormal basis of the hyperplane orthogonal to the pole:
/// `p -> (p - (p . pole) pole) / (1 - p . pole)`.
///
/// The antipode of the pole maps to the origin; points orthogonal to the
/// pole map to unit-norm images. Fails when `p` is within `eps_pole` of the
/// pole (measured in the embedding space).
pub fn stereographic_project(
    p: &UnitQuaternion,
    pole: &UnitQuaternion,
) -> Result<Vector3<f64>, DomainError> {
    stereographic_project_guarded(p, pole, EPS_POLE_DEFAULT)
}

pub fn stereographic_project_guarded(
    p: &UnitQuaternion,
    pole: &UnitQuaternion,
    eps_pole: f64,
) -> Result<Vector3<f64>, DomainError> {
    let x = p.as_vector4();
    let c = pole.as_vector4();
    let dist = (x - c).norm();
    if dist < eps_pole {
        return Err(DomainError::NearPole {
            dist,
            eps: eps_pole,
        });
    }
    let d = x.dot(&c);
    let image = (x - c * d) / (1.0 - d);
    let basis = hyperplane_basis(&c);
    Ok(Vector3::new(
        image.dot(&basis[0]),
        image.dot(&basis[1]),
        image.dot(&basis[2]),
    ))
}

/// Inverse stereographic projection: recovers the point on the 3-sphere
/// whose projection from `pole` is `y`. The origin maps to the antipode of
/// the pole.
pub fn stereographic_inverse(y: &Vector3<f64>, pole: &UnitQuaternion) -> UnitQuaternion {
    let c = pole.as_vector4();
    let basis = hyperplane_basis(&c);
    let u = basis[0] * y.x + basis[1] * y.y + basis[2] * y.z;
    let r2 = y.norm_squared();
    let x = (c * (r2 - 1.0) + u * 2.0) / (r2 + 1.0);
    UnitQuaternion::new(x[0], x[1], x[2], x[3])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_unit(rng: &mut impl Rng) -> UnitQuaternion {
        loop {
            let c: [f64; 4] = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            if let Some(q) = UnitQuaternion::try_new(c[0], c[1], c[2], c[3]) {
                if c.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
                    return q;
                }
            }
        }
    }

    fn quat_dist(a: &UnitQuaternion, b: &UnitQuaternion) -> f64 {
        (a.as_vector4() - b.as_vector4()).norm()
    }

    #[test]
    fn multiply_identity_is_neutral() {
        let q = UnitQuaternion::new(0.3, -0.4, 0.5, 0.6);
        let r = UnitQuaternion::identity().multiply(&q);
        assert!(quat_dist(&q, &r) < 1e-15);
    }

    #[test]
    fn two_half_turns_compose_to_removed_point() {
        let h = UnitQuaternion::new(0.0, 0.0, 0.0, 1.0);
        let q = h.multiply(&h);
        assert!(quat_dist(&q, &UnitQuaternion::new(-1.0, 0.0, 0.0, 0.0)) < 1e-15);
    }

    #[test]
    fn two_quarter_turns_compose_to_half_turn() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let q = UnitQuaternion::new(s, s, 0.0, 0.0);
        let r = q.multiply(&q);
        assert!(quat_dist(&r, &UnitQuaternion::new(0.0, 1.0, 0.0, 0.0)) < 1e-15);
    }

    #[test]
    fn conjugate_examples() {
        let id = UnitQuaternion::identity();
        assert_eq!(id.conjugate(), id);
        let h = UnitQuaternion::new(0.0, 0.0, 0.0, 1.0);
        assert!(quat_dist(&h.conjugate(), &UnitQuaternion::new(0.0, 0.0, 0.0, -1.0)) < 1e-15);
    }

    #[test]
    fn conjugate_inverts_random_quaternions() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let q = random_unit(&mut rng);
            let prod = q.multiply(&q.conjugate());
            assert!(quat_dist(&prod, &UnitQuaternion::identity()) < 1e-14);
        }
    }

    #[test]
    fn log_map_examples() {
        let id = UnitQuaternion::identity();
        assert_eq!(id.log_map().unwrap(), Vector3::zeros());

        let h = UnitQuaternion::new(0.0, 0.0, 0.0, 1.0);
        let l = h.log_map().unwrap();
        assert_relative_eq!(l.z, PI / 2.0, max_relative = 1e-15);
        assert!(l.x.abs() < 1e-15 && l.y.abs() < 1e-15);

        let removed = UnitQuaternion::new(-1.0, 0.0, 0.0, 0.0);
        assert!(matches!(
            removed.log_map(),
            Err(DomainError::NearRemovedPoint { .. })
        ));
    }

    #[test]
    fn exp_map_examples() {
        assert_eq!(
            UnitQuaternion::exp_map(&Vector3::zeros()),
            UnitQuaternion::identity()
        );
        let q = UnitQuaternion::exp_map(&Vector3::new(0.0, 0.0, PI / 2.0));
        assert!(quat_dist(&q, &UnitQuaternion::new(0.0, 0.0, 0.0, 1.0)) < 1e-15);
    }

    #[test]
    fn exp_log_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let q = random_unit(&mut rng);
            if q.w() <= -1.0 + 1e-6 {
                continue;
            }
            let back = UnitQuaternion::exp_map(&q.log_map().unwrap());
            assert!(quat_dist(&q, &back) < 1e-12, "q={q} back={back}");
        }
    }

    #[test]
    fn quat_diff_same_quaternion_is_zero() {
        let q = UnitQuaternion::new(0.2, 0.3, -0.5, 0.7);
        assert_eq!(quat_diff(&q, &q).unwrap().vector(), Vector3::zeros());
    }

    #[test]
    fn quat_diff_axis_angle_identity_over_full_range() {
        let qg = UnitQuaternion::new(0.9, -0.1, 0.2, 0.3);
        let ez = Vector3::new(0.0, 0.0, 1.0);
        for &theta in &[0.3, 1.0, PI - 0.05, PI + 0.4, 4.5, 5.9, 6.2] {
            let q1 = UnitQuaternion::from_axis_angle(&ez, theta).multiply(&qg);
            let d = quat_diff(&q1, &qg).unwrap();
            assert_relative_eq!(d.vector().z, theta, max_relative = 1e-12);
            assert!(d.vector().x.abs() < 1e-12 && d.vector().y.abs() < 1e-12);
            assert_relative_eq!(d.angle(), theta, max_relative = 1e-12);
        }
    }

    #[test]
    fn quat_diff_at_removed_point_fails() {
        let a = UnitQuaternion::new(-1.0, 0.0, 0.0, 0.0);
        let b = UnitQuaternion::identity();
        assert!(quat_diff(&a, &b).is_err());
    }

    #[test]
    fn integrate_zero_velocity_is_identity_step() {
        let q = UnitQuaternion::new(0.4, 0.3, -0.2, 0.6);
        let r = integrate_orientation(&q, &Vector3::zeros(), 0.01);
        assert!(quat_dist(&q, &r) < 1e-15);
    }

    #[test]
    fn integrate_half_turn_about_z() {
        let q = integrate_orientation(
            &UnitQuaternion::identity(),
            &Vector3::new(0.0, 0.0, PI),
            1.0,
        );
        assert!(quat_dist(&q, &UnitQuaternion::new(0.0, 0.0, 0.0, 1.0)) < 1e-14);
    }

    #[test]
    fn integrate_converges_to_closed_form() {
        let omega = Vector3::new(0.4, -1.1, 0.7);
        let q0 = UnitQuaternion::new(0.5, 0.5, -0.5, 0.5);
        let total = 2.0;
        let exact = UnitQuaternion::exp_map(&(omega * (0.5 * total))).multiply(&q0);
        let mut prev_err = f64::INFINITY;
        for &n in &[40_usize, 400, 4000] {
            let dt = total / n as f64;
            let mut q = q0;
            for _ in 0..n {
                q = integrate_orientation(&q, &omega, dt);
            }
            // constant omega: each step is an exact rotation about a fixed
            // axis, so composition error is rounding-only
            let err = quat_dist(&q, &exact);
            assert!(err <= prev_err + 1e-12);
            prev_err = err;
        }
        assert!(prev_err < 1e-12);
    }

    #[test]
    fn integration_never_flips_sign_across_equator() {
        // half-turn-plus crossing w = 0
        let omega = Vector3::new(0.0, 2.0, 0.0);
        let dt = 1.0 / 250.0;
        let mut q = UnitQuaternion::identity();
        let mut crossed = false;
        let mut prev = q;
        for _ in 0..1000 {
            q = integrate_orientation(&q, &omega, dt);
            assert!(prev.dot(&q) > 0.0, "sign flip between steps");
            if prev.w() > 0.0 && q.w() <= 0.0 {
                crossed = true;
            }
            prev = q;
        }
        assert!(crossed, "path never crossed the equator");
    }

    #[test]
    fn diff_is_continuous_across_equator() {
        let omega = Vector3::new(0.0, 2.0, 0.0);
        let dt = 1.0 / 250.0;
        let q0 = UnitQuaternion::identity();
        let mut q = q0;
        let mut prev_d = quat_diff(&q, &q0).unwrap().vector();
        for _ in 0..700 {
            q = integrate_orientation(&q, &omega, dt);
            let d = quat_diff(&q, &q0).unwrap().vector();
            let jump = (d - prev_d).norm();
            assert!(
                jump < 2.0 * omega.norm() * dt,
                "2*pi wrap detected: jump = {jump}"
            );
            prev_d = d;
            if d.norm() > 2.0 * PI - 0.2 {
                break;
            }
        }
    }

    #[test]
    fn stereographic_antipode_maps_to_origin() {
        let pole = UnitQuaternion::new(-1.0, 0.0, 0.0, 0.0);
        let p = pole.negated();
        let y = stereographic_project(&p, &pole).unwrap();
        assert!(y.norm() < 1e-15);
    }

    #[test]
    fn stereographic_orthogonal_point_has_unit_image() {
        let pole = UnitQuaternion::new(-1.0, 0.0, 0.0, 0.0);
        let p = UnitQuaternion::new(0.0, 0.6, 0.0, 0.8);
        let y = stereographic_project(&p, &pole).unwrap();
        assert_relative_eq!(y.norm(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn stereographic_at_pole_fails() {
        let pole = UnitQuaternion::new(0.5, 0.5, 0.5, 0.5);
        assert!(matches!(
            stereographic_project(&pole, &pole),
            Err(DomainError::NearPole { .. })
        ));
    }

    #[test]
    fn stereographic_round_trip_random_poles() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..2000 {
            let pole = random_unit(&mut rng);
            let p = random_unit(&mut rng);
            if quat_dist(&p, &pole) < 1e-3 {
                continue;
            }
            let y = stereographic_project(&p, &pole).unwrap();
            let back = stereographic_inverse(&y, &pole);
            assert!(quat_dist(&p, &back) < 1e-12);
        }
    }

    #[test]
    fn norm_stays_unit_over_chained_operations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut q = random_unit(&mut rng);
        let omega = Vector3::new(0.3, 0.2, -0.4);
        for i in 0..10_000 {
            if i % 2 == 0 {
                q = q.multiply(&random_unit(&mut rng));
            } else {
                q = integrate_orientation(&q, &omega, 0.004);
            }
            debug_assert!((q.norm() - 1.0).abs() < 1e-9);
        }
        assert!((q.norm() - 1.0).abs() < 1e-9);
    }
}
