//! Small linear-algebra helpers shared across modules.

use nalgebra::{Matrix3, Rotation3, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation from roll-pitch-yaw (aerospace z-y-x convention), body→inertial.
pub fn rotation_from_euler(roll: f64, pitch: f64, yaw: f64) -> Mat3 {
    *Rotation3::from_euler_angles(roll, pitch, yaw).matrix()
}

/// Roll, pitch, yaw of a body→inertial rotation.
pub fn euler_from_rotation(r: &Mat3) -> (f64, f64, f64) {
    Rotation3::from_matrix_unchecked(*r).euler_angles()
}

/// Rotation vector `log(r)`.
pub fn rotation_log(r: &Mat3) -> Vec3 {
    Rotation3::from_matrix_unchecked(*r).scaled_axis()
}

pub fn rotation_exp(v: &Vec3) -> Mat3 {
    *Rotation3::from_scaled_axis(*v).matrix()
}

/// Projects a nearly-orthonormal matrix back onto SO(3) (one Newton step of
/// the polar decomposition, which is enough for per-step drift).
pub fn reorthonormalize(r: &Mat3) -> Mat3 {
    let mut out = *r;
    for _ in 0..2 {
        let inv_t = match out.try_inverse() {
            Some(inv) => inv.transpose(),
            None => return out,
        };
        out = (out + inv_t) * 0.5;
    }
    out
}

pub fn is_finite3(v: &Vec3) -> bool {
    v.iter().all(|x| x.is_finite())
}

pub fn deg(rad: f64) -> f64 {
    rad.to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn euler_round_trip() {
        let r = rotation_from_euler(0.1, -0.2, 0.3);
        let (a, b, c) = euler_from_rotation(&r);
        assert_relative_eq!(a, 0.1, epsilon = 1e-12);
        assert_relative_eq!(b, -0.2, epsilon = 1e-12);
        assert_relative_eq!(c, 0.3, epsilon = 1e-12);
    }

    #[test]
    fn reorthonormalize_removes_drift() {
        let mut r = rotation_from_euler(0.3, 0.2, -1.0);
        r[(0, 1)] += 1e-6;
        r[(2, 0)] -= 2e-6;
        let fixed = reorthonormalize(&r);
        let err = (fixed.transpose() * fixed - Mat3::identity()).norm();
        assert!(err < 1e-12, "{err}");
        assert_relative_eq!(fixed.determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn log_exp_inverse() {
        let v = Vec3::new(0.2, -0.4, 0.1);
        assert_relative_eq!(rotation_log(&rotation_exp(&v)), v, epsilon = 1e-12);
    }
}
