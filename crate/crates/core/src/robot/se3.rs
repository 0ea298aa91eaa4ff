//! Exponential and logarithm maps on SE(3).
//!
//! Twists are ordered `[rho (translation), omega (rotation)]`.

use nalgebra::{Matrix3, Quaternion, Translation3, UnitQuaternion, Vector3, Vector6};

use crate::geometry::Pose;

/// Below this rotation angle the closed-form coefficients switch to Taylor series.
const SMALL_ANGLE: f64 = 1e-6;

fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Rotation vector of a unit quaternion.
///
/// Uses `theta = 2 atan2(|v|, w)` on the hemisphere `w >= 0`, which stays
/// well conditioned as the angle approaches pi (where `w -> 0`).
pub fn so3_log(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let mut w = q.w;
    let mut xyz = q.imag();
    if w < 0.0 {
        w = -w;
        xyz = -xyz;
    }
    let s = xyz.norm();
    if s < 1e-12 {
        // sin(theta/2) ~ theta/2
        return xyz * 2.0;
    }
    let theta = 2.0 * s.atan2(w);
    xyz * (theta / s)
}

pub fn so3_exp(omega: &Vector3<f64>) -> UnitQuaternion<f64> {
    let theta = omega.norm();
    let half = 0.5 * theta;
    let k = if theta < SMALL_ANGLE {
        0.5 - theta * theta / 48.0
    } else {
        half.sin() / theta
    };
    UnitQuaternion::new_unchecked(Quaternion::from_parts(half.cos(), omega * k))
}

/// Left Jacobian `V` mapping `rho` to the translation of `exp(rho, omega)`.
fn left_jacobian(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let theta = theta2.sqrt();
    let w = hat(omega);
    let (b, c) = if theta < SMALL_ANGLE {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        (
            (1.0 - theta.cos()) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    Matrix3::identity() + w * b + w * w * c
}

fn left_jacobian_inverse(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let theta = theta2.sqrt();
    let w = hat(omega);
    let c = if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        (1.0 - theta * theta.sin() / (2.0 * (1.0 - theta.cos()))) / theta2
    };
    Matrix3::identity() - w * 0.5 + w * w * c
}

pub fn se3_exp(twist: &Vector6<f64>) -> Pose {
    let rho = twist.fixed_rows::<3>(0).into_owned();
    let omega = twist.fixed_rows::<3>(3).into_owned();
    let t = left_jacobian(&omega) * rho;
    Pose::from_parts(Translation3::from(t), so3_exp(&omega))
}

/// Matrix logarithm of a rigid transform as a 6-vector `[rho, omega]`.
pub fn se3_log(pose: &Pose) -> Vector6<f64> {
    let omega = so3_log(&pose.rotation);
    let rho = left_jacobian_inverse(&omega) * pose.translation.vector;
    Vector6::new(rho.x, rho.y, rho.z, omega.x, omega.y, omega.z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn identity_logs_to_zero() {
        assert_eq!(se3_log(&Pose::identity()), Vector6::zeros());
    }

    #[test]
    fn pure_translation_twist() {
        let pose = Pose::translation(0.1, -0.2, 0.3);
        let xi = se3_log(&pose);
        assert_relative_eq!(xi, Vector6::new(0.1, -0.2, 0.3, 0.0, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn rotation_near_pi_is_stable() {
        for angle in [PI, PI - 1e-10, PI - 1e-6] {
            let axis = Vector3::new(1.0, 2.0, -0.5).normalize();
            let q = UnitQuaternion::from_scaled_axis(axis * angle);
            let w = so3_log(&q);
            assert_relative_eq!(w.norm(), angle, epsilon = 1e-9);
            // Either pole of the antipodal ambiguity is a valid logarithm at pi.
            assert!((w.normalize() - axis).norm() < 1e-6 || (w.normalize() + axis).norm() < 1e-6);
        }
    }

    #[test]
    fn exp_matches_nalgebra_rotation() {
        let w = Vector3::new(0.3, -1.1, 0.4);
        let q = so3_exp(&w);
        let reference = UnitQuaternion::from_scaled_axis(w);
        assert!(q.angle_to(&reference) < 1e-12);
    }

    #[test]
    fn jacobian_inverse_consistent() {
        for w in [Vector3::new(0.0, 0.0, 1e-8), Vector3::new(0.5, -0.4, 2.0), Vector3::new(0.0, 3.0, 0.0)] {
            let prod = left_jacobian(&w) * left_jacobian_inverse(&w);
            assert_relative_eq!(prod, Matrix3::identity(), epsilon = 1e-10);
        }
    }

    proptest! {
        #[test]
        fn log_inverts_exp(
            rho in prop::array::uniform3(-2.0f64..2.0),
            dir in prop::array::uniform3(-1.0f64..1.0),
            angle in 0.0f64..(PI - 0.1),
        ) {
            let d = Vector3::from(dir);
            prop_assume!(d.norm() > 1e-3);
            let omega = d.normalize() * angle;
            let xi = Vector6::new(rho[0], rho[1], rho[2], omega.x, omega.y, omega.z);
            let back = se3_log(&se3_exp(&xi));
            prop_assert!((back - xi).amax() < 1e-8);
        }
    }
}
