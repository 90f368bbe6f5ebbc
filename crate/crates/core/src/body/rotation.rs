use crate::geometry::{Mat3, Vec3};

/// Skew-symmetric cross-product matrix: `skew(a) * b == a.cross(&b)`.
pub fn skew(a: &Vec3) -> Mat3 {
    Mat3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Rodrigues' formula. The zero vector maps to the identity.
pub fn axis_angle_to_matrix(aa: &Vec3) -> Mat3 {
    let angle = aa.norm();
    if angle < 1e-12 {
        return Mat3::identity() + skew(aa);
    }
    let k = skew(&(aa / angle));
    Mat3::identity() + angle.sin() * k + (1.0 - angle.cos()) * (k * k)
}

/// Rotation about +z by `yaw` radians.
pub fn yaw_matrix(yaw: f64) -> Mat3 {
    let (s, c) = yaw.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Derivative of [`yaw_matrix`] with respect to the angle.
pub fn yaw_matrix_derivative(yaw: f64) -> Mat3 {
    let (s, c) = yaw.sin_cos();
    Mat3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0)
}

/// Partial derivatives of `axis_angle_to_matrix(aa)` with respect to each
/// component of `aa`.
pub fn axis_angle_jacobian(aa: &Vec3) -> [Mat3; 3] {
    let theta2 = aa.norm_squared();
    let basis = [Vec3::x(), Vec3::y(), Vec3::z()];
    if theta2 < 1e-8 {
        // Second-order expansion R = I + [v] + [v]^2 / 2.
        let v = skew(aa);
        return basis.map(|e| {
            let ei = skew(&e);
            ei + 0.5 * (ei * v + v * ei)
        });
    }
    let r = axis_angle_to_matrix(aa);
    let v = skew(aa);
    let i_minus_r = Mat3::identity() - r;
    basis.map(|e| {
        let term = aa.dot(&e) * v + skew(&aa.cross(&(i_minus_r * e)));
        term * r / theta2
    })
}

/// Rotation angle between two rotation matrices, in `[0, pi]`.
pub fn geodesic_distance(r1: &Mat3, r2: &Mat3) -> f64 {
    // atan2 keeps full precision near 0 and pi, where acos of the trace
    // loses about half the digits.
    let m = r1.transpose() * r2;
    let c = (m.trace() - 1.0) / 2.0;
    let s = 0.5
        * Vec3::new(
            m[(2, 1)] - m[(1, 2)],
            m[(0, 2)] - m[(2, 0)],
            m[(1, 0)] - m[(0, 1)],
        )
        .norm();
    s.atan2(c)
}

/// Gradient of [`geodesic_distance`] with respect to `r1` (treated as an
/// unconstrained matrix). The cosine is clamped just inside `[-1, 1]` so the
/// result stays finite when the rotations coincide.
pub fn geodesic_distance_grad(r1: &Mat3, r2: &Mat3) -> Mat3 {
    const LIMIT: f64 = 1.0 - 1e-7;
    let c = ((r1.transpose() * r2).trace() - 1.0) / 2.0;
    if c.abs() >= LIMIT {
        return Mat3::zeros();
    }
    // d trace(r1^T r2) / d r1 = r2
    let dacos = -1.0 / (1.0 - c * c).sqrt();
    r2 * (0.5 * dacos)
}

/// Inverse of Rodrigues' formula with the angle in `[0, pi]`.
pub fn matrix_to_axis_angle(r: &Mat3) -> Vec3 {
    let q = nalgebra::UnitQuaternion::from_matrix(r);
    q.scaled_axis()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn aa_strategy() -> impl Strategy<Value = Vec3> {
        (-2.5..2.5f64, -2.5..2.5f64, -2.5..2.5f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    #[test]
    fn zero_vector_is_identity() {
        assert_eq!(axis_angle_to_matrix(&Vec3::zeros()), Mat3::identity());
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = axis_angle_to_matrix(&Vec3::new(0.0, 0.0, FRAC_PI_2));
        assert_relative_eq!(r * Vec3::x(), Vec3::y(), epsilon = 1e-12);
        assert_relative_eq!(r, yaw_matrix(FRAC_PI_2), epsilon = 1e-12);
    }

    #[test]
    fn geodesic_of_quarter_turn() {
        let r = axis_angle_to_matrix(&Vec3::new(0.0, 0.0, FRAC_PI_2));
        assert_eq!(geodesic_distance(&Mat3::identity(), &Mat3::identity()), 0.0);
        assert_relative_eq!(
            geodesic_distance(&Mat3::identity(), &r),
            FRAC_PI_2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn half_turn_geodesic_is_pi() {
        let r = axis_angle_to_matrix(&Vec3::new(PI, 0.0, 0.0));
        assert_relative_eq!(geodesic_distance(&Mat3::identity(), &r), PI, epsilon = 1e-6);
    }

    fn fd_jacobian(aa: &Vec3, k: usize) -> Mat3 {
        let eps = 1e-6;
        let mut p = *aa;
        let mut m = *aa;
        p[k] += eps;
        m[k] -= eps;
        (axis_angle_to_matrix(&p) - axis_angle_to_matrix(&m)) / (2.0 * eps)
    }

    #[test]
    fn jacobian_near_zero_matches_finite_differences() {
        let aa = Vec3::new(3e-5, -2e-5, 1e-5);
        let jac = axis_angle_jacobian(&aa);
        for k in 0..3 {
            assert_relative_eq!(jac[k], fd_jacobian(&aa, k), epsilon = 1e-8);
        }
    }

    #[test]
    fn yaw_derivative_matches_finite_differences() {
        let y = 0.7;
        let fd = (yaw_matrix(y + 1e-6) - yaw_matrix(y - 1e-6)) / 2e-6;
        assert_relative_eq!(yaw_matrix_derivative(y), fd, epsilon = 1e-8);
    }

    proptest! {
        #[test]
        fn rodrigues_is_a_rotation(aa in aa_strategy()) {
            let r = axis_angle_to_matrix(&aa);
            prop_assert!((r * r.transpose() - Mat3::identity()).norm() < 1e-10);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn geodesic_matches_quaternion_angle(a in aa_strategy(), b in aa_strategy()) {
            let ra = axis_angle_to_matrix(&a);
            let rb = axis_angle_to_matrix(&b);
            let qa = nalgebra::UnitQuaternion::from_scaled_axis(a);
            let qb = nalgebra::UnitQuaternion::from_scaled_axis(b);
            let oracle = qa.angle_to(&qb);
            prop_assert!((geodesic_distance(&ra, &rb) - oracle).abs() < 1e-8);
        }

        #[test]
        fn geodesic_is_symmetric_and_zero_on_diagonal(a in aa_strategy(), b in aa_strategy()) {
            let ra = axis_angle_to_matrix(&a);
            let rb = axis_angle_to_matrix(&b);
            prop_assert!((geodesic_distance(&ra, &rb) - geodesic_distance(&rb, &ra)).abs() < 1e-12);
            prop_assert!(geodesic_distance(&ra, &ra) < 1e-7);
        }

        #[test]
        fn jacobian_matches_finite_differences(aa in aa_strategy()) {
            let jac = axis_angle_jacobian(&aa);
            for k in 0..3 {
                prop_assert!((jac[k] - fd_jacobian(&aa, k)).norm() < 1e-7);
            }
        }

        #[test]
        fn axis_angle_round_trip(aa in aa_strategy()) {
            let back = matrix_to_axis_angle(&axis_angle_to_matrix(&aa));
            prop_assert!((axis_angle_to_matrix(&back) - axis_angle_to_matrix(&aa)).norm() < 1e-10);
        }

        #[test]
        fn geodesic_gradient_matches_finite_differences(a in aa_strategy(), b in aa_strategy()) {
            let ra = axis_angle_to_matrix(&a);
            let rb = axis_angle_to_matrix(&b);
            let d = geodesic_distance(&ra, &rb);
            prop_assume!(d > 0.05 && d < PI - 0.05);
            let g = geodesic_distance_grad(&ra, &rb);
            let eps = 1e-6;
            for i in 0..3 {
                for j in 0..3 {
                    let mut p = ra;
                    let mut m = ra;
                    p[(i, j)] += eps;
                    m[(i, j)] -= eps;
                    let c = |r: &Mat3| (((r.transpose() * rb).trace() - 1.0) / 2.0).acos();
                    let fd = (c(&p) - c(&m)) / (2.0 * eps);
                    prop_assert!((g[(i, j)] - fd).abs() < 1e-5);
                }
            }
        }
    }
}
