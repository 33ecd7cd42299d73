//! Rotation helpers on SO(3) and rigid transforms.
//!
//! Rotations are parameterized by axis-angle vectors `w` (direction = axis,
//! norm = angle in radians). The Jacobians here are with respect to additive
//! updates of that vector, which is what the registration optimizer uses.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

const SMALL_ANGLE: f64 = 1e-4;

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn vee(m: &Mat3) -> Vec3 {
    Vec3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rodrigues formula.
pub fn exp_so3(w: &Vec3) -> Mat3 {
    let theta2 = w.norm_squared();
    let k = skew(w);
    let (a, b) = if theta2 < SMALL_ANGLE * SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Mat3::identity() + k * a + k * k * b
}

/// Inverse of [`exp_so3`], returning an axis-angle vector with norm in `[0, pi]`.
pub fn log_so3(r: &Mat3) -> Vec3 {
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos.acos();
    let antisym = vee(&(r - r.transpose())) * 0.5;
    if theta < SMALL_ANGLE {
        return antisym * (1.0 + theta * theta / 6.0);
    }
    if std::f64::consts::PI - theta > 1e-6 {
        return antisym * (theta / theta.sin());
    }
    // Near pi: recover the axis from the symmetric part, R ~ 2aa^T - I.
    let b = (r + Mat3::identity()) * 0.5;
    let mut col = 0;
    for i in 1..3 {
        if b[(i, i)] > b[(col, col)] {
            col = i;
        }
    }
    let mut axis: Vec3 = b.column(col).into();
    axis /= axis.norm();
    // Resolve the sign with the (small) antisymmetric part when available.
    if axis.dot(&antisym) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Left Jacobian of SO(3): `dR/dw_c * R^T = skew(J_l(w) e_c)`.
pub fn left_jacobian(w: &Vec3) -> Mat3 {
    let theta2 = w.norm_squared();
    let k = skew(w);
    let (a, b) = if theta2 < SMALL_ANGLE * SMALL_ANGLE {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        let theta = theta2.sqrt();
        ((1.0 - theta.cos()) / theta2, (theta - theta.sin()) / (theta2 * theta))
    };
    Mat3::identity() + k * a + k * k * b
}

pub fn right_jacobian(w: &Vec3) -> Mat3 {
    left_jacobian(&(-w))
}

/// Inverse right Jacobian, valid for angles below pi.
pub fn right_jacobian_inv(w: &Vec3) -> Mat3 {
    let theta2 = w.norm_squared();
    let k = skew(w);
    let c = if theta2 < SMALL_ANGLE * SMALL_ANGLE {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        let theta = theta2.sqrt();
        1.0 / theta2 - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    };
    Mat3::identity() + k * 0.5 + k * k * c
}

/// Geodesic angle between two rotations.
pub fn geodesic_angle(a: &Mat3, b: &Mat3) -> f64 {
    log_so3(&(a.transpose() * b)).norm()
}

/// Maps an axis-angle vector to the equivalent one with norm in `[0, pi]`.
pub fn canonical_axis_angle(w: &Vec3) -> Vec3 {
    log_so3(&exp_so3(w))
}

/// Row-major vectorization of a 3x3 matrix.
pub fn vectorize_row_major(m: &Mat3) -> [f64; 9] {
    let mut out = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            out[r * 3 + c] = m[(r, c)];
        }
    }
    out
}

/// A proper rigid motion `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(Mat3::identity(), Vec3::zeros())
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(Mat3::identity(), t)
    }

    pub fn from_axis_angle(w: &Vec3, t: Vec3) -> Self {
        Self::new(exp_so3(w), t)
    }

    pub fn apply_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform::new(self.rotation * other.rotation, self.rotation * other.translation + self.translation)
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform::new(rt, -(rt * self.translation))
    }

    /// Checks `R^T R = I` and `det R = +1` within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        let err = (self.rotation.transpose() * self.rotation - Mat3::identity()).abs().max();
        err <= tol && (self.rotation.determinant() - 1.0).abs() <= tol && self.translation.iter().all(|x| x.is_finite())
    }
}

/// Axis-aligned bounding box diagonal of a point set.
pub fn bbox_diagonal<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> f64 {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    let mut any = false;
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
        any = true;
    }
    if any {
        (hi - lo).norm()
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn arb_axis_angle(max_angle: f64) -> impl Strategy<Value = Vec3> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, 0.0..max_angle).prop_map(|(x, y, z, a)| {
            let v = Vec3::new(x, y, z);
            if v.norm() < 1e-3 {
                Vec3::new(a, 0.0, 0.0)
            } else {
                v.normalize() * a
            }
        })
    }

    #[test]
    fn exp_of_quarter_turn_about_z() {
        let r = exp_so3(&Vec3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2));
        let x = r * Vec3::x();
        assert_relative_eq!(x, Vec3::y(), epsilon = 1e-15);
    }

    #[test]
    fn log_near_pi_recovers_axis() {
        let w = Vec3::new(0.0, 1.0, 0.0) * (std::f64::consts::PI - 1e-9);
        let back = log_so3(&exp_so3(&w));
        assert_relative_eq!(back, w, epsilon = 1e-6);
    }

    #[test]
    fn left_jacobian_matches_finite_differences() {
        let w = Vec3::new(0.3, -0.7, 0.4);
        let r = exp_so3(&w);
        let jl = left_jacobian(&w);
        let h = 1e-6;
        for c in 0..3 {
            let mut dw = Vec3::zeros();
            dw[c] = h;
            let dr = (exp_so3(&(w + dw)) - exp_so3(&(w - dw))) / (2.0 * h);
            let omega = vee(&(dr * r.transpose()));
            assert_relative_eq!(omega, jl.column(c).into_owned(), epsilon = 1e-8);
        }
    }

    #[test]
    fn right_jacobian_inverse_is_inverse() {
        let w = Vec3::new(-1.1, 0.2, 0.9);
        let prod = right_jacobian(&w) * right_jacobian_inv(&w);
        assert_relative_eq!(prod, Mat3::identity(), epsilon = 1e-12);
    }

    #[test]
    fn rigid_inverse_composes_to_identity() {
        let t = RigidTransform::from_axis_angle(&Vec3::new(0.1, 0.2, -0.3), Vec3::new(1.0, 2.0, 3.0));
        let id = t.compose(&t.inverse());
        assert!((id.rotation - Mat3::identity()).abs().max() < 1e-15);
        assert!(id.translation.norm() < 1e-15);
    }

    proptest! {
        #[test]
        fn log_inverts_exp(w in arb_axis_angle(3.1)) {
            let back = log_so3(&exp_so3(&w));
            prop_assert!((back - w).norm() < 1e-9);
        }

        #[test]
        fn exp_is_a_rotation(w in arb_axis_angle(20.0)) {
            let t = RigidTransform::new(exp_so3(&w), Vec3::zeros());
            prop_assert!(t.is_valid(1e-12));
        }
    }
}
