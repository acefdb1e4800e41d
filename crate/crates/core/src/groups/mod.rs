//! Concrete groups: S¹/SO(2), S³/SO(3), SE(2), SE(3) and the translations ℝⁿ.

pub mod rot2;
pub mod rot3;
pub mod se2;
pub mod se3;
pub mod trans;

use nalgebra::{Matrix2, Matrix3, Vector3};

pub use rot2::{Rot2, UnitComplex};
pub use rot3::{Rot3, UnitQuaternion};
pub use se2::{Pose2, Twist2};
pub use se3::{Pose3, Twist3};
pub use trans::TransN;

/// `[1]×`, the planar cross-product generator.
pub fn skew1() -> Matrix2<f64> {
    Matrix2::new(0.0, -1.0, 1.0, 0.0)
}

/// `[v]×`.
pub fn skew3(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew3`] on skew-symmetric matrices.
pub fn vee3(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}
