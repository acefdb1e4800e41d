//! 3D rigid motions SE(3), tangent ordered as τ = (ρ, θ) ∈ ℝ⁶.

use nalgebra::{DVector, Matrix3, Matrix3x6, Matrix4, Matrix6, Vector3, Vector6};

use super::rot3::{jl_inv_so3, jl_so3, one_minus_cos, Rot3};
use super::skew3;
use crate::error::Result;
use crate::lie::{impl_manifold_for_group, to_dmat, to_dvec, to_svec, Action, Jac, LieGroup, Tangent};

/// Below this angle the coefficients of Q(ρ, θ) come from their series.
/// The closed forms lose digits to cancellation well above 1e-4, so the series
/// is carried to θ⁴ and used up to 1e-2.
pub const Q_SERIES_ANGLE: f64 = 1e-2;

/// Tangent vector of SE(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist3 {
    pub rho: Vector3<f64>,
    pub theta: Vector3<f64>,
}

impl Twist3 {
    pub fn new(rho: Vector3<f64>, theta: Vector3<f64>) -> Self {
        Self { rho, theta }
    }

    pub fn zero() -> Self {
        Self::new(Vector3::zeros(), Vector3::zeros())
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.rho.x, self.rho.y, self.rho.z, self.theta.x, self.theta.y, self.theta.z)
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self::new(v.fixed_rows::<3>(0).into(), v.fixed_rows::<3>(3).into())
    }
}

fn q_coeffs_series(t: f64) -> (f64, f64, f64) {
    let t2 = t * t;
    let t4 = t2 * t2;
    (
        1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0,
        1.0 / 24.0 - t2 / 720.0 + t4 / 40320.0,
        1.0 / 120.0 - t2 / 2520.0 + t4 / 120960.0,
    )
}

fn q_coeffs_closed(t: f64) -> (f64, f64, f64) {
    let (s, c) = t.sin_cos();
    let t2 = t * t;
    let t3 = t2 * t;
    (
        (t - s) / t3,
        (t2 - 2.0 * one_minus_cos(t)) / (2.0 * t2 * t2),
        (2.0 * t - 3.0 * s + t * c) / (2.0 * t3 * t2),
    )
}

fn q_coeffs(t: f64) -> (f64, f64, f64) {
    if t < Q_SERIES_ANGLE {
        q_coeffs_series(t)
    } else {
        q_coeffs_closed(t)
    }
}

/// Q(ρ, θ), the upper-right block of the left Jacobian.
pub fn q_matrix(rho: &Vector3<f64>, theta: &Vector3<f64>) -> Matrix3<f64> {
    let (c1, c2, c3) = q_coeffs(theta.norm());
    let p = skew3(rho);
    let w = skew3(theta);
    let wp = w * p;
    let pw = p * w;
    let wpw = wp * w;
    let ww = w * w;
    0.5 * p + c1 * (wp + pw + wpw) + c2 * (ww * p + pw * w - 3.0 * wpw) + c3 * (wpw * w + ww * pw)
}

fn block_upper(a: &Matrix3<f64>, b: &Matrix3<f64>, d: &Matrix3<f64>) -> Matrix6<f64> {
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(a);
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(b);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(d);
    m
}

pub fn jl_se3(tau: &Twist3) -> Matrix6<f64> {
    let j = jl_so3(&tau.theta);
    block_upper(&j, &q_matrix(&tau.rho, &tau.theta), &j)
}

/// Jr(ρ, θ) = Jl(−ρ, −θ).
pub fn jr_se3(tau: &Twist3) -> Matrix6<f64> {
    jl_se3(&Twist3::new(-tau.rho, -tau.theta))
}

pub fn jl_inv_se3(tau: &Twist3) -> Matrix6<f64> {
    let ji = jl_inv_so3(&tau.theta);
    let q = q_matrix(&tau.rho, &tau.theta);
    block_upper(&ji, &(-ji * q * ji), &ji)
}

pub fn jr_inv_se3(tau: &Twist3) -> Matrix6<f64> {
    jl_inv_se3(&Twist3::new(-tau.rho, -tau.theta))
}

/// M = (R, t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose3 {
    pub rot: Rot3,
    pub t: Vector3<f64>,
}

impl Pose3 {
    pub fn identity() -> Self {
        Self { rot: Rot3::identity(), t: Vector3::zeros() }
    }

    pub fn from_parts(rot: Rot3, t: Vector3<f64>) -> Self {
        Self { rot, t }
    }

    /// Homogeneous 4×4 matrix.
    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rot.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.t);
        m
    }

    pub fn from_twist(tau: &Twist3) -> Self {
        Self { rot: Rot3::from_rotation_vector(&tau.theta), t: jl_so3(&tau.theta) * tau.rho }
    }

    pub fn to_twist(&self) -> Twist3 {
        let theta = self.rot.to_rotation_vector();
        Twist3 { rho: jl_inv_so3(&theta) * self.t, theta }
    }

    pub fn inv(&self) -> Self {
        let rt = self.rot.transpose();
        Self { rot: rt, t: -(rt.rotate(&self.t)) }
    }

    pub fn mul(&self, o: &Self) -> Self {
        Self { rot: self.rot.mul(&o.rot), t: self.t + self.rot.rotate(&o.t) }
    }

    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.t + self.rot.rotate(p)
    }

    /// Ad = [[R, [t]× R], [0, R]].
    pub fn adjoint(&self) -> Matrix6<f64> {
        let r = self.rot.matrix();
        block_upper(r, &(skew3(&self.t) * r), r)
    }

    /// ∂(M·p)/∂M = [R, −R [p]×].
    pub fn jac_transform_pose(&self, p: &Vector3<f64>) -> Matrix3x6<f64> {
        let r = self.rot.matrix();
        let mut j = Matrix3x6::zeros();
        j.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
        j.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-r * skew3(p)));
        j
    }
}

impl LieGroup for Pose3 {
    const NAME: &'static str = "SE(3)";

    fn identity_like(&self) -> Self {
        Self::identity()
    }
    fn inverse(&self) -> Self {
        self.inv()
    }
    fn compose(&self, other: &Self) -> Self {
        self.mul(other)
    }
    fn exp(tau: &Tangent) -> Result<Self> {
        Ok(Self::from_twist(&Twist3::from_vector(&to_svec::<6>(tau)?)))
    }
    fn log(&self) -> Tangent {
        to_dvec(&self.to_twist().to_vector())
    }
    fn adj(&self) -> Jac {
        to_dmat(&self.adjoint())
    }
    fn jr(tau: &Tangent) -> Result<Jac> {
        Ok(to_dmat(&jr_se3(&Twist3::from_vector(&to_svec::<6>(tau)?))))
    }
    fn jl(tau: &Tangent) -> Result<Jac> {
        Ok(to_dmat(&jl_se3(&Twist3::from_vector(&to_svec::<6>(tau)?))))
    }
    fn jr_inv(tau: &Tangent) -> Result<Jac> {
        Ok(to_dmat(&jr_inv_se3(&Twist3::from_vector(&to_svec::<6>(tau)?))))
    }
    fn jl_inv(tau: &Tangent) -> Result<Jac> {
        Ok(to_dmat(&jl_inv_se3(&Twist3::from_vector(&to_svec::<6>(tau)?))))
    }
    fn is_valid(&self, tol: f64) -> bool {
        self.rot.is_valid(tol) && self.t.iter().all(|v| v.is_finite())
    }
}

impl Action for Pose3 {
    fn point_dim(&self) -> usize {
        3
    }
    fn act(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(to_dvec(&self.transform(&to_svec::<3>(p)?)))
    }
    fn jac_act_x(&self, p: &DVector<f64>) -> Result<Jac> {
        Ok(to_dmat(&self.jac_transform_pose(&to_svec::<3>(p)?)))
    }
    fn jac_act_p(&self, p: &DVector<f64>) -> Result<Jac> {
        to_svec::<3>(p)?;
        Ok(to_dmat(self.rot.matrix()))
    }
}

impl_manifold_for_group!(Pose3, |_s| 6);
