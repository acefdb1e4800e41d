//! Planar rigid motions SE(2), tangent ordered as τ = (ρ₁, ρ₂, θ).

use nalgebra::{DVector, Matrix2, Matrix3, Vector2, Vector3};

use super::rot2::Rot2;
use super::rot3::one_minus_cos;
use super::skew1;
use crate::error::Result;
use crate::lie::{impl_manifold_for_group, to_dmat, to_dvec, to_svec, Action, Jac, LieGroup, Tangent};

/// Below this |θ| V(θ) and the Jacobians use their Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-4;

/// Tangent vector of SE(2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist2 {
    pub rho: Vector2<f64>,
    pub theta: f64,
}

impl Twist2 {
    pub fn new(rho1: f64, rho2: f64, theta: f64) -> Self {
        Self { rho: Vector2::new(rho1, rho2), theta }
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.rho.x, self.rho.y, self.theta)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }
}

/// sin θ/θ and (1 − cos θ)/θ.
fn v_coeffs(t: f64) -> (f64, f64) {
    if t.abs() < SMALL_ANGLE {
        let t2 = t * t;
        (1.0 - t2 / 6.0, t / 2.0 - t * t2 / 24.0)
    } else {
        (t.sin() / t, one_minus_cos(t) / t)
    }
}

/// (θ − sin θ)/θ² and (1 − cos θ)/θ², the coefficients of the Jacobians' third column.
fn w_coeffs(t: f64) -> (f64, f64) {
    if t.abs() < SMALL_ANGLE {
        let t2 = t * t;
        (t / 6.0 - t * t2 / 120.0, 0.5 - t2 / 24.0)
    } else {
        let t2 = t * t;
        ((t - t.sin()) / t2, one_minus_cos(t) / t2)
    }
}

/// V(θ) = (sin θ/θ) I + ((1 − cos θ)/θ) [1]×.
pub fn v_matrix(theta: f64) -> Matrix2<f64> {
    let (a, b) = v_coeffs(theta);
    Matrix2::new(a, -b, b, a)
}

/// Closed-form inverse of [`v_matrix`].
pub fn v_matrix_inv(theta: f64) -> Matrix2<f64> {
    let (a, b) = v_coeffs(theta);
    let d = a * a + b * b;
    Matrix2::new(a, b, -b, a) / d
}

/// Inverse of a Jacobian of the shape [[A, w], [0, 1]] with A = [[a, b], [−b, a]].
fn inverse_of_planar_jac(j: &Matrix3<f64>) -> Matrix3<f64> {
    let (a, b) = (j[(0, 0)], j[(0, 1)]);
    let d = a * a + b * b;
    let a_inv = Matrix2::new(a, -b, b, a) / d;
    let w = Vector2::new(j[(0, 2)], j[(1, 2)]);
    let c = -a_inv * w;
    Matrix3::new(a_inv[(0, 0)], a_inv[(0, 1)], c.x, a_inv[(1, 0)], a_inv[(1, 1)], c.y, 0.0, 0.0, 1.0)
}

pub fn jr_se2(tau: &Twist2) -> Matrix3<f64> {
    let (a, b) = v_coeffs(tau.theta);
    let (p, q) = w_coeffs(tau.theta);
    let (r1, r2) = (tau.rho.x, tau.rho.y);
    Matrix3::new(a, b, r1 * p - r2 * q, -b, a, r1 * q + r2 * p, 0.0, 0.0, 1.0)
}

pub fn jl_se2(tau: &Twist2) -> Matrix3<f64> {
    let (a, b) = v_coeffs(tau.theta);
    let (p, q) = w_coeffs(tau.theta);
    let (r1, r2) = (tau.rho.x, tau.rho.y);
    Matrix3::new(a, -b, r1 * p + r2 * q, b, a, -r1 * q + r2 * p, 0.0, 0.0, 1.0)
}

pub fn jr_inv_se2(tau: &Twist2) -> Matrix3<f64> {
    inverse_of_planar_jac(&jr_se2(tau))
}

pub fn jl_inv_se2(tau: &Twist2) -> Matrix3<f64> {
    inverse_of_planar_jac(&jl_se2(tau))
}

/// M = (R, t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2 {
    pub rot: Rot2,
    pub t: Vector2<f64>,
}

impl Pose2 {
    pub fn identity() -> Self {
        Self { rot: Rot2::identity(), t: Vector2::zeros() }
    }

    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { rot: Rot2::from_angle(theta), t: Vector2::new(x, y) }
    }

    pub fn from_parts(rot: Rot2, t: Vector2<f64>) -> Self {
        Self { rot, t }
    }

    pub fn x(&self) -> f64 {
        self.t.x
    }

    pub fn y(&self) -> f64 {
        self.t.y
    }

    pub fn angle(&self) -> f64 {
        self.rot.angle()
    }

    /// Homogeneous 3×3 matrix.
    pub fn matrix(&self) -> Matrix3<f64> {
        let r = self.rot.matrix();
        Matrix3::new(r[(0, 0)], r[(0, 1)], self.t.x, r[(1, 0)], r[(1, 1)], self.t.y, 0.0, 0.0, 1.0)
    }

    pub fn from_twist(tau: &Twist2) -> Self {
        Self { rot: Rot2::from_angle(tau.theta), t: v_matrix(tau.theta) * tau.rho }
    }

    pub fn to_twist(&self) -> Twist2 {
        let theta = self.rot.angle();
        Twist2 { rho: v_matrix_inv(theta) * self.t, theta }
    }

    pub fn inv(&self) -> Self {
        let rt = self.rot.transpose();
        Self { rot: rt, t: -(rt.rotate(&self.t)) }
    }

    pub fn mul(&self, o: &Self) -> Self {
        Self { rot: self.rot.mul(&o.rot), t: self.t + self.rot.rotate(&o.t) }
    }

    /// M·p = t + R p.
    pub fn transform(&self, p: &Vector2<f64>) -> Vector2<f64> {
        self.t + self.rot.rotate(p)
    }

    /// Ad = [[R, −[1]× t], [0, 1]].
    pub fn adjoint(&self) -> Matrix3<f64> {
        let r = self.rot.matrix();
        let c = -skew1() * self.t;
        Matrix3::new(r[(0, 0)], r[(0, 1)], c.x, r[(1, 0)], r[(1, 1)], c.y, 0.0, 0.0, 1.0)
    }

    /// ∂(Ma∘Mb)/∂Ma = [[R_bᵀ, R_bᵀ [1]× t_b], [0, 1]], with `other` as Mb.
    pub fn jac_compose_lhs_closed(other: &Self) -> Matrix3<f64> {
        let rt = other.rot.transpose();
        let c = rt.rotate(&(skew1() * other.t));
        let m = rt.matrix();
        Matrix3::new(m[(0, 0)], m[(0, 1)], c.x, m[(1, 0)], m[(1, 1)], c.y, 0.0, 0.0, 1.0)
    }

    /// ∂(M·p)/∂M = [R, R [1]× p].
    pub fn jac_transform_pose(&self, p: &Vector2<f64>) -> nalgebra::Matrix2x3<f64> {
        let r = self.rot.matrix();
        let c = r * skew1() * p;
        nalgebra::Matrix2x3::new(r[(0, 0)], r[(0, 1)], c.x, r[(1, 0)], r[(1, 1)], c.y)
    }
}

impl LieGroup for Pose2 {
    const NAME: &'static str = "SE(2)";

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
        Ok(Self::from_twist(&Twist2::from_vector(&to_svec::<3>(tau)?)))
    }
    fn log(&self) -> Tangent {
        to_dvec(&self.to_twist().to_vector())
    }
    fn adj(&self) -> Jac {
        to_dmat(&self.adjoint())
    }
    fn jr(tau: &Tangent) -> Result<Jac> {
        Ok(to_dmat(&jr_se2(&Twist2::from_vector(&to_svec::<3>(tau)?))))
    }
    fn jl(tau: &Tangent) -> Result<Jac> {
        Ok(to_dmat(&jl_se2(&Twist2::from_vector(&to_svec::<3>(tau)?))))
    }
    fn jr_inv(tau: &Tangent) -> Result<Jac> {
        Ok(to_dmat(&jr_inv_se2(&Twist2::from_vector(&to_svec::<3>(tau)?))))
    }
    fn jl_inv(tau: &Tangent) -> Result<Jac> {
        Ok(to_dmat(&jl_inv_se2(&Twist2::from_vector(&to_svec::<3>(tau)?))))
    }
    fn is_valid(&self, tol: f64) -> bool {
        self.rot.is_valid(tol) && self.t.iter().all(|v| v.is_finite())
    }
    fn adj_inv(&self) -> Jac {
        to_dmat(&self.inv().adjoint())
    }
    fn jac_compose_lhs(&self, other: &Self) -> Jac {
        to_dmat(&Self::jac_compose_lhs_closed(other))
    }
}

impl Action for Pose2 {
    fn point_dim(&self) -> usize {
        2
    }
    fn act(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(to_dvec(&self.transform(&to_svec::<2>(p)?)))
    }
    fn jac_act_x(&self, p: &DVector<f64>) -> Result<Jac> {
        Ok(to_dmat(&self.jac_transform_pose(&to_svec::<2>(p)?)))
    }
    fn jac_act_p(&self, p: &DVector<f64>) -> Result<Jac> {
        to_svec::<2>(p)?;
        Ok(to_dmat(self.rot.matrix()))
    }
}

impl_manifold_for_group!(Pose2, |_s| 3);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::Manifold;
    use crate::lie::{jac_numeric, jac_numeric_sided, max_rel_error, Side, FD_EPS};
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn expm_series(a: &Matrix3<f64>, terms: usize) -> Matrix3<f64> {
        let mut sum = Matrix3::identity();
        let mut term = Matrix3::identity();
        for k in 1..terms {
            term = term * a / k as f64;
            sum += term;
        }
        sum
    }

    fn hat(t: &Twist2) -> Matrix3<f64> {
        Matrix3::new(0.0, -t.theta, t.rho.x, t.theta, 0.0, t.rho.y, 0.0, 0.0, 0.0)
    }

    fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
        Vector3::new(m[(0, 2)], m[(1, 2)], m[(1, 0)])
    }

    #[test]
    fn compose_and_inverse() {
        let e = Pose2::identity();
        assert_eq!(e.inv(), e);
        let m = Pose2::new(0.4, -1.0, 2.2);
        assert_relative_eq!(m.mul(&m.inv()).matrix(), Matrix3::identity(), epsilon = 1e-14);
        let a = Pose2::new(1.0, 0.0, 0.0);
        let b = Pose2::new(0.0, 1.0, FRAC_PI_2);
        let c = a.mul(&b);
        assert_relative_eq!(c.matrix(), a.matrix() * b.matrix(), epsilon = 1e-15);
        assert_relative_eq!(c.t, Vector2::new(1.0, 1.0), epsilon = 1e-15);
        assert_relative_eq!(c.angle(), FRAC_PI_2, epsilon = 1e-15);
    }

    #[test]
    fn exp_known_values() {
        let m = Pose2::from_twist(&Twist2::new(0.3, -0.2, 0.0));
        assert_eq!(m.t, Vector2::new(0.3, -0.2));
        let m = Pose2::from_twist(&Twist2::new(FRAC_PI_2, 0.0, FRAC_PI_2));
        assert_relative_eq!(m.t, Vector2::new(1.0, 1.0), epsilon = 1e-15);
        let tau = Twist2::new(FRAC_PI_2, 0.0, FRAC_PI_2);
        assert_relative_eq!(expm_series(&hat(&tau), 30), m.matrix(), epsilon = 1e-12);
    }

    #[test]
    fn exp_matches_matrix_exponential() {
        for tau in [Twist2::new(1.0, -2.0, 2.9), Twist2::new(-0.5, 0.1, -1.3), Twist2::new(0.2, 0.7, 3e-5)] {
            assert_relative_eq!(Pose2::from_twist(&tau).matrix(), expm_series(&hat(&tau), 40), epsilon = 1e-9);
            let back = Pose2::from_twist(&tau).to_twist();
            assert_relative_eq!(back.to_vector(), tau.to_vector(), epsilon = 1e-12);
        }
    }

    #[test]
    fn adjoint_matches_hat_vee() {
        assert_eq!(Pose2::identity().adjoint(), Matrix3::identity());
        let m = Pose2::new(0.0, 0.0, 0.7);
        let r = m.rot.matrix();
        let expected = Matrix3::new(r[(0, 0)], r[(0, 1)], 0.0, r[(1, 0)], r[(1, 1)], 0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(m.adjoint(), expected);
        let m = Pose2::new(1.5, -0.3, -2.0);
        let tau = Twist2::new(0.2, 0.9, -0.4);
        let lhs = m.adjoint() * tau.to_vector();
        let rhs = vee(&(m.matrix() * hat(&tau) * m.inv().matrix()));
        assert_relative_eq!(lhs, rhs, epsilon = 1e-14);
    }

    #[test]
    fn compose_rhs_is_identity_and_blocks_match_numeric() {
        let a = Pose2::new(0.3, 1.2, -0.8);
        let b = Pose2::new(-1.0, 0.4, 2.5);
        let num_rhs = jac_numeric(|x: &Pose2| a.mul(x), &b, FD_EPS).unwrap();
        assert!(max_rel_error(&a.jac_compose_rhs(&b), &num_rhs, 1e-9) < 1e-7);
        let num_lhs = jac_numeric(|x: &Pose2| x.mul(&b), &a, FD_EPS).unwrap();
        assert!(max_rel_error(&a.jac_compose_lhs(&b), &num_lhs, 1e-9) < 1e-7);
    }

    #[test]
    fn jacobians_match_left_and_right_numeric() {
        assert_eq!(jr_se2(&Twist2::zero()), Matrix3::identity());
        let tau = DVector::from_vec(vec![0.7, -1.1, 1.4]);
        let exp = |t: &DVector<f64>| Pose2::exp(t).unwrap();
        let r = jac_numeric(exp, &tau, FD_EPS).unwrap();
        assert!(max_rel_error(&Pose2::jr(&tau).unwrap(), &r, 1e-9) < 1e-7);
        // left Jacobian of Exp: perturb the vector additively, compare with left-minus
        let x = Pose2::exp(&tau).unwrap();
        let mut l = Jac::zeros(3, 3);
        for i in 0..3 {
            let mut d = DVector::zeros(3);
            d[i] = FD_EPS;
            let f = Pose2::exp(&(&tau + &d)).unwrap().lminus(&x).unwrap();
            let b = Pose2::exp(&(&tau - &d)).unwrap().lminus(&x).unwrap();
            l.set_column(i, &((f - b) / (2.0 * FD_EPS)));
        }
        assert!(max_rel_error(&Pose2::jl(&tau).unwrap(), &l, 1e-9) < 1e-7);
        let inv_left = jac_numeric_sided(|m: &Pose2| m.inv(), &x, FD_EPS, Side::Left, Side::Left).unwrap();
        let expected = x.inv().adj() * x.jac_inverse() * x.adj_inv();
        assert!(max_rel_error(&expected, &inv_left, 1e-9) < 1e-7);
    }

    #[test]
    fn taylor_switch_is_continuous() {
        for sign in [-1.0, 1.0] {
            let lo = Twist2::new(0.8, -1.3, sign * SMALL_ANGLE * (1.0 - 1e-9));
            let hi = Twist2::new(0.8, -1.3, sign * SMALL_ANGLE * (1.0 + 1e-9));
            assert!((jr_se2(&lo) - jr_se2(&hi)).abs().max() < 1e-10);
            assert!((jl_se2(&lo) - jl_se2(&hi)).abs().max() < 1e-10);
            assert!((v_matrix(lo.theta) - v_matrix(hi.theta)).abs().max() < 1e-10);
            assert!((v_matrix_inv(lo.theta) - v_matrix_inv(hi.theta)).abs().max() < 1e-10);
        }
    }

    #[test]
    fn inverse_jacobians() {
        let t = Twist2::new(-0.4, 2.0, 2.7);
        assert_relative_eq!(jr_se2(&t) * jr_inv_se2(&t), Matrix3::identity(), epsilon = 1e-12);
        assert_relative_eq!(jl_se2(&t) * jl_inv_se2(&t), Matrix3::identity(), epsilon = 1e-12);
        assert_relative_eq!(v_matrix(t.theta) * v_matrix_inv(t.theta), Matrix2::identity(), epsilon = 1e-14);
    }
}
