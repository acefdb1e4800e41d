//! Planar rotations as unit complex numbers (S¹) and 2×2 matrices (SO(2)).
//!
//! Both share the scalar tangent θ. Planar rotations commute, so every
//! Jacobian block is a scalar and the right and left flavors coincide.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use super::skew1;
use crate::error::{Error, Result};
use crate::lie::{check_dim, impl_manifold_for_group, wrap_angle, Action, Jac, LieGroup, Manifold, Tangent};

const UNIT_TOL: f64 = 1e-9;

/// z = cos θ + i sin θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitComplex {
    pub re: f64,
    pub im: f64,
}

impl UnitComplex {
    pub const IDENTITY: Self = Self { re: 1.0, im: 0.0 };

    /// Euler formula.
    pub fn from_angle(theta: f64) -> Self {
        Self { re: theta.cos(), im: theta.sin() }
    }

    /// Builds from raw parts and renormalizes.
    pub fn new_normalize(re: f64, im: f64) -> Self {
        let n = re.hypot(im);
        Self { re: re / n, im: im / n }
    }

    /// θ ∈ (−π, π].
    pub fn angle(&self) -> f64 {
        wrap_angle(self.im.atan2(self.re))
    }

    /// Like [`angle`](Self::angle) but rejects inputs off the unit circle.
    pub fn angle_strict(&self) -> Result<f64> {
        let n = self.re.hypot(self.im);
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::NotOnManifold(format!("|z| = {n}")));
        }
        Ok(self.angle())
    }

    pub fn conjugate(&self) -> Self {
        Self { re: self.re, im: -self.im }
    }

    pub fn mul(&self, o: &Self) -> Self {
        Self::new_normalize(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }

    pub fn rotate(&self, v: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(self.re * v.x - self.im * v.y, self.im * v.x + self.re * v.y)
    }

    pub fn to_rot2(&self) -> Rot2 {
        Rot2::from_cos_sin(self.re, self.im)
    }
}

/// 2×2 rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rot2 {
    m: Matrix2<f64>,
}

impl Rot2 {
    pub fn identity() -> Self {
        Self { m: Matrix2::identity() }
    }

    /// `Exp(θ)`.
    pub fn from_angle(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::from_cos_sin(c, s)
    }

    fn from_cos_sin(c: f64, s: f64) -> Self {
        Self { m: Matrix2::new(c, -s, s, c) }
    }

    /// Projects an arbitrary 2×2 matrix onto SO(2) using its rotational part.
    pub fn from_matrix(m: &Matrix2<f64>) -> Self {
        let c = 0.5 * (m[(0, 0)] + m[(1, 1)]);
        let s = 0.5 * (m[(1, 0)] - m[(0, 1)]);
        let n = c.hypot(s);
        Self::from_cos_sin(c / n, s / n)
    }

    pub fn matrix(&self) -> &Matrix2<f64> {
        &self.m
    }

    /// `Log(R) = atan2(r₂₁, r₁₁)` in (−π, π].
    pub fn angle(&self) -> f64 {
        wrap_angle(self.m[(1, 0)].atan2(self.m[(0, 0)]))
    }

    pub fn transpose(&self) -> Self {
        Self { m: self.m.transpose() }
    }

    /// Product, renormalized so long chains stay on the manifold.
    pub fn mul(&self, o: &Self) -> Self {
        Self::from_matrix(&(self.m * o.m))
    }

    pub fn rotate(&self, v: &Vector2<f64>) -> Vector2<f64> {
        self.m * v
    }

    /// ∂(R·v)/∂R = R [1]× v.
    pub fn jac_act_rot(&self, v: &Vector2<f64>) -> Vector2<f64> {
        self.m * skew1() * v
    }

    /// ∂(R·v)/∂v = R.
    pub fn jac_act_vec(&self) -> Matrix2<f64> {
        self.m
    }

    pub fn to_unit_complex(&self) -> UnitComplex {
        UnitComplex::new_normalize(self.m[(0, 0)], self.m[(1, 0)])
    }
}

/// The scalar Jacobian blocks shared by S¹ and SO(2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rot2Blocks {
    pub adj: f64,
    pub inverse: f64,
    pub compose_lhs: f64,
    pub compose_rhs: f64,
    pub jr: f64,
    pub jl: f64,
    pub rplus_x: f64,
    pub rplus_tau: f64,
    pub rminus_lhs: f64,
    pub rminus_rhs: f64,
}

/// Every elementary block of a planar rotation is a constant.
pub fn jac_blocks_rot2() -> Rot2Blocks {
    Rot2Blocks {
        adj: 1.0,
        inverse: -1.0,
        compose_lhs: 1.0,
        compose_rhs: 1.0,
        jr: 1.0,
        jl: 1.0,
        rplus_x: 1.0,
        rplus_tau: 1.0,
        rminus_lhs: 1.0,
        rminus_rhs: -1.0,
    }
}

fn scalar(v: f64) -> Jac {
    DMatrix::from_element(1, 1, v)
}

fn theta_of(tau: &Tangent) -> Result<f64> {
    check_dim(1, tau.len())?;
    Ok(tau[0])
}

fn point2(p: &DVector<f64>) -> Result<Vector2<f64>> {
    check_dim(2, p.len())?;
    Ok(Vector2::new(p[0], p[1]))
}

macro_rules! planar_rotation_group {
    ($t:ty, $name:literal) => {
        impl LieGroup for $t {
            const NAME: &'static str = $name;

            fn identity_like(&self) -> Self {
                <$t>::from_angle(0.0)
            }
            fn inverse(&self) -> Self {
                self.conjugate_impl()
            }
            fn compose(&self, other: &Self) -> Self {
                self.mul(other)
            }
            fn exp(tau: &Tangent) -> Result<Self> {
                Ok(<$t>::from_angle(theta_of(tau)?))
            }
            fn log(&self) -> Tangent {
                DVector::from_element(1, self.angle())
            }
            fn adj(&self) -> Jac {
                scalar(jac_blocks_rot2().adj)
            }
            fn jr(tau: &Tangent) -> Result<Jac> {
                theta_of(tau)?;
                Ok(scalar(1.0))
            }
            fn jl(tau: &Tangent) -> Result<Jac> {
                Self::jr(tau)
            }
            fn jr_inv(tau: &Tangent) -> Result<Jac> {
                Self::jr(tau)
            }
            fn jl_inv(tau: &Tangent) -> Result<Jac> {
                Self::jr(tau)
            }
            fn is_valid(&self, tol: f64) -> bool {
                self.validity_error() < tol
            }
            fn jac_inverse(&self) -> Jac {
                scalar(jac_blocks_rot2().inverse)
            }
            fn jac_compose_lhs(&self, _other: &Self) -> Jac {
                scalar(jac_blocks_rot2().compose_lhs)
            }
            fn jac_rplus_x(&self, tau: &Tangent) -> Result<Jac> {
                theta_of(tau)?;
                Ok(scalar(jac_blocks_rot2().rplus_x))
            }
            fn jac_rminus_lhs(&self, x: &Self) -> Result<Jac> {
                check_dim(1, x.dof())?;
                Ok(scalar(jac_blocks_rot2().rminus_lhs))
            }
            fn jac_rminus_rhs(&self, x: &Self) -> Result<Jac> {
                check_dim(1, x.dof())?;
                Ok(scalar(jac_blocks_rot2().rminus_rhs))
            }
        }

        impl Action for $t {
            fn point_dim(&self) -> usize {
                2
            }
            fn act(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
                let v = self.rotate(&point2(p)?);
                Ok(DVector::from_column_slice(v.as_slice()))
            }
            fn jac_act_x(&self, p: &DVector<f64>) -> Result<Jac> {
                let j = self.to_rot2_impl().jac_act_rot(&point2(p)?);
                Ok(DMatrix::from_column_slice(2, 1, j.as_slice()))
            }
            fn jac_act_p(&self, p: &DVector<f64>) -> Result<Jac> {
                point2(p)?;
                let m = self.to_rot2_impl().jac_act_vec();
                Ok(DMatrix::from_column_slice(2, 2, m.as_slice()))
            }
        }
    };
}

impl UnitComplex {
    fn conjugate_impl(&self) -> Self {
        self.conjugate()
    }
    fn to_rot2_impl(&self) -> Rot2 {
        self.to_rot2()
    }
    fn validity_error(&self) -> f64 {
        (self.re.hypot(self.im) - 1.0).abs()
    }
}

impl Rot2 {
    fn conjugate_impl(&self) -> Self {
        self.transpose()
    }
    fn to_rot2_impl(&self) -> Rot2 {
        *self
    }
    fn validity_error(&self) -> f64 {
        let ortho = (self.m.transpose() * self.m - Matrix2::identity()).abs().max();
        ortho.max((self.m.determinant() - 1.0).abs())
    }
}

planar_rotation_group!(UnitComplex, "S1");
planar_rotation_group!(Rot2, "SO(2)");
impl_manifold_for_group!(UnitComplex, |_s| 1);
impl_manifold_for_group!(Rot2, |_s| 1);
