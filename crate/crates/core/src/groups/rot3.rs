//! 3D rotations as unit quaternions (S³) and rotation matrices (SO(3)).
//!
//! Both groups share the rotation-vector tangent θ = θu ∈ ℝ³, so their Jacobian
//! blocks are identical; the quaternion adjoint is `R(q)`.

use nalgebra::{DVector, Matrix3, Vector3};

use super::{skew3, vee3};
use crate::error::{Error, Result};
use crate::lie::{impl_manifold_for_group, to_dmat, to_dvec, to_svec, Action, Jac, LieGroup, Tangent};

/// Below this angle the closed forms switch to their Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-4;

/// Strict logarithms reject angles this close to π.
pub const ANTIPODE_TOL: f64 = 1e-9;

/// `Exp(θ)` via the Rodrigues formula.
pub fn exp_so3(theta: &Vector3<f64>) -> Matrix3<f64> {
    let t = theta.norm();
    let k = skew3(theta);
    if t < SMALL_ANGLE {
        let t2 = t * t;
        Matrix3::identity() + (1.0 - t2 / 6.0) * k + (0.5 - t2 / 24.0) * k * k
    } else {
        let u = skew3(&(theta / t));
        Matrix3::identity() + t.sin() * u + one_minus_cos(t) * u * u
    }
}

/// Principal `Log(R)`, |θ| ∈ [0, π].
pub fn log_so3(r: &Matrix3<f64>) -> Vector3<f64> {
    let w = vee3(&(r - r.transpose())); // 2 sinθ u
    let s = 0.5 * w.norm();
    let c = (0.5 * (r.trace() - 1.0)).clamp(-1.0, 1.0);
    let theta = s.atan2(c);
    if theta < SMALL_ANGLE {
        // θ/(2 sinθ) ≈ ½(1 + θ²/6)
        0.5 * (1.0 + theta * theta / 6.0) * w
    } else if c > -0.9 {
        theta / (2.0 * s) * w
    } else {
        // Near π the antisymmetric part vanishes; read the axis off the symmetric part,
        // (R + Rᵀ)/2 − c I = (1 − c) u uᵀ.
        let sym = 0.5 * (r + r.transpose()) - c * Matrix3::identity();
        let (mut k, mut best) = (0, sym[(0, 0)]);
        for i in 1..3 {
            if sym[(i, i)] > best {
                k = i;
                best = sym[(i, i)];
            }
        }
        let mut u: Vector3<f64> = sym.column(k).into();
        u /= u.norm();
        if u.dot(&w) < 0.0 {
            u = -u;
        }
        theta * u
    }
}

/// 1 − cos θ without cancellation.
pub(crate) fn one_minus_cos(t: f64) -> f64 {
    let s = (0.5 * t).sin();
    2.0 * s * s
}

fn angle_and_skew(theta: &Vector3<f64>) -> (f64, Matrix3<f64>) {
    (theta.norm(), skew3(theta))
}

/// (1 − cos θ)/θ² and (θ − sin θ)/θ³.
fn jac_coeffs(t: f64) -> (f64, f64) {
    if t < SMALL_ANGLE {
        let t2 = t * t;
        (0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        let t2 = t * t;
        (one_minus_cos(t) / t2, (t - t.sin()) / (t2 * t))
    }
}

/// 1/θ² − (1 + cos θ)/(2θ sin θ), written with cot(θ/2) to stay finite at π.
fn jac_inv_coeff(t: f64) -> f64 {
    if t < SMALL_ANGLE {
        1.0 / 12.0 + t * t / 720.0
    } else {
        1.0 / (t * t) - 1.0 / (2.0 * t * (0.5 * t).tan())
    }
}

pub fn jr_so3(theta: &Vector3<f64>) -> Matrix3<f64> {
    let (t, k) = angle_and_skew(theta);
    let (a, b) = jac_coeffs(t);
    Matrix3::identity() - a * k + b * k * k
}

pub fn jl_so3(theta: &Vector3<f64>) -> Matrix3<f64> {
    let (t, k) = angle_and_skew(theta);
    let (a, b) = jac_coeffs(t);
    Matrix3::identity() + a * k + b * k * k
}

pub fn jr_inv_so3(theta: &Vector3<f64>) -> Matrix3<f64> {
    let (t, k) = angle_and_skew(theta);
    Matrix3::identity() + 0.5 * k + jac_inv_coeff(t) * k * k
}

pub fn jl_inv_so3(theta: &Vector3<f64>) -> Matrix3<f64> {
    let (t, k) = angle_and_skew(theta);
    Matrix3::identity() - 0.5 * k + jac_inv_coeff(t) * k * k
}

/// Unit quaternion stored as (w, x, y, z).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitQuaternion {
    pub const IDENTITY: Self = Self { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn new_normalize(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        Self { w: w / n, x: x / n, y: y / n, z: z / n }
    }

    /// `Exp(θu) = cos(θ/2) + u sin(θ/2)`.
    pub fn from_rotation_vector(theta: &Vector3<f64>) -> Self {
        let t = theta.norm();
        let (w, k) = if t < SMALL_ANGLE {
            // sin(θ/2)/θ ≈ ½ − θ²/48
            (1.0 - t * t / 8.0, 0.5 - t * t / 48.0)
        } else {
            ((0.5 * t).cos(), (0.5 * t).sin() / t)
        };
        Self::new_normalize(w, k * theta.x, k * theta.y, k * theta.z)
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.vector().norm_squared()).sqrt()
    }

    /// `Log(q) = 2 v atan2(‖v‖, w)/‖v‖`, after flipping q to the w ≥ 0 cover.
    pub fn to_rotation_vector(&self) -> Vector3<f64> {
        let q = if self.w < 0.0 { self.neg() } else { *self };
        let v = q.vector();
        let n = v.norm();
        if n < 0.5 * SMALL_ANGLE {
            // atan2(n, w)/n ≈ (1 − n²/(3w²))/w
            2.0 * v / q.w * (1.0 - n * n / (3.0 * q.w * q.w))
        } else {
            2.0 * v * n.atan2(q.w) / n
        }
    }

    /// Strict logarithm: rejects non-unit quaternions and rotations at the antipode.
    pub fn to_rotation_vector_strict(&self) -> Result<Vector3<f64>> {
        let n = self.norm();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::NotOnManifold(format!("|q| = {n}")));
        }
        let theta = self.to_rotation_vector();
        if std::f64::consts::PI - theta.norm() < ANTIPODE_TOL {
            return Err(Error::NearAntipode { tol: ANTIPODE_TOL });
        }
        Ok(theta)
    }

    pub fn neg(&self) -> Self {
        Self { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn conjugate(&self) -> Self {
        Self { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Hamilton product, renormalized.
    pub fn mul(&self, o: &Self) -> Self {
        Self::new_normalize(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    /// `q x q*` via the double quaternion product.
    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        let p = Self { w: 0.0, x: v.x, y: v.y, z: v.z };
        let q = *self;
        let raw = |a: &Self, b: &Self| Self {
            w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            z: a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        };
        raw(&raw(&q, &p), &q.conjugate()).vector()
    }

    /// The rotation matrix R(q).
    pub fn to_matrix(&self) -> Matrix3<f64> {
        let Self { w, x, y, z } = *self;
        Matrix3::new(
            w * w + x * x - y * y - z * z,
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            w * w - x * x + y * y - z * z,
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            w * w - x * x - y * y + z * z,
        )
    }

    pub fn to_rot3(&self) -> Rot3 {
        Rot3 { m: self.to_matrix() }
    }
}

/// 3×3 rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rot3 {
    m: Matrix3<f64>,
}

impl Rot3 {
    pub fn identity() -> Self {
        Self { m: Matrix3::identity() }
    }

    pub fn from_rotation_vector(theta: &Vector3<f64>) -> Self {
        Self { m: exp_so3(theta) }
    }

    /// Wraps a matrix without checks; see [`LieGroup::is_valid`].
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self { m }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn to_rotation_vector(&self) -> Vector3<f64> {
        log_so3(&self.m)
    }

    /// Rejects rotations within [`ANTIPODE_TOL`] of π, where the axis sign is ambiguous.
    pub fn to_rotation_vector_strict(&self) -> Result<Vector3<f64>> {
        let theta = self.to_rotation_vector();
        if std::f64::consts::PI - theta.norm() < ANTIPODE_TOL {
            return Err(Error::NearAntipode { tol: ANTIPODE_TOL });
        }
        Ok(theta)
    }

    pub fn transpose(&self) -> Self {
        Self { m: self.m.transpose() }
    }

    pub fn mul(&self, o: &Self) -> Self {
        Self { m: self.m * o.m }
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.m * v
    }

    /// Re-orthonormalizes through the quaternion round trip.
    pub fn renormalized(&self) -> Self {
        UnitQuaternion::from_rotation_vector(&self.to_rotation_vector()).to_rot3()
    }

    /// ∂(R·v)/∂R = −R [v]×.
    pub fn jac_act_rot(&self, v: &Vector3<f64>) -> Matrix3<f64> {
        -self.m * skew3(v)
    }

    /// ∂(R·v)/∂v = R.
    pub fn jac_act_vec(&self) -> Matrix3<f64> {
        self.m
    }

    /// ∂(Q∘R)/∂Q = Rᵀ, with `self` playing R.
    pub fn jac_compose_lhs_closed(other: &Self) -> Matrix3<f64> {
        other.m.transpose()
    }

    /// ∂(R⊕θ)/∂R = R(θ)ᵀ.
    pub fn jac_rplus_rot_closed(theta: &Vector3<f64>) -> Matrix3<f64> {
        exp_so3(theta).transpose()
    }
}

trait Rotation3: Copy {
    fn as_matrix(&self) -> Matrix3<f64>;
    fn from_vec(theta: &Vector3<f64>) -> Self;
    fn log_vec(&self) -> Vector3<f64>;
    fn inv(&self) -> Self;
    fn prod(&self, o: &Self) -> Self;
    fn validity_error(&self) -> f64;
}

impl Rotation3 for UnitQuaternion {
    fn as_matrix(&self) -> Matrix3<f64> {
        self.to_matrix()
    }
    fn from_vec(theta: &Vector3<f64>) -> Self {
        Self::from_rotation_vector(theta)
    }
    fn log_vec(&self) -> Vector3<f64> {
        self.to_rotation_vector()
    }
    fn inv(&self) -> Self {
        self.conjugate()
    }
    fn prod(&self, o: &Self) -> Self {
        self.mul(o)
    }
    fn validity_error(&self) -> f64 {
        (self.norm() - 1.0).abs()
    }
}

impl Rotation3 for Rot3 {
    fn as_matrix(&self) -> Matrix3<f64> {
        self.m
    }
    fn from_vec(theta: &Vector3<f64>) -> Self {
        Self::from_rotation_vector(theta)
    }
    fn log_vec(&self) -> Vector3<f64> {
        self.to_rotation_vector()
    }
    fn inv(&self) -> Self {
        self.transpose()
    }
    fn prod(&self, o: &Self) -> Self {
        self.mul(o)
    }
    fn validity_error(&self) -> f64 {
        let ortho = (self.m.transpose() * self.m - Matrix3::identity()).abs().max();
        ortho.max((self.m.determinant() - 1.0).abs())
    }
}

macro_rules! rotation3_group {
    ($t:ty, $name:literal) => {
        impl LieGroup for $t {
            const NAME: &'static str = $name;

            fn identity_like(&self) -> Self {
                <$t as Rotation3>::from_vec(&Vector3::zeros())
            }
            fn inverse(&self) -> Self {
                self.inv()
            }
            fn compose(&self, other: &Self) -> Self {
                self.prod(other)
            }
            fn exp(tau: &Tangent) -> Result<Self> {
                Ok(<$t as Rotation3>::from_vec(&to_svec::<3>(tau)?))
            }
            fn log(&self) -> Tangent {
                to_dvec(&self.log_vec())
            }
            fn adj(&self) -> Jac {
                to_dmat(&self.as_matrix())
            }
            fn jr(tau: &Tangent) -> Result<Jac> {
                Ok(to_dmat(&jr_so3(&to_svec::<3>(tau)?)))
            }
            fn jl(tau: &Tangent) -> Result<Jac> {
                Ok(to_dmat(&jl_so3(&to_svec::<3>(tau)?)))
            }
            fn jr_inv(tau: &Tangent) -> Result<Jac> {
                Ok(to_dmat(&jr_inv_so3(&to_svec::<3>(tau)?)))
            }
            fn jl_inv(tau: &Tangent) -> Result<Jac> {
                Ok(to_dmat(&jl_inv_so3(&to_svec::<3>(tau)?)))
            }
            fn is_valid(&self, tol: f64) -> bool {
                self.validity_error() < tol
            }
            fn adj_inv(&self) -> Jac {
                to_dmat(&self.as_matrix().transpose())
            }
            fn jac_inverse(&self) -> Jac {
                to_dmat(&(-self.as_matrix()))
            }
            fn jac_compose_lhs(&self, other: &Self) -> Jac {
                to_dmat(&other.as_matrix().transpose())
            }
            fn jac_rplus_x(&self, tau: &Tangent) -> Result<Jac> {
                Ok(to_dmat(&Rot3::jac_rplus_rot_closed(&to_svec::<3>(tau)?)))
            }
        }

        impl Action for $t {
            fn point_dim(&self) -> usize {
                3
            }
            fn act(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
                Ok(to_dvec(&(self.as_matrix() * to_svec::<3>(p)?)))
            }
            fn jac_act_x(&self, p: &DVector<f64>) -> Result<Jac> {
                Ok(to_dmat(&(-self.as_matrix() * skew3(&to_svec::<3>(p)?))))
            }
            fn jac_act_p(&self, p: &DVector<f64>) -> Result<Jac> {
                to_svec::<3>(p)?;
                Ok(to_dmat(&self.as_matrix()))
            }
        }
    };
}

rotation3_group!(UnitQuaternion, "S3");
rotation3_group!(Rot3, "SO(3)");
impl_manifold_for_group!(UnitQuaternion, |_s| 3);
impl_manifold_for_group!(Rot3, |_s| 3);
