//! Group contract shared by every concrete group, plus the finite-difference
//! Jacobian oracle used to audit the closed forms.
//!
//! Tangent vectors are plain coordinate vectors in ℝᵐ and Jacobians are dense
//! matrices between tangent spaces. Concrete groups expose statically-sized
//! inherent methods; the traits here work on dynamically-sized vectors so that
//! composites, estimators and the audit can be written once for every group.

use std::fmt::Debug;

use nalgebra::{DMatrix, DVector, SMatrix, SVector};

use crate::error::{Error, Result};

/// Tangent-space coordinates τ ∈ ℝᵐ.
pub type Tangent = DVector<f64>;

/// Jacobian block mapping an m-dimensional tangent space onto an n-dimensional one.
pub type Jac = DMatrix<f64>;

/// Default central-difference step.
pub const FD_EPS: f64 = 1e-6;

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

pub(crate) fn check_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn to_dmat<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> Jac {
    DMatrix::from_column_slice(R, C, m.as_slice())
}

pub(crate) fn to_dvec<const N: usize>(v: &SVector<f64, N>) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}

pub(crate) fn to_svec<const N: usize>(v: &DVector<f64>) -> Result<SVector<f64, N>> {
    check_dim(N, v.len())?;
    Ok(SVector::from_column_slice(v.as_slice()))
}

/// Anything with a right-⊕ retraction and its inverse right-⊖.
///
/// Implemented by every group, by composites, and by plain vectors (where ⊕ is +).
pub trait Manifold: Clone {
    fn dof(&self) -> usize;

    /// `self ⊕ τ`, with τ expressed in the tangent space at `self`.
    fn rplus(&self, tau: &Tangent) -> Result<Self>;

    /// `self ⊖ other`, expressed in the tangent space at `other`.
    fn rminus(&self, other: &Self) -> Result<Tangent>;

    /// `τ ⊕ self`, τ in the global frame.
    fn lplus(&self, tau: &Tangent) -> Result<Self>;

    /// Left minus, expressed in the global frame.
    fn lminus(&self, other: &Self) -> Result<Tangent>;
}

impl Manifold for DVector<f64> {
    fn dof(&self) -> usize {
        self.len()
    }

    fn rplus(&self, tau: &Tangent) -> Result<Self> {
        check_dim(self.len(), tau.len())?;
        Ok(self + tau)
    }

    fn rminus(&self, other: &Self) -> Result<Tangent> {
        check_dim(other.len(), self.len())?;
        Ok(self - other)
    }

    fn lplus(&self, tau: &Tangent) -> Result<Self> {
        self.rplus(tau)
    }

    fn lminus(&self, other: &Self) -> Result<Tangent> {
        self.rminus(other)
    }
}

/// A matrix Lie group with closed-form Exp/Log, adjoint and Jacobians.
///
/// Default ⊕/⊖ are the right (local-frame) variants. Jacobian blocks have
/// generic defaults derived from the adjoint; groups override them with their
/// cheaper closed forms.
pub trait LieGroup: Manifold + Debug + Send + Sync + 'static {
    /// Short human-readable group name, e.g. `"SE(2)"`.
    const NAME: &'static str;

    fn identity_like(&self) -> Self;
    fn inverse(&self) -> Self;
    fn compose(&self, other: &Self) -> Self;

    /// Exp: ℝᵐ → M.
    fn exp(tau: &Tangent) -> Result<Self>;
    /// Log: M → ℝᵐ (principal value).
    fn log(&self) -> Tangent;

    /// Adjoint matrix, mapping local tangents at `self` to global tangents.
    fn adj(&self) -> Jac;

    fn jr(tau: &Tangent) -> Result<Jac>;
    fn jl(tau: &Tangent) -> Result<Jac>;
    fn jr_inv(tau: &Tangent) -> Result<Jac>;
    fn jl_inv(tau: &Tangent) -> Result<Jac>;

    /// Checks the group constraint (orthogonality, unit norm, ...).
    fn is_valid(&self, tol: f64) -> bool;

    fn adj_inv(&self) -> Jac {
        self.inverse().adj()
    }

    /// ∂X⁻¹/∂X.
    fn jac_inverse(&self) -> Jac {
        -self.adj()
    }

    /// ∂(X∘Y)/∂X.
    fn jac_compose_lhs(&self, other: &Self) -> Jac {
        other.adj_inv()
    }

    /// ∂(X∘Y)/∂Y.
    fn jac_compose_rhs(&self, other: &Self) -> Jac {
        Jac::identity(other.dof(), other.dof())
    }

    /// ∂(X⊕τ)/∂X.
    fn jac_rplus_x(&self, tau: &Tangent) -> Result<Jac> {
        Ok(Self::exp(tau)?.adj_inv())
    }

    /// ∂(X⊕τ)/∂τ.
    fn jac_rplus_tau(&self, tau: &Tangent) -> Result<Jac> {
        Self::jr(tau)
    }

    /// ∂(self⊖X)/∂self.
    fn jac_rminus_lhs(&self, x: &Self) -> Result<Jac> {
        Self::jr_inv(&self.rminus(x)?)
    }

    /// ∂(self⊖X)/∂X.
    fn jac_rminus_rhs(&self, x: &Self) -> Result<Jac> {
        Ok(-Self::jl_inv(&self.rminus(x)?)?)
    }
}

/// Group action on an associated vector set (rotations and rigid motions act on points).
pub trait Action: LieGroup {
    /// Dimension of the points acted upon.
    fn point_dim(&self) -> usize;

    fn act(&self, p: &DVector<f64>) -> Result<DVector<f64>>;

    /// ∂(X·p)/∂X.
    fn jac_act_x(&self, p: &DVector<f64>) -> Result<Jac>;

    /// ∂(X·p)/∂p.
    fn jac_act_p(&self, p: &DVector<f64>) -> Result<Jac>;
}

/// Group-generic ⊕/⊖, used by the per-group `Manifold` impls.
pub(crate) fn group_rplus<G: LieGroup>(x: &G, tau: &Tangent) -> Result<G> {
    check_dim(x.dof(), tau.len())?;
    Ok(x.compose(&G::exp(tau)?))
}

pub(crate) fn group_rminus<G: LieGroup>(y: &G, x: &G) -> Result<Tangent> {
    check_dim(x.dof(), y.dof())?;
    Ok(x.inverse().compose(y).log())
}

pub(crate) fn group_lplus<G: LieGroup>(x: &G, tau: &Tangent) -> Result<G> {
    check_dim(x.dof(), tau.len())?;
    Ok(G::exp(tau)?.compose(x))
}

pub(crate) fn group_lminus<G: LieGroup>(y: &G, x: &G) -> Result<Tangent> {
    check_dim(x.dof(), y.dof())?;
    Ok(y.compose(&x.inverse()).log())
}

/// Implements [`Manifold`] for a group: right ⊕/⊖ as `X∘Exp(τ)` / `Log(X⁻¹Y)`,
/// left ⊕/⊖ as `Exp(τ)∘X` / `Log(YX⁻¹)`.
macro_rules! impl_manifold_for_group {
    ($t:ty, |$s:ident| $dof:expr) => {
        impl $crate::lie::Manifold for $t {
            fn dof(&self) -> usize {
                let $s = self;
                $dof
            }
            fn rplus(&self, tau: &$crate::lie::Tangent) -> $crate::error::Result<Self> {
                $crate::lie::group_rplus(self, tau)
            }
            fn rminus(&self, other: &Self) -> $crate::error::Result<$crate::lie::Tangent> {
                $crate::lie::group_rminus(self, other)
            }
            fn lplus(&self, tau: &$crate::lie::Tangent) -> $crate::error::Result<Self> {
                $crate::lie::group_lplus(self, tau)
            }
            fn lminus(&self, other: &Self) -> $crate::error::Result<$crate::lie::Tangent> {
                $crate::lie::group_lminus(self, other)
            }
        }
    };
}
pub(crate) use impl_manifold_for_group;

/// Which ⊕/⊖ flavor a numeric derivative perturbs with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Right,
    Left,
}

/// Central-difference right Jacobian of `f` at `x`.
///
/// Column i is `[(f(x ⊕ εeᵢ) ⊖ f(x)) − (f(x ⊕ −εeᵢ) ⊖ f(x))] / 2ε`.
pub fn jac_numeric<M, N, F>(f: F, x: &M, eps: f64) -> Result<Jac>
where
    M: Manifold,
    N: Manifold,
    F: Fn(&M) -> N,
{
    if !(eps > 0.0) {
        return Err(Error::Invalid(format!("finite-difference step must be positive, got {eps}")));
    }
    let m = x.dof();
    let y0 = f(x);
    let n = y0.dof();
    let mut jac = Jac::zeros(n, m);
    for i in 0..m {
        let mut step = Tangent::zeros(m);
        step[i] = eps;
        let fwd = f(&x.rplus(&step)?).rminus(&y0)?;
        step[i] = -eps;
        let bwd = f(&x.rplus(&step)?).rminus(&y0)?;
        let col = (fwd - bwd) / (2.0 * eps);
        check_finite(col.as_slice(), "finite-difference column")?;
        jac.set_column(i, &col);
    }
    Ok(jac)
}

/// Central-difference Jacobian with a chosen perturbation side on the domain
/// and the codomain. `(Right, Right)` is the right Jacobian, `(Left, Left)` the
/// left Jacobian, and the mixed pairs are the crossed Jacobians.
pub fn jac_numeric_sided<M, N, F>(f: F, x: &M, eps: f64, domain: Side, codomain: Side) -> Result<Jac>
where
    M: Manifold,
    N: Manifold,
    F: Fn(&M) -> N,
{
    if !(eps > 0.0) {
        return Err(Error::Invalid(format!("finite-difference step must be positive, got {eps}")));
    }
    let m = x.dof();
    let y0 = f(x);
    let n = y0.dof();
    let plus = |tau: &Tangent| match domain {
        Side::Right => x.rplus(tau),
        Side::Left => x.lplus(tau),
    };
    let minus = |y: &N| match codomain {
        Side::Right => y.rminus(&y0),
        Side::Left => y.lminus(&y0),
    };
    let mut jac = Jac::zeros(n, m);
    for i in 0..m {
        let mut step = Tangent::zeros(m);
        step[i] = eps;
        let fwd = minus(&f(&plus(&step)?))?;
        step[i] = -eps;
        let bwd = minus(&f(&plus(&step)?))?;
        let col = (fwd - bwd) / (2.0 * eps);
        check_finite(col.as_slice(), "finite-difference column")?;
        jac.set_column(i, &col);
    }
    Ok(jac)
}

/// Chain rule: ∂Z/∂X = ∂Z/∂Y · ∂Y/∂X.
pub fn jac_chain(j_zy: &Jac, j_yx: &Jac) -> Result<Jac> {
    check_dim(j_zy.ncols(), j_yx.nrows())?;
    Ok(j_zy * j_yx)
}

fn invert_adjoint(ad: &Jac) -> Result<Jac> {
    if !ad.is_square() {
        return Err(Error::DimensionMismatch { expected: ad.nrows(), actual: ad.ncols() });
    }
    ad.clone().try_inverse().ok_or(Error::Singular("adjoint"))
}

/// Left Jacobian from the right one: `ᴱJᴱ = Ad(Y) · ʸJˣ · Ad(X)⁻¹`.
pub fn jac_left_from_right(j_right: &Jac, ad_x: &Jac, ad_y: &Jac) -> Result<Jac> {
    check_dim(j_right.ncols(), ad_x.nrows())?;
    check_dim(ad_y.ncols(), j_right.nrows())?;
    Ok(ad_y * j_right * invert_adjoint(ad_x)?)
}

/// Right Jacobian from the left one: `ʸJˣ = Ad(Y)⁻¹ · ᴱJᴱ · Ad(X)`.
pub fn jac_right_from_left(j_left: &Jac, ad_x: &Jac, ad_y: &Jac) -> Result<Jac> {
    check_dim(j_left.ncols(), ad_x.nrows())?;
    check_dim(ad_y.ncols(), j_left.nrows())?;
    Ok(invert_adjoint(ad_y)? * j_left * ad_x)
}

/// Crossed Jacobian mapping the local tangent at X to the global tangent of Y:
/// `ᴱJˣ = Ad(Y) · ʸJˣ`.
pub fn jac_crossed_local_to_global(j_right: &Jac, ad_y: &Jac) -> Result<Jac> {
    check_dim(ad_y.ncols(), j_right.nrows())?;
    Ok(ad_y * j_right)
}

/// Crossed Jacobian mapping the global tangent at E to the local tangent at Y:
/// `ʸJᴱ = ʸJˣ · Ad(X)⁻¹`.
pub fn jac_crossed_global_to_local(j_right: &Jac, ad_x: &Jac) -> Result<Jac> {
    check_dim(j_right.ncols(), ad_x.nrows())?;
    Ok(j_right * invert_adjoint(ad_x)?)
}

/// Wraps an angle to (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Largest absolute entry of `a − b`, relative to the largest absolute entry of
/// `b` (floored at `floor`).
pub fn max_rel_error(a: &Jac, b: &Jac, floor: f64) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    let diff = (a - b).abs().max();
    diff / b.abs().max().max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn wrap_angle_half_open_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(2.0 * PI + 0.1) - 0.1).abs() < 1e-12);
        assert!((wrap_angle(-0.3) + 0.3).abs() < 1e-15);
    }

    #[test]
    fn vector_manifold_jacobian_is_plain_derivative() {
        let x = DVector::from_vec(vec![0.3, -1.2]);
        let j = jac_numeric(|v: &DVector<f64>| DVector::from_vec(vec![v[0] * v[1], v[0].sin()]), &x, FD_EPS).unwrap();
        let expected = Jac::from_row_slice(2, 2, &[x[1], x[0], x[0].cos(), 0.0]);
        assert!(max_rel_error(&j, &expected, 1e-9) < 1e-8);
    }

    #[test]
    fn bad_epsilon_rejected() {
        let x = DVector::from_vec(vec![1.0]);
        assert!(jac_numeric(|v: &DVector<f64>| v.clone(), &x, 0.0).is_err());
    }

    #[test]
    fn chain_dimension_mismatch() {
        let a = Jac::identity(3, 3);
        let b = Jac::identity(2, 2);
        assert_eq!(jac_chain(&a, &b), Err(Error::DimensionMismatch { expected: 3, actual: 2 }));
        let j = Jac::from_fn(3, 2, |i, k| (i * 2 + k) as f64);
        assert_eq!(jac_chain(&Jac::identity(3, 3), &j).unwrap(), j);
        assert_eq!(jac_chain(&j, &Jac::identity(2, 2)).unwrap(), j);
    }
}
