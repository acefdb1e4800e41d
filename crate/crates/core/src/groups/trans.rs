//! The translation group (ℝⁿ, +).

use nalgebra::DVector;

use crate::error::Result;
use crate::lie::{check_dim, impl_manifold_for_group, Action, Jac, LieGroup, Tangent};

/// An element of ℝⁿ under addition. Exp, Log, the adjoint and all Jacobians are identities.
#[derive(Debug, Clone, PartialEq)]
pub struct TransN {
    pub v: DVector<f64>,
}

impl TransN {
    pub fn new(v: DVector<f64>) -> Self {
        Self { v }
    }

    pub fn zeros(n: usize) -> Self {
        Self { v: DVector::zeros(n) }
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self { v: DVector::from_column_slice(s) }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }
}

impl LieGroup for TransN {
    const NAME: &'static str = "R^n";

    fn identity_like(&self) -> Self {
        Self::zeros(self.v.len())
    }
    fn inverse(&self) -> Self {
        Self { v: -&self.v }
    }
    /// Panics if the dimensions differ; use ⊕/⊖ for checked arithmetic.
    fn compose(&self, other: &Self) -> Self {
        assert_eq!(self.v.len(), other.v.len(), "R^n composition dimension mismatch");
        Self { v: &self.v + &other.v }
    }
    fn exp(tau: &Tangent) -> Result<Self> {
        Ok(Self { v: tau.clone() })
    }
    fn log(&self) -> Tangent {
        self.v.clone()
    }
    fn adj(&self) -> Jac {
        Jac::identity(self.v.len(), self.v.len())
    }
    fn jr(tau: &Tangent) -> Result<Jac> {
        Ok(Jac::identity(tau.len(), tau.len()))
    }
    fn jl(tau: &Tangent) -> Result<Jac> {
        Ok(Jac::identity(tau.len(), tau.len()))
    }
    fn jr_inv(tau: &Tangent) -> Result<Jac> {
        Ok(Jac::identity(tau.len(), tau.len()))
    }
    fn jl_inv(tau: &Tangent) -> Result<Jac> {
        Ok(Jac::identity(tau.len(), tau.len()))
    }
    fn is_valid(&self, _tol: f64) -> bool {
        self.v.iter().all(|x| x.is_finite())
    }
}

impl Action for TransN {
    fn point_dim(&self) -> usize {
        self.v.len()
    }
    fn act(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.v.len(), p.len())?;
        Ok(&self.v + p)
    }
    fn jac_act_x(&self, p: &DVector<f64>) -> Result<Jac> {
        check_dim(self.v.len(), p.len())?;
        Ok(Jac::identity(p.len(), p.len()))
    }
    fn jac_act_p(&self, p: &DVector<f64>) -> Result<Jac> {
        check_dim(self.v.len(), p.len())?;
        Ok(Jac::identity(p.len(), p.len()))
    }
}

impl_manifold_for_group!(TransN, |s| s.v.len());
