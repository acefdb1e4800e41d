//! Gaussians on manifolds: X = X̄ ⊕ τ with τ ~ N(0, Σ) in the local frame, or
//! X = τ ⊕ X̄ in the global frame.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::lie::{check_dim, Jac, LieGroup, Manifold};

/// Stand-in for an unbounded variance. Diagonal entries at or above this value
/// are excluded from PSD checks.
pub const LARGE_VARIANCE: f64 = 1e12;

/// Eigenvalues above −this are clamped to zero by [`psd_repair`].
pub const PSD_REPAIR_TOL: f64 = 1e-9;

/// Eigenvalue floor accepted when validating a covariance.
pub const PSD_FLOOR: f64 = -1e-10;

/// Jitter added before the Cholesky factorization used for sampling.
pub const SAMPLE_JITTER: f64 = 1e-12;

/// Which tangent space the covariance lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    /// ˣΣ, perturbations on the right: X = X̄ ⊕ τ.
    Local,
    /// ᴱΣ, perturbations on the left: X = τ ⊕ X̄.
    Global,
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn finite_index(cov: &DMatrix<f64>) -> Vec<usize> {
    (0..cov.nrows()).filter(|&i| cov[(i, i)] < LARGE_VARIANCE).collect()
}

fn sub_block(cov: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| cov[(idx[i], idx[j])])
}

/// Smallest eigenvalue of the symmetric part, ignoring large-variance axes.
pub fn min_eigenvalue(cov: &DMatrix<f64>) -> f64 {
    let idx = finite_index(cov);
    if idx.is_empty() {
        return 0.0;
    }
    symmetrize(&sub_block(cov, &idx)).symmetric_eigenvalues().min()
}

/// Symmetrizes and clamps slightly negative eigenvalues to zero. Violations
/// larger than [`PSD_REPAIR_TOL`] are errors.
pub fn psd_repair(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !cov.is_square() {
        return Err(Error::DimensionMismatch { expected: cov.nrows(), actual: cov.ncols() });
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariance"));
    }
    let sym = symmetrize(cov);
    let eig = sym.clone().symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min < -PSD_REPAIR_TOL {
        return Err(Error::NotPositiveSemiDefinite { min_eigenvalue: min });
    }
    if min >= 0.0 {
        return Ok(sym);
    }
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    Ok(symmetrize(&(&eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose())))
}

/// Validates a covariance: square, finite, symmetric within 1e-12 (relative to its
/// scale) and eigenvalues ≥ [`PSD_FLOOR`] away from large-variance axes.
pub fn check_covariance(cov: &DMatrix<f64>, dim: usize) -> Result<()> {
    if cov.shape() != (dim, dim) {
        return Err(Error::DimensionMismatch { expected: dim, actual: cov.nrows().max(cov.ncols()) });
    }
    if cov.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("covariance"));
    }
    let idx = finite_index(cov);
    let sub = sub_block(cov, &idx);
    let scale = sub.amax().max(1.0);
    if (&sub - sub.transpose()).amax() > 1e-12 * scale {
        return Err(Error::Invalid("covariance is not symmetric".into()));
    }
    let min = min_eigenvalue(cov);
    if min < PSD_FLOOR * scale {
        return Err(Error::NotPositiveSemiDefinite { min_eigenvalue: min });
    }
    Ok(())
}

/// ᴱΣ = Ad_X ˣΣ Ad_Xᵀ.
pub fn local_to_global_cov<G: LieGroup>(x: &G, cov_local: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dim(x.dof(), cov_local.nrows())?;
    let ad = x.adj();
    Ok(symmetrize(&(&ad * cov_local * ad.transpose())))
}

/// ˣΣ = Ad_X⁻¹ ᴱΣ Ad_X⁻ᵀ.
pub fn global_to_local_cov<G: LieGroup>(x: &G, cov_global: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dim(x.dof(), cov_global.nrows())?;
    let ad = x.adj_inv();
    Ok(symmetrize(&(&ad * cov_global * ad.transpose())))
}

/// Draws τ ~ N(0, Σ) through the Cholesky factor of Σ + jitter·I.
pub fn sample_tangent<R: Rng + ?Sized>(cov: &DMatrix<f64>, rng: &mut R) -> Result<DVector<f64>> {
    let n = cov.nrows();
    let chol = (symmetrize(cov) + DMatrix::identity(n, n) * SAMPLE_JITTER)
        .cholesky()
        .ok_or(Error::NotPositiveSemiDefinite { min_eigenvalue: min_eigenvalue(cov) })?;
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(chol.l() * z)
}

/// Mean on a manifold plus a tangent-space covariance with an explicit frame tag.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState<M> {
    pub mean: M,
    pub cov: DMatrix<f64>,
    pub frame: Frame,
}

impl<M: Manifold> GaussianState<M> {
    pub fn new(mean: M, cov: DMatrix<f64>, frame: Frame) -> Result<Self> {
        check_covariance(&cov, mean.dof())?;
        Ok(Self { mean, cov, frame })
    }

    pub fn local(mean: M, cov: DMatrix<f64>) -> Result<Self> {
        Self::new(mean, cov, Frame::Local)
    }

    pub fn dof(&self) -> usize {
        self.mean.dof()
    }

    /// Pushes the state through `f` with Jacobian `j`: mean' = f(mean), Σ' = JΣJᵀ.
    /// `j` must be of the flavor matching the frame (right Jacobians for local).
    pub fn propagate<N: Manifold, F: Fn(&M) -> N>(&self, f: F, j: &Jac) -> Result<GaussianState<N>> {
        check_dim(self.dof(), j.ncols())?;
        let mean = f(&self.mean);
        check_dim(mean.dof(), j.nrows())?;
        let cov = symmetrize(&(j * &self.cov * j.transpose()));
        Ok(GaussianState { mean, cov, frame: self.frame })
    }

    /// X̄ ⊕ τ (local) or τ ⊕ X̄ (global).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<M> {
        let tau = sample_tangent(&self.cov, rng)?;
        match self.frame {
            Frame::Local => self.mean.rplus(&tau),
            Frame::Global => self.mean.lplus(&tau),
        }
    }

    /// Single draw from a fresh generator seeded with `seed`.
    pub fn sample_seeded(&self, seed: u64) -> Result<M> {
        self.sample(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Tangent error of `x` relative to the mean, in this state's frame.
    pub fn error_of(&self, x: &M) -> Result<DVector<f64>> {
        match self.frame {
            Frame::Local => x.rminus(&self.mean),
            Frame::Global => x.lminus(&self.mean),
        }
    }

    /// Squared Mahalanobis distance of `x` from the mean (the NEES when `x` is the truth).
    pub fn mahalanobis2(&self, x: &M) -> Result<f64> {
        let e = self.error_of(x)?;
        let info = self.cov.clone().try_inverse().ok_or(Error::Singular("covariance"))?;
        Ok((e.transpose() * info * &e)[(0, 0)])
    }
}

impl<G: LieGroup> GaussianState<G> {
    /// The same distribution re-expressed in `frame`.
    pub fn to_frame(&self, frame: Frame) -> Result<Self> {
        let cov = match (self.frame, frame) {
            (a, b) if a == b => self.cov.clone(),
            (Frame::Local, Frame::Global) => local_to_global_cov(&self.mean, &self.cov)?,
            _ => global_to_local_cov(&self.mean, &self.cov)?,
        };
        Ok(Self { mean: self.mean.clone(), cov, frame })
    }
}

/// Sample covariance of zero-mean-assumed vectors (divides by n).
pub fn sample_covariance(samples: &[DVector<f64>]) -> DMatrix<f64> {
    let n = samples.first().map_or(0, |s| s.len());
    let mut acc = DMatrix::zeros(n, n);
    for s in samples {
        acc += s * s.transpose();
    }
    acc / samples.len().max(1) as f64
}
