//! Error-state Kalman filter on a pose group with beacon observations y = X⁻¹·b + n.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lie::{check_dim, Action, Jac, LieGroup, Tangent};
use crate::uncertainty::{check_covariance, symmetrize, Frame, GaussianState};

/// Motion increment u (integrated over δt) with its covariance W.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlInput {
    pub u: Tangent,
    pub w: DMatrix<f64>,
}

impl ControlInput {
    pub fn new(u: Tangent, w: DMatrix<f64>) -> Result<Self> {
        check_covariance(&w, u.len())?;
        Ok(Self { u, w })
    }
}

/// y = X⁻¹·b + n, n ~ N(0, N).
#[derive(Debug, Clone, PartialEq)]
pub struct BeaconMeasurement {
    pub beacon_id: usize,
    pub y: DVector<f64>,
    pub n: DMatrix<f64>,
}

impl BeaconMeasurement {
    pub fn new(beacon_id: usize, y: DVector<f64>, n: DMatrix<f64>) -> Result<Self> {
        check_covariance(&n, y.len())?;
        if n.clone().cholesky().is_none() {
            return Err(Error::Singular("measurement covariance"));
        }
        Ok(Self { beacon_id, y, n })
    }
}

/// Expected measurement X⁻¹·b.
pub fn expected_measurement<G: Action>(x: &G, b: &DVector<f64>) -> Result<DVector<f64>> {
    x.inverse().act(b)
}

/// H = ∂(X⁻¹·b)/∂X = ∂(X⁻¹·b)/∂X⁻¹ · ∂X⁻¹/∂X.
pub fn measurement_jacobian<G: Action>(x: &G, b: &DVector<f64>) -> Result<Jac> {
    Ok(x.inverse().jac_act_x(b)? * x.jac_inverse())
}

/// (F, G) for X ⊕ u: F = Ad(Exp(u))⁻¹, G = Jr(u).
pub fn prediction_jacobians<G: LieGroup>(x: &G, u: &Tangent) -> Result<(Jac, Jac)> {
    Ok((x.jac_rplus_x(u)?, x.jac_rplus_tau(u)?))
}

fn check_local<G>(state: &GaussianState<G>) -> Result<()> {
    if state.frame != Frame::Local {
        return Err(Error::Invalid("the filter keeps its covariance in the local frame".into()));
    }
    Ok(())
}

/// X ← X ⊕ u, P ← F P Fᵀ + G W Gᵀ.
pub fn eskf_predict<G: LieGroup>(state: &GaussianState<G>, ctrl: &ControlInput) -> Result<GaussianState<G>> {
    check_local(state)?;
    check_dim(state.mean.dof(), ctrl.u.len())?;
    check_covariance(&ctrl.w, ctrl.u.len())?;
    let (f, g) = prediction_jacobians(&state.mean, &ctrl.u)?;
    let p = &f * &state.cov * f.transpose() + &g * &ctrl.w * g.transpose();
    Ok(GaussianState { mean: state.mean.rplus(&ctrl.u)?, cov: symmetrize(&p), frame: Frame::Local })
}

/// Innovation z = y − X⁻¹·b, its covariance Z, and the gain K.
#[derive(Debug, Clone)]
pub struct Innovation {
    pub z: DVector<f64>,
    pub z_cov: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub h: Jac,
}

pub fn innovation<G: Action>(state: &GaussianState<G>, meas: &BeaconMeasurement, beacon: &DVector<f64>) -> Result<Innovation> {
    check_dim(state.mean.point_dim(), beacon.len())?;
    check_dim(beacon.len(), meas.y.len())?;
    let e = expected_measurement(&state.mean, beacon)?;
    let h = measurement_jacobian(&state.mean, beacon)?;
    let z_cov = symmetrize(&(&h * &state.cov * h.transpose() + &meas.n));
    let z_inv = z_cov.clone().try_inverse().ok_or(Error::Singular("innovation covariance"))?;
    let gain = &state.cov * h.transpose() * z_inv;
    Ok(Innovation { z: &meas.y - e, z_cov, gain, h })
}

/// X ← X ⊕ K z, P ← P − K Z Kᵀ.
pub fn eskf_correct<G: Action>(state: &GaussianState<G>, meas: &BeaconMeasurement, beacon: &DVector<f64>) -> Result<GaussianState<G>> {
    check_local(state)?;
    let inn = innovation(state, meas, beacon)?;
    let dx = &inn.gain * &inn.z;
    let p = &state.cov - &inn.gain * &inn.z_cov * inn.gain.transpose();
    Ok(GaussianState { mean: state.mean.rplus(&dx)?, cov: symmetrize(&p), frame: Frame::Local })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::{skew1, Pose2, Pose3, Twist3};
    use crate::lie::{jac_numeric, max_rel_error, Manifold, FD_EPS};
    use approx::assert_relative_eq;
    use nalgebra::{Vector2, Vector3};

    fn state() -> GaussianState<Pose2> {
        let p = DMatrix::from_diagonal(&DVector::from_vec(vec![0.01, 0.02, 0.005]));
        GaussianState::local(Pose2::new(1.0, 0.5, 0.3), p).unwrap()
    }

    #[test]
    fn zero_motion_and_zero_noise() {
        let s = state();
        let c = ControlInput::new(Tangent::zeros(3), DMatrix::zeros(3, 3)).unwrap();
        let p = eskf_predict(&s, &c).unwrap();
        assert_eq!(p.mean, s.mean);
        assert_relative_eq!(p.cov, s.cov, epsilon = 1e-18);
        let z = GaussianState::local(s.mean, DMatrix::zeros(3, 3)).unwrap();
        let c = ControlInput::new(Tangent::from_vec(vec![0.1, 0.0, 0.05]), DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(eskf_predict(&z, &c).unwrap().cov, DMatrix::zeros(3, 3));
        assert!(ControlInput::new(Tangent::zeros(3), -DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn prediction_jacobians_match_numeric() {
        let x = Pose2::new(1.0, 0.5, 0.3);
        let u = Tangent::from_vec(vec![0.1, 0.02, 0.05]);
        let (f, g) = prediction_jacobians(&x, &u).unwrap();
        let nf = jac_numeric(|y: &Pose2| y.rplus(&u).unwrap(), &x, FD_EPS).unwrap();
        let ng = jac_numeric(|v: &DVector<f64>| x.rplus(v).unwrap(), &u, FD_EPS).unwrap();
        assert!(max_rel_error(&f, &nf, 1e-9) < 1e-7);
        assert!(max_rel_error(&g, &ng, 1e-9) < 1e-7);
    }

    #[test]
    fn measurement_jacobian_matches_closed_form_and_numeric() {
        let x = Pose2::new(1.0, 0.5, 0.3);
        let b = DVector::from_vec(vec![2.0, -1.0]);
        let h = measurement_jacobian(&x, &b).unwrap();
        let num = jac_numeric(|y: &Pose2| expected_measurement(y, &b).unwrap(), &x, FD_EPS).unwrap();
        assert!(max_rel_error(&h, &num, 1e-9) < 1e-7);
        // −[I, Rᵀ[1]×(b − t)]
        let c = x.rot.transpose().rotate(&(skew1() * (Vector2::new(2.0, -1.0) - x.t)));
        let closed = -DMatrix::from_row_slice(2, 3, &[1.0, 0.0, c.x, 0.0, 1.0, c.y]);
        assert_relative_eq!(h, closed, epsilon = 1e-14);
        // b = t, R = I
        let x = Pose2::new(2.0, -1.0, 0.0);
        let h = measurement_jacobian(&x, &b).unwrap();
        assert_relative_eq!(h, -DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]), epsilon = 1e-15);
        let x3 = Pose3::from_twist(&Twist3::new(Vector3::new(0.3, -0.2, 1.0), Vector3::new(0.2, 0.1, -0.4)));
        let b3 = DVector::from_vec(vec![1.0, 2.0, -0.5]);
        let num = jac_numeric(|y: &Pose3| expected_measurement(y, &b3).unwrap(), &x3, FD_EPS).unwrap();
        assert!(max_rel_error(&measurement_jacobian(&x3, &b3).unwrap(), &num, 1e-9) < 1e-7);
    }

    #[test]
    fn perfect_prediction_keeps_mean_and_shrinks_cov() {
        let s = state();
        let b = DVector::from_vec(vec![2.0, 0.0]);
        let y = expected_measurement(&s.mean, &b).unwrap();
        let m = BeaconMeasurement::new(0, y, DMatrix::from_diagonal(&DVector::from_vec(vec![1e-4, 1e-4]))).unwrap();
        let c = eskf_correct(&s, &m, &b).unwrap();
        assert_eq!(c.mean, s.mean);
        assert!(c.cov.trace() < s.cov.trace());
        let diff = &s.cov - &c.cov;
        assert!(diff.symmetric_eigenvalues().min() > -1e-15);
    }
}
