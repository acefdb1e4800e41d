//! Differential-drive odometry: encoder increments → body magnitudes → SE(2)
//! deltas, pre-integrated with covariance and calibration Jacobian.
//!
//! Deltas are handled in (p, θ) coordinates: Jacobians and residuals here are
//! with respect to plain coordinate perturbations, and angle differences wrap
//! to (−π, π].

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Matrix3x2, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::groups::{skew1, Pose2, Rot2};
use crate::lie::wrap_angle;

pub mod calibrate;

pub use calibrate::{calibrate, Anchor, CalibOptions, CalibProblem, CalibReport};

/// Below this |δθ| the straight-line approximation replaces the arc.
pub const THETA_TOL: f64 = 1e-6;

/// Per-step slippage covariance on (δl, δθ) used when none is given.
pub const DEFAULT_SLIP_VAR: f64 = 1e-8;

/// Added to the delta covariance before inversion so zero-noise problems stay solvable.
pub const INFO_REGULARIZATION: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelParams {
    pub r_l: f64,
    pub r_r: f64,
    pub d: f64,
}

impl WheelParams {
    pub fn new(r_l: f64, r_r: f64, d: f64) -> Result<Self> {
        let p = Self { r_l, r_r, d };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.r_l, self.r_r, self.d].iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::Invalid(format!("wheel parameters must be positive: {self:?}")))
        }
    }
}

/// Correction factors c = [c_l, c_r, c_d].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calib {
    pub c: Vector3<f64>,
}

impl Calib {
    pub fn new(c_l: f64, c_r: f64, c_d: f64) -> Self {
        Self { c: Vector3::new(c_l, c_r, c_d) }
    }

    pub fn nominal() -> Self {
        Self::new(1.0, 1.0, 1.0)
    }

    pub fn c_l(&self) -> f64 {
        self.c.x
    }
    pub fn c_r(&self) -> f64 {
        self.c.y
    }
    pub fn c_d(&self) -> f64 {
        self.c.z
    }

    pub fn validate(&self) -> Result<()> {
        if self.c.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::Invalid(format!("calibration factors must be positive: {:?}", self.c)))
        }
    }
}

/// Incremental wheel angles over one sampling period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderTick {
    pub dpsi_l: f64,
    pub dpsi_r: f64,
}

impl EncoderTick {
    pub fn new(dpsi_l: f64, dpsi_r: f64) -> Self {
        Self { dpsi_l, dpsi_r }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    pub k_l: f64,
    pub k_r: f64,
    pub mu_l: f64,
    pub mu_r: f64,
    pub q_s: Matrix2<f64>,
}

impl NoiseParams {
    pub fn noiseless() -> Self {
        Self { k_l: 0.0, k_r: 0.0, mu_l: 0.0, mu_r: 0.0, q_s: Matrix2::zeros() }
    }

    pub fn new(k_l: f64, k_r: f64, mu_l: f64, mu_r: f64) -> Self {
        Self { k_l, k_r, mu_l, mu_r, q_s: Matrix2::identity() * DEFAULT_SLIP_VAR }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.k_l, self.k_r, self.mu_l, self.mu_r].iter().all(|v| v.is_finite() && *v >= 0.0)
            && self.q_s.symmetric_eigenvalues().min() >= -1e-15
            && (self.q_s - self.q_s.transpose()).amax() == 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid("noise parameters must be nonnegative with a symmetric PSD slip covariance".into()))
        }
    }
}

/// (δl, δθ): common and differential wheel motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyMag {
    pub dl: f64,
    pub dtheta: f64,
}

pub fn body_magnitudes(y: &EncoderTick, c: &Calib, p: &WheelParams) -> BodyMag {
    let wl = p.r_l * c.c_l() * y.dpsi_l;
    let wr = p.r_r * c.c_r() * y.dpsi_r;
    BodyMag { dl: 0.5 * (wr + wl), dtheta: (wr - wl) / (p.d * c.c_d()) }
}

/// ∂b/∂y (equal to ∂b/∂n).
pub fn jac_body_y(c: &Calib, p: &WheelParams) -> Matrix2<f64> {
    let dd = p.d * c.c_d();
    let (al, ar) = (p.r_l * c.c_l(), p.r_r * c.c_r());
    Matrix2::new(0.5 * al, 0.5 * ar, -al / dd, ar / dd)
}

/// ∂b/∂c.
pub fn jac_body_c(y: &EncoderTick, c: &Calib, p: &WheelParams) -> Matrix2x3<f64> {
    let dd = p.d * c.c_d();
    let dtheta = body_magnitudes(y, c, p).dtheta;
    let (gl, gr) = (y.dpsi_l * p.r_l, y.dpsi_r * p.r_r);
    Matrix2x3::new(0.5 * gl, 0.5 * gr, 0.0, -gl / dd, gr / dd, -dtheta / c.c_d())
}

/// Which integration formula produced a delta.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Arc,
    Straight,
}

pub fn branch_of(b: &BodyMag, theta_tol: f64) -> Branch {
    if b.dtheta.abs() >= theta_tol {
        Branch::Arc
    } else {
        Branch::Straight
    }
}

/// δ = (δx, δy, δθ): the arc of radius δl/δθ, or the midpoint approximation when nearly straight.
pub fn delta_from_body(b: &BodyMag, theta_tol: f64) -> Vector3<f64> {
    let t = b.dtheta;
    match branch_of(b, theta_tol) {
        Branch::Arc => {
            let r = b.dl / t;
            let h = (0.5 * t).sin();
            Vector3::new(r * t.sin(), r * 2.0 * h * h, t)
        }
        Branch::Straight => Vector3::new(b.dl * (0.5 * t).cos(), b.dl * (0.5 * t).sin(), t),
    }
}

/// cos θ − sin θ/θ and sin θ − (1 − cos θ)/θ, each divided by θ.
fn arc_coeffs(t: f64) -> (f64, f64) {
    if t.abs() < 1e-2 {
        let t2 = t * t;
        (-t / 3.0 + t * t2 / 30.0 - t * t2 * t2 / 840.0, 0.5 - t2 / 8.0 + t2 * t2 / 144.0)
    } else {
        let (s, c) = t.sin_cos();
        let h = (0.5 * t).sin();
        ((c - s / t) / t, (s - 2.0 * h * h / t) / t)
    }
}

/// ∂δ/∂b for the branch selected by `theta_tol`.
pub fn jac_delta_body(b: &BodyMag, theta_tol: f64) -> Matrix3x2<f64> {
    let t = b.dtheta;
    match branch_of(b, theta_tol) {
        Branch::Arc => {
            let (a, c) = arc_coeffs(t);
            let h = (0.5 * t).sin();
            Matrix3x2::new(t.sin() / t, b.dl * a, 2.0 * h * h / t, b.dl * c, 0.0, 1.0)
        }
        Branch::Straight => {
            let (s, c) = (0.5 * t).sin_cos();
            Matrix3x2::new(c, -0.5 * b.dl * s, s, 0.5 * b.dl * c, 0.0, 1.0)
        }
    }
}

/// Δ_ik = Δ_ij ∘ δ_k in (p, θ) coordinates: Δp + ΔR δp, Δθ + δθ.
pub fn delta_compose(dij: &Vector3<f64>, dk: &Vector3<f64>) -> Vector3<f64> {
    let p = Vector2::new(dij.x, dij.y) + Rot2::from_angle(dij.z).rotate(&Vector2::new(dk.x, dk.y));
    Vector3::new(p.x, p.y, dij.z + dk.z)
}

/// (∂Δ_ik/∂Δ_ij, ∂Δ_ik/∂δ_k).
pub fn jac_delta_compose(dij: &Vector3<f64>, dk: &Vector3<f64>) -> (Matrix3<f64>, Matrix3<f64>) {
    let r = *Rot2::from_angle(dij.z).matrix();
    let c = r * skew1() * Vector2::new(dk.x, dk.y);
    let a = Matrix3::new(1.0, 0.0, c.x, 0.0, 1.0, c.y, 0.0, 0.0, 1.0);
    let b = Matrix3::new(r[(0, 0)], r[(0, 1)], 0.0, r[(1, 0)], r[(1, 1)], 0.0, 0.0, 0.0, 1.0);
    (a, b)
}

/// Q_n = diag(k_l|δψ_l| + α², k_r|δψ_r| + α²), α = ½(μ_l + μ_r).
pub fn encoder_noise_cov(y: &EncoderTick, np: &NoiseParams) -> Matrix2<f64> {
    let alpha = 0.5 * (np.mu_l + np.mu_r);
    let a2 = alpha * alpha;
    Matrix2::new(np.k_l * y.dpsi_l.abs() + a2, 0.0, 0.0, np.k_r * y.dpsi_r.abs() + a2)
}

/// Pose as (p, θ) coordinates.
pub fn pose_coords(x: &Pose2) -> Vector3<f64> {
    Vector3::new(x.t.x, x.t.y, x.angle())
}

pub fn pose_from_coords(v: &Vector3<f64>) -> Pose2 {
    Pose2::new(v.x, v.y, v.z)
}

/// Pre-integrated motion between two keyframes.
#[derive(Debug, Clone, PartialEq)]
pub struct PreintDelta {
    /// (Δp, Δθ), with Δθ accumulated without wrapping.
    pub delta: Vector3<f64>,
    pub q: Matrix3<f64>,
    /// ∂Δ/∂c at the linearization point `c_bar`.
    pub jc: Matrix3<f64>,
    pub c_bar: Calib,
    pub ticks: usize,
}

impl PreintDelta {
    pub fn identity(c_bar: Calib) -> Self {
        Self { delta: Vector3::zeros(), q: Matrix3::zeros(), jc: Matrix3::zeros(), c_bar, ticks: 0 }
    }

    pub fn as_pose(&self) -> Pose2 {
        pose_from_coords(&self.delta)
    }

    /// Folds one encoder tick into the running delta.
    pub fn push(&mut self, y: &EncoderTick, p: &WheelParams, np: &NoiseParams, theta_tol: f64) {
        let c = self.c_bar;
        let b = body_magnitudes(y, &c, p);
        let dk = delta_from_body(&b, theta_tol);
        let j_db = jac_delta_body(&b, theta_tol);
        let j_by = jac_body_y(&c, p);
        let q_b = j_by * encoder_noise_cov(y, np) * j_by.transpose() + np.q_s;
        let q_k = j_db * q_b * j_db.transpose();
        let (a, bm) = jac_delta_compose(&self.delta, &dk);
        let q = a * self.q * a.transpose() + bm * q_k * bm.transpose();
        self.q = 0.5 * (q + q.transpose());
        self.jc = a * self.jc + bm * j_db * jac_body_c(y, &c, p);
        self.delta = delta_compose(&self.delta, &dk);
        self.ticks += 1;
    }

    /// Δ ⊕ Jc (c − c̄), as (p, θ) coordinate addition.
    pub fn corrected(&self, c: &Calib) -> Vector3<f64> {
        self.delta + self.jc * (c.c - self.c_bar.c)
    }

    /// Upper Cholesky-type factor U with Uᵀ U = Q⁻¹.
    pub fn sqrt_info(&self) -> Result<Matrix3<f64>> {
        let q = self.q + Matrix3::identity() * INFO_REGULARIZATION;
        let info = q.try_inverse().ok_or(Error::Singular("pre-integrated covariance"))?;
        let l = nalgebra::Cholesky::new(0.5 * (info + info.transpose()))
            .ok_or(Error::NotPositiveSemiDefinite { min_eigenvalue: info.symmetric_eigenvalues().min() })?
            .l();
        Ok(l.transpose())
    }
}

/// Pre-integrates `ticks` at the calibration `c`.
pub fn preintegrate(ticks: &[EncoderTick], c: &Calib, p: &WheelParams, np: &NoiseParams, theta_tol: f64) -> Result<PreintDelta> {
    if ticks.is_empty() {
        return Err(Error::Invalid("pre-integration needs at least one tick".into()));
    }
    p.validate()?;
    c.validate()?;
    let mut d = PreintDelta::identity(*c);
    for y in ticks {
        if !(y.dpsi_l.is_finite() && y.dpsi_r.is_finite()) {
            return Err(Error::NonFinite("encoder tick"));
        }
        d.push(y, p, np, theta_tol);
    }
    Ok(d)
}

/// Raw (unwhitened) error [Δ̂p − Δp; wrap(Δ̂θ − Δθ)] with Δ̂ predicted from the two poses.
pub fn preint_error(xi: &Pose2, xj: &Pose2, c: &Calib, d: &PreintDelta) -> Vector3<f64> {
    let dp = xi.rot.transpose().rotate(&(xj.t - xi.t));
    let corr = d.corrected(c);
    Vector3::new(dp.x - corr.x, dp.y - corr.y, wrap_angle(xj.angle() - xi.angle() - corr.z))
}

/// Jacobians of [`preint_error`] wrt right-⊕ perturbations of X_i, X_j (in SE(2)) and
/// additive perturbations of c.
pub fn jac_preint_error(xi: &Pose2, xj: &Pose2, _c: &Calib, d: &PreintDelta) -> (Matrix3<f64>, Matrix3<f64>, Matrix3<f64>) {
    let dp = xi.rot.transpose().rotate(&(xj.t - xi.t));
    let s = -skew1() * dp;
    let ji = Matrix3::new(-1.0, 0.0, s.x, 0.0, -1.0, s.y, 0.0, 0.0, -1.0);
    let rij = *xi.rot.transpose().mul(&xj.rot).matrix();
    let jj = Matrix3::new(rij[(0, 0)], rij[(0, 1)], 0.0, rij[(1, 0)], rij[(1, 1)], 0.0, 0.0, 0.0, 1.0);
    (ji, jj, -d.jc)
}

/// Ω^{⊤/2} [Δ̂ − Δ].
pub fn preint_residual(xi: &Pose2, xj: &Pose2, c: &Calib, d: &PreintDelta) -> Result<Vector3<f64>> {
    Ok(d.sqrt_info()? * preint_error(xi, xj, c, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{jac_numeric, max_rel_error, Jac, FD_EPS};
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn wp() -> WheelParams {
        WheelParams::new(0.1, 0.1, 0.5).unwrap()
    }

    fn dv<const N: usize>(v: &nalgebra::SVector<f64, N>) -> DVector<f64> {
        DVector::from_column_slice(v.as_slice())
    }

    fn dm<const R: usize, const C: usize>(m: &nalgebra::SMatrix<f64, R, C>) -> Jac {
        Jac::from_column_slice(R, C, m.as_slice())
    }

    #[test]
    fn body_magnitude_values() {
        let p = WheelParams::new(0.2, 0.2, 0.6).unwrap();
        let c = Calib::nominal();
        let b = body_magnitudes(&EncoderTick::new(1.5, 1.5), &c, &p);
        assert_relative_eq!(b.dl, 0.3, epsilon = 1e-15);
        assert_eq!(b.dtheta, 0.0);
        let b = body_magnitudes(&EncoderTick::new(-1.5, 1.5), &c, &p);
        assert_eq!(b.dl, 0.0);
        assert_relative_eq!(b.dtheta, 2.0 * 0.2 * 1.5 / 0.6, epsilon = 1e-15);
        // hand computation: δl = ½(0.1·1.2 + 0.1·1.0) = 0.11, δθ = (0.12 − 0.10)/0.5 = 0.04
        let b = body_magnitudes(&EncoderTick::new(1.0, 1.2), &c, &wp());
        assert_relative_eq!(b.dl, 0.11, epsilon = 1e-15);
        assert_relative_eq!(b.dtheta, 0.04, epsilon = 1e-15);
    }

    #[test]
    fn body_jacobians_match_numeric() {
        let p = WheelParams::new(0.11, 0.095, 0.48).unwrap();
        let c = Calib::new(1.03, 0.97, 1.08);
        let y = EncoderTick::new(0.7, -0.3);
        let f_y = |v: &DVector<f64>| {
            let b = body_magnitudes(&EncoderTick::new(v[0], v[1]), &c, &p);
            DVector::from_vec(vec![b.dl, b.dtheta])
        };
        let num = jac_numeric(f_y, &DVector::from_vec(vec![y.dpsi_l, y.dpsi_r]), FD_EPS).unwrap();
        assert!(max_rel_error(&dm(&jac_body_y(&c, &p)), &num, 1e-9) < 1e-8);
        let f_c = |v: &DVector<f64>| {
            let b = body_magnitudes(&y, &Calib::new(v[0], v[1], v[2]), &p);
            DVector::from_vec(vec![b.dl, b.dtheta])
        };
        let jc = jac_body_c(&y, &c, &p);
        let num = jac_numeric(f_c, &dv(&c.c), FD_EPS).unwrap();
        assert!(max_rel_error(&dm(&jc), &num, 1e-9) < 1e-8);
        let dtheta = body_magnitudes(&y, &c, &p).dtheta;
        assert_eq!(jc[(0, 2)], 0.0);
        assert_relative_eq!(jc[(1, 2)], -dtheta / c.c_d(), epsilon = 1e-15);
        // c = 1 leaves the radii unscaled
        let j1 = jac_body_y(&Calib::nominal(), &wp());
        assert_relative_eq!(j1, Matrix2::new(0.05, 0.05, -0.2, 0.2), epsilon = 1e-15);
    }

    #[test]
    fn delta_branches() {
        let d = delta_from_body(&BodyMag { dl: 0.7, dtheta: 0.0 }, THETA_TOL);
        assert_eq!(d, Vector3::new(0.7, 0.0, 0.0));
        let d = delta_from_body(&BodyMag { dl: FRAC_PI_2, dtheta: FRAC_PI_2 }, THETA_TOL);
        assert_relative_eq!(d, Vector3::new(1.0, 1.0, FRAC_PI_2), epsilon = 1e-15);
        // the arc equals Exp([δl, 0, δθ]) in SE(2)
        let e = Pose2::from_twist(&crate::groups::Twist2::new(0.4, 0.0, 0.9));
        let d = delta_from_body(&BodyMag { dl: 0.4, dtheta: 0.9 }, THETA_TOL);
        assert_relative_eq!(d, pose_coords(&e), epsilon = 1e-15);
    }

    #[test]
    fn branch_continuity() {
        for dl in [0.01, 0.5, 2.0] {
            for s in [-1.0, 1.0] {
                let lo = BodyMag { dl, dtheta: s * THETA_TOL * (1.0 - 1e-9) };
                let hi = BodyMag { dl, dtheta: s * THETA_TOL * (1.0 + 1e-9) };
                assert_eq!(branch_of(&lo, THETA_TOL), Branch::Straight);
                assert_eq!(branch_of(&hi, THETA_TOL), Branch::Arc);
                assert!((delta_from_body(&lo, THETA_TOL) - delta_from_body(&hi, THETA_TOL)).amax() < 1e-12);
                // the two printed Jacobians differ by δl·δθ/12 in ∂δx/∂δθ
                let gap = (jac_delta_body(&lo, THETA_TOL) - jac_delta_body(&hi, THETA_TOL)).amax();
                assert!(gap < dl * THETA_TOL / 12.0 * 1.01 + 1e-12, "gap {gap}");
            }
        }
    }

    #[test]
    fn delta_jacobians_match_numeric() {
        for b in [
            BodyMag { dl: 0.3, dtheta: 0.8 },
            BodyMag { dl: -0.2, dtheta: -2.5 },
            BodyMag { dl: 0.4, dtheta: 3e-3 },
            BodyMag { dl: 0.3, dtheta: 2e-7 },
        ] {
            let f = |v: &DVector<f64>| dv(&delta_from_body(&BodyMag { dl: v[0], dtheta: v[1] }, THETA_TOL));
            let x = DVector::from_vec(vec![b.dl, b.dtheta]);
            // keep the perturbations inside one branch
            let eps = if b.dtheta.abs() < 1e-5 { 1e-8 } else { FD_EPS };
            let num = jac_numeric(f, &x, eps).unwrap();
            assert!(max_rel_error(&dm(&jac_delta_body(&b, THETA_TOL)), &num, 1e-9) < 1e-6, "{b:?}");
        }
        let straight = jac_delta_body(&BodyMag { dl: 1.0, dtheta: 0.0 }, THETA_TOL);
        assert_eq!(straight, Matrix3x2::new(1.0, 0.0, 0.0, 0.5, 0.0, 1.0));
        // printed arc formula at δθ = δl = π/2: R = 1
        let arc = jac_delta_body(&BodyMag { dl: FRAC_PI_2, dtheta: FRAC_PI_2 }, THETA_TOL);
        let t = FRAC_PI_2;
        let expected = Matrix3x2::new(t.sin() / t, t.cos() - t.sin() / t, (1.0 - t.cos()) / t, t.sin() - (1.0 - t.cos()) / t, 0.0, 1.0);
        assert_relative_eq!(arc, expected, epsilon = 1e-15);
    }

    #[test]
    fn composition() {
        let e = Vector3::zeros();
        let d = Vector3::new(0.3, -0.1, 0.4);
        assert_eq!(delta_compose(&e, &d), d);
        let a = Vector3::new(1.0, 2.0, 0.7);
        let via_se2 = pose_coords(&pose_from_coords(&a).mul(&pose_from_coords(&d)));
        assert_relative_eq!(delta_compose(&a, &d), via_se2, epsilon = 1e-15);
        let (ja, jb) = jac_delta_compose(&a, &d);
        let num_a = jac_numeric(|v: &DVector<f64>| dv(&delta_compose(&Vector3::new(v[0], v[1], v[2]), &d)), &dv(&a), FD_EPS).unwrap();
        let num_b = jac_numeric(|v: &DVector<f64>| dv(&delta_compose(&a, &Vector3::new(v[0], v[1], v[2]))), &dv(&d), FD_EPS).unwrap();
        assert!(max_rel_error(&dm(&ja), &num_a, 1e-9) < 1e-8);
        assert!(max_rel_error(&dm(&jb), &num_b, 1e-9) < 1e-8);
    }

    #[test]
    fn encoder_noise() {
        let y = EncoderTick::new(0.5, -0.2);
        assert_eq!(encoder_noise_cov(&y, &NoiseParams::noiseless()), Matrix2::zeros());
        let np = NoiseParams { k_l: 1e-4, k_r: 2e-4, mu_l: 1e-3, mu_r: 1e-3, q_s: Matrix2::zeros() };
        let q = encoder_noise_cov(&EncoderTick::new(0.0, 0.0), &np);
        assert_relative_eq!(q, Matrix2::identity() * 1e-6, epsilon = 1e-20);
        let q = encoder_noise_cov(&y, &np);
        assert_relative_eq!(q[(0, 0)], 5e-5 + 1e-6, epsilon = 1e-18);
        assert_relative_eq!(q[(1, 1)], 4e-5 + 1e-6, epsilon = 1e-18);
    }

    fn ticks() -> Vec<EncoderTick> {
        (0..60).map(|k| EncoderTick::new(0.5 + 0.3 * (0.2 * k as f64).sin(), 0.5 - 0.25 * (0.13 * k as f64).cos())).collect()
    }

    #[test]
    fn preintegration_basics() {
        let p = wp();
        let c = Calib::nominal();
        let zero = preintegrate(&[EncoderTick::new(0.0, 0.0); 5], &c, &p, &NoiseParams::noiseless(), THETA_TOL).unwrap();
        assert_eq!(zero.delta, Vector3::zeros());
        assert_eq!(zero.q, Matrix3::zeros());
        assert_eq!(zero.jc, Matrix3::zeros());
        let y = EncoderTick::new(0.8, 0.8);
        let one = preintegrate(&[y], &c, &p, &NoiseParams::noiseless(), THETA_TOL).unwrap();
        assert_eq!(one.delta, delta_from_body(&body_magnitudes(&y, &c, &p), THETA_TOL));
        assert!(preintegrate(&[], &c, &p, &NoiseParams::noiseless(), THETA_TOL).is_err());
    }

    #[test]
    fn preintegration_matches_se2_fold() {
        let p = wp();
        let c = Calib::new(1.02, 0.98, 1.05);
        let ts = ticks();
        let d = preintegrate(&ts, &c, &p, &NoiseParams::new(1e-4, 1e-4, 1e-3, 1e-3), THETA_TOL).unwrap();
        let mut x = Pose2::identity();
        for y in &ts {
            x = x.mul(&pose_from_coords(&delta_from_body(&body_magnitudes(y, &c, &p), THETA_TOL)));
        }
        assert!((x.t - Vector2::new(d.delta.x, d.delta.y)).amax() < 1e-12);
        assert!(wrap_angle(x.angle() - d.delta.z).abs() < 1e-12);
    }

    #[test]
    fn calibration_jacobian_matches_numeric() {
        let p = wp();
        let c = Calib::new(1.02, 0.98, 1.05);
        let ts = ticks();
        let np = NoiseParams::new(1e-4, 1e-4, 1e-3, 1e-3);
        let d = preintegrate(&ts, &c, &p, &np, THETA_TOL).unwrap();
        let f = |v: &DVector<f64>| {
            let di = preintegrate(&ts, &Calib::new(v[0], v[1], v[2]), &p, &np, THETA_TOL).unwrap();
            let mut e = di.delta - d.delta;
            e.z = wrap_angle(e.z);
            dv(&e)
        };
        let num = jac_numeric(f, &dv(&c.c), 1e-4 / 3f64.sqrt()).unwrap();
        assert!((dm(&d.jc) - num).amax() < 1e-6);
    }

    #[test]
    fn covariance_is_psd_and_grows() {
        let p = wp();
        let np = NoiseParams::new(1e-4, 1e-4, 1e-3, 1e-3);
        let mut d = PreintDelta::identity(Calib::nominal());
        let mut prev_tt = 0.0;
        for y in ticks() {
            let prev = d.q;
            let (a, _) = jac_delta_compose(&d.delta, &delta_from_body(&body_magnitudes(&y, &d.c_bar, &p), THETA_TOL));
            d.push(&y, &p, &np, THETA_TOL);
            assert!((d.q - d.q.transpose()).amax() == 0.0);
            assert!(d.q.symmetric_eigenvalues().min() > -1e-15);
            // the newly added uncertainty is PSD and heading variance never shrinks
            let added = d.q - a * prev * a.transpose();
            assert!(added.symmetric_eigenvalues().min() > -1e-15);
            assert!(d.q[(2, 2)] >= prev_tt);
            prev_tt = d.q[(2, 2)];
        }
    }

    #[test]
    fn residual_and_jacobians() {
        let p = wp();
        let np = NoiseParams::new(1e-4, 1e-4, 1e-3, 1e-3);
        let c = Calib::nominal();
        let d = preintegrate(&ticks(), &c, &p, &np, THETA_TOL).unwrap();
        let xi = Pose2::new(1.0, -2.0, 0.4);
        let xj = xi.mul(&d.as_pose());
        assert!(preint_residual(&xi, &xj, &c, &d).unwrap().amax() < 1e-6);
        assert!(preint_error(&xi, &xj, &c, &d).amax() < 1e-12);
        // wrap: a 2π + 0.1 heading gap reads as 0.1
        let xk = Pose2::from_parts(xj.rot.mul(&Rot2::from_angle(0.1)), xj.t);
        let mut d2 = d.clone();
        d2.delta.z -= 2.0 * PI;
        assert_relative_eq!(preint_error(&xi, &xk, &c, &d2).z, 0.1, epsilon = 1e-12);

        let xj = Pose2::new(2.5, -0.7, -1.9);
        let cc = Calib::new(1.01, 0.99, 1.02);
        let (ji, jj, jcc) = jac_preint_error(&xi, &xj, &cc, &d);
        let ni = jac_numeric(|x: &Pose2| dv(&preint_error(x, &xj, &cc, &d)), &xi, FD_EPS).unwrap();
        let nj = jac_numeric(|x: &Pose2| dv(&preint_error(&xi, x, &cc, &d)), &xj, FD_EPS).unwrap();
        let nc = jac_numeric(
            |v: &DVector<f64>| dv(&preint_error(&xi, &xj, &Calib::new(v[0], v[1], v[2]), &d)),
            &dv(&cc.c),
            FD_EPS,
        )
        .unwrap();
        assert!(max_rel_error(&dm(&ji), &ni, 1e-9) < 1e-7);
        assert!(max_rel_error(&dm(&jj), &nj, 1e-9) < 1e-7);
        assert!(max_rel_error(&dm(&jcc), &nc, 1e-9) < 1e-7);
    }
}
