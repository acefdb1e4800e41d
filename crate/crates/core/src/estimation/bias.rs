//! Odometry bias correction u = c(ũ, c) for the self-calibration problem.
//!
//! The bias c = (c_v, c_ω) offsets the forward velocity and the yaw rate. In the
//! planar twist (ρ₁, ρ₂, θ) these are components 0 and 2; in the spatial twist
//! (ρ, θ) components 0 and 5.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lie::{Jac, Tangent};

pub const BIAS_DIM: usize = 2;

/// Twist components affected by (c_v, c_ω).
pub fn bias_indices(twist_dim: usize) -> Result<(usize, usize)> {
    match twist_dim {
        3 => Ok((0, 2)),
        6 => Ok((0, 5)),
        n => Err(Error::Invalid(format!("no bias model for a {n}-dof twist"))),
    }
}

/// u = (ũ_v − c_v, ũ_s, ũ_ω − c_ω).
pub fn bias_correct(u_tilde: &Tangent, c: &DVector<f64>) -> Result<Tangent> {
    if c.len() != BIAS_DIM {
        return Err(Error::DimensionMismatch { expected: BIAS_DIM, actual: c.len() });
    }
    let (iv, iw) = bias_indices(u_tilde.len())?;
    let mut u = u_tilde.clone();
    u[iv] -= c[0];
    u[iw] -= c[1];
    Ok(u)
}

/// ∂u/∂c, e.g. [[−1, 0], [0, 0], [0, −1]] in 2D.
pub fn jac_bias_correct(twist_dim: usize) -> Result<Jac> {
    let (iv, iw) = bias_indices(twist_dim)?;
    let mut j = DMatrix::zeros(twist_dim, BIAS_DIM);
    j[(iv, 0)] = -1.0;
    j[(iw, 1)] = -1.0;
    Ok(j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{jac_numeric, FD_EPS};

    #[test]
    fn zero_bias_is_identity() {
        let u = Tangent::from_vec(vec![0.1, 0.01, 0.05]);
        assert_eq!(bias_correct(&u, &DVector::zeros(2)).unwrap(), u);
        let c = DVector::from_vec(vec![0.05, -0.02]);
        assert_eq!(bias_correct(&u, &c).unwrap(), Tangent::from_vec(vec![0.05, 0.01, 0.07]));
    }

    #[test]
    fn jacobian_matches_numeric() {
        let c = DVector::from_vec(vec![0.05, -0.02]);
        for n in [3, 6] {
            let u = Tangent::from_fn(n, |i, _| 0.1 * (i as f64 + 1.0));
            let num = jac_numeric(|c: &DVector<f64>| bias_correct(&u, c).unwrap(), &c, FD_EPS).unwrap();
            assert!((num - jac_bias_correct(n).unwrap()).amax() < 1e-9);
        }
        assert_eq!(
            jac_bias_correct(3).unwrap(),
            DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, 0.0, 0.0, -1.0])
        );
        assert!(bias_correct(&Tangent::zeros(4), &c).is_err());
    }
}
