//! Lie-group toolkit for state estimation: S¹/SO(2), S³/SO(3), SE(2), SE(3)
//! and ℝⁿ with right/left ⊕ ⊖, closed-form Jacobians, composite manifolds,
//! tangent-space uncertainty, ESKF/SAM estimators and differential-drive
//! preintegration.

pub mod audit;
pub mod cli;
pub mod error;
pub mod groups;
pub mod lie;
pub mod pipeline;
pub mod sim;
pub mod uncertainty;
pub mod composite;
pub mod diffdrive;
pub mod estimation;

pub use error::{Error, Result};
pub use lie::{Action, Jac, LieGroup, Manifold, Side, Tangent};
