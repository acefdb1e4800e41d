//! Pose estimation with beacons: an error-state Kalman filter and factor-graph
//! smoothing, optionally self-calibrating an odometry bias.

pub mod bias;
pub mod eskf;
pub mod sam;

pub use bias::{bias_correct, jac_bias_correct};
pub use eskf::{eskf_correct, eskf_predict, BeaconMeasurement, ControlInput};
pub use sam::{Factor, FactorGraph, FactorKind, Observation, SamIndex, SamProblem, SolveOptions, SolveReport};
