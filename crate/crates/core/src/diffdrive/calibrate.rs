//! Joint estimation of the wheel calibration and the keyframe poses from encoder
//! ticks and pose anchors, by re-preintegrating around the current estimate.

use nalgebra::{DMatrix, Matrix3};

use super::{preintegrate, Calib, EncoderTick, NoiseParams, WheelParams, THETA_TOL};
use crate::composite::{BlockId, CompositeElement, GroupElement};
use crate::error::{Error, Result};
use crate::estimation::sam::{Factor, FactorGraph, SolveOptions};
use crate::groups::{Pose2, TransN};
use crate::uncertainty::check_covariance;

/// Observed pose after the first `tick` encoder ticks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub tick: usize,
    pub pose: Pose2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibProblem {
    pub ticks: Vec<EncoderTick>,
    /// One keyframe per anchor, in increasing tick order.
    pub anchors: Vec<Anchor>,
    pub anchor_cov: Matrix3<f64>,
    pub params: WheelParams,
    pub noise: NoiseParams,
    pub c_init: Calib,
    /// Optional Gaussian prior on c.
    pub c_prior: Option<(Calib, Matrix3<f64>)>,
    pub theta_tol: f64,
}

impl CalibProblem {
    pub fn new(ticks: Vec<EncoderTick>, anchors: Vec<Anchor>, anchor_cov: Matrix3<f64>, params: WheelParams, noise: NoiseParams) -> Self {
        Self { ticks, anchors, anchor_cov, params, noise, c_init: Calib::nominal(), c_prior: None, theta_tol: THETA_TOL }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.noise.validate()?;
        self.c_init.validate()?;
        if self.anchors.len() < 2 {
            return Err(Error::Invalid("calibration needs at least two anchors".into()));
        }
        for w in self.anchors.windows(2) {
            if w[1].tick <= w[0].tick {
                return Err(Error::Invalid("anchors must have strictly increasing tick indices".into()));
            }
        }
        let last = self.anchors[self.anchors.len() - 1].tick;
        if last > self.ticks.len() {
            return Err(Error::Invalid(format!("anchor at tick {last} beyond the {} recorded ticks", self.ticks.len())));
        }
        check_covariance(&dmat(&self.anchor_cov), 3)?;
        if let Some((c, cov)) = &self.c_prior {
            c.validate()?;
            check_covariance(&dmat(cov), 3)?;
        }
        if !(self.theta_tol > 0.0) {
            return Err(Error::Invalid("theta_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibOptions {
    pub solve: SolveOptions,
    pub max_outer: usize,
    /// Stop re-linearizing once ‖ĉ − c̄‖∞ falls below this.
    pub outer_tol: f64,
}

impl Default for CalibOptions {
    fn default() -> Self {
        Self { solve: SolveOptions::default(), max_outer: 20, outer_tol: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibReport {
    pub calib: Calib,
    /// Marginal covariance of c; `None` when c is not fully observable.
    pub cov: Option<Matrix3<f64>>,
    pub poses: Vec<Pose2>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub final_cost: f64,
    pub converged: bool,
    pub nullity: usize,
}

fn dmat(m: &Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(3, 3, m.as_slice())
}

/// Builds the graph ⟨c, X₀, …, Xₙ⟩ with pre-integrated motion between consecutive
/// keyframes and an anchor prior on every keyframe, linearized at `c_bar`.
pub fn build_graph(p: &CalibProblem, c_bar: &Calib, poses: &[Pose2]) -> Result<FactorGraph> {
    let calib = BlockId(0);
    let mut blocks: Vec<GroupElement> = vec![TransN::from_slice(c_bar.c.as_slice()).into()];
    blocks.extend(poses.iter().map(|x| GroupElement::from(*x)));
    let mut factors = Vec::new();
    if let Some((c0, cov)) = &p.c_prior {
        factors.push(Factor::prior(calib, TransN::from_slice(c0.c.as_slice()).into(), &dmat(cov))?);
    }
    let anchor_cov = dmat(&p.anchor_cov);
    for (k, a) in p.anchors.iter().enumerate() {
        factors.push(Factor::prior(BlockId(k + 1), a.pose.into(), &anchor_cov)?);
    }
    for (k, w) in p.anchors.windows(2).enumerate() {
        let d = preintegrate(&p.ticks[w[0].tick..w[1].tick], c_bar, &p.params, &p.noise, p.theta_tol)?;
        factors.push(Factor::preint_motion(calib, BlockId(k + 1), BlockId(k + 2), d)?);
    }
    FactorGraph::new(CompositeElement::new(blocks), factors)
}

fn calib_block(x: &CompositeElement) -> Calib {
    let v = &x.block(BlockId(0)).as_trans().expect("calibration block").v;
    Calib::new(v[0], v[1], v[2])
}

/// Alternates pre-integration at c̄ with Gauss–Newton on ⟨c, X⟩ until c̄ settles.
pub fn calibrate(p: &CalibProblem, opts: &CalibOptions) -> Result<CalibReport> {
    p.validate()?;
    let mut c_bar = p.c_init;
    let mut poses: Vec<Pose2> = p.anchors.iter().map(|a| a.pose).collect();
    let mut inner = 0;
    let mut outer = 0;
    loop {
        outer += 1;
        let mut g = build_graph(p, &c_bar, &poses)?;
        let rep = g.solve(&opts.solve)?;
        inner += rep.iterations;
        let c = calib_block(&g.state);
        c.validate()?;
        poses = g.state.blocks()[1..].iter().map(|b| *b.as_pose2().expect("pose block")).collect();
        let moved = (c.c - c_bar.c).amax();
        c_bar = c;
        if moved < opts.outer_tol || outer >= opts.max_outer {
            // Final linearization exactly at ĉ.
            let g = build_graph(p, &c_bar, &poses)?;
            let nullity = g.nullity(opts.solve.rank_tol)?;
            let cov = if nullity == 0 {
                let b = g.block_covariance(BlockId(0))?;
                Some(Matrix3::from_column_slice(b.as_slice()))
            } else {
                None
            };
            return Ok(CalibReport {
                calib: c_bar,
                cov,
                poses,
                outer_iterations: outer,
                inner_iterations: inner,
                final_cost: g.cost()?,
                converged: rep.converged && moved < opts.outer_tol.max(1e-9),
                nullity,
            });
        }
    }
}
