//! End-to-end drivers shared by the command line, the tests and the Python
//! bindings: each turns a dataset into a per-step estimate table and a summary.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::composite::{BlockId, GroupElement};
use crate::diffdrive::calibrate::{build_graph, calibrate, CalibOptions};
use crate::error::{Error, Result};
use crate::estimation::eskf::{eskf_correct, eskf_predict, BeaconMeasurement, ControlInput};
use crate::estimation::sam::{Observation, SamProblem, SolveOptions};
use crate::groups::{Pose2, Pose3};
use crate::lie::Action;
use crate::sim::{self, calib_problem, pose_header, pose_row, tangent_header, Dataset, Scenario};
use crate::uncertainty::GaussianState;

/// Controls added per warm-started SAM stage.
pub const SAM_WINDOW: usize = 20;

/// Numeric table with a fixed header.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Summary {
    pub command: String,
    pub dim: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outer_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nullity: Option<usize>,
    pub rmse_position: f64,
    pub rmse_rotation: f64,
    pub terminal_error: f64,
    pub mean_nees: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias_sigma: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias_truth: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration_sigma: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration_truth: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct RunOutput {
    pub summary: Summary,
    pub estimates: Table,
    /// Additional named tables (e.g. beacon estimates).
    pub extra: Vec<(String, Table)>,
    /// Set when the run finished but did not meet its convergence or rank requirements.
    pub failure: Option<Error>,
}

/// The dataset named by the scenario, or a fresh simulation of it.
pub fn load_or_simulate(sc: &Scenario) -> Result<Dataset> {
    match &sc.dataset {
        Some(dir) => Dataset::read(std::path::Path::new(dir)),
        None => sim::simulate(sc),
    }
}

/// Pose types the generic drivers can run on.
pub trait PoseType: Action {
    fn from_element(x: &GroupElement) -> Option<Self>;
}

impl PoseType for Pose2 {
    fn from_element(x: &GroupElement) -> Option<Self> {
        x.as_pose2().copied()
    }
}

impl PoseType for Pose3 {
    fn from_element(x: &GroupElement) -> Option<Self> {
        x.as_pose3().copied()
    }
}

fn estimate_header(lead: &[&str], dim: usize) -> Vec<String> {
    let mut h: Vec<String> = lead.iter().map(|s| s.to_string()).collect();
    h.extend(pose_header(dim).iter().map(|s| s.to_string()));
    h.extend(tangent_header(dim).iter().map(|s| format!("var_{s}")));
    h.push("nees".into());
    h
}

fn nees(err: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    match cov.clone().cholesky() {
        Some(c) => (err.transpose() * c.inverse() * err)[(0, 0)],
        None => f64::NAN,
    }
}

/// Position and rotation error magnitudes of `est` against `truth`.
fn pose_errors(truth: &GroupElement, est: &GroupElement, dim: usize) -> Result<(f64, f64)> {
    let (a, b) = (pose_row(truth), pose_row(est));
    let dp = (0..dim).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt();
    let e = truth.rminus(est)?;
    let dr = e.rows(dim, e.len() - dim).norm();
    Ok((dp, dr))
}

struct Errors {
    pos2: f64,
    rot2: f64,
    nees: f64,
    n_nees: usize,
    count: usize,
}

impl Errors {
    fn new() -> Self {
        Self { pos2: 0.0, rot2: 0.0, nees: 0.0, n_nees: 0, count: 0 }
    }

    fn add(&mut self, dp: f64, dr: f64, nees: f64) {
        self.pos2 += dp * dp;
        self.rot2 += dr * dr;
        self.count += 1;
        if nees.is_finite() {
            self.nees += nees;
            self.n_nees += 1;
        }
    }

    fn fill(&self, s: &mut Summary) {
        let n = self.count.max(1) as f64;
        s.rmse_position = (self.pos2 / n).sqrt();
        s.rmse_rotation = (self.rot2 / n).sqrt();
        s.mean_nees = if self.n_nees > 0 { self.nees / self.n_nees as f64 } else { f64::NAN };
    }
}

fn base_summary(command: &str, ds: &Dataset) -> Summary {
    Summary { command: command.into(), dim: ds.scenario.dim, seed: ds.scenario.seed, ..Default::default() }
}

/// Error-state Kalman filter over the whole dataset.
pub fn run_eskf(ds: &Dataset) -> Result<RunOutput> {
    ds.validate()?;
    match ds.scenario.dim {
        2 => eskf_generic::<Pose2>(ds),
        _ => eskf_generic::<Pose3>(ds),
    }
}

fn eskf_generic<G: PoseType>(ds: &Dataset) -> Result<RunOutput>
where
    GroupElement: From<G>,
{
    let sc = &ds.scenario;
    let dim = sc.dim;
    let pose = |x: &GroupElement| G::from_element(x).ok_or_else(|| Error::Invalid("pose type does not match dim".into()));
    let mut by_pose: BTreeMap<usize, Vec<&sim::MeasurementRecord>> = BTreeMap::new();
    for m in &ds.measurements {
        by_pose.entry(m.pose).or_default().push(m);
    }
    let (w, n) = (sc.control_cov(), sc.meas_cov());
    let mut state = GaussianState::local(pose(&ds.prior_mean)?, sc.prior_cov())?;
    let mut table = Table { header: estimate_header(&["step", "t"], dim), rows: Vec::new() };
    let mut errs = Errors::new();
    let mut terminal = 0.0;
    for (k, truth) in ds.truth.iter().enumerate() {
        if k > 0 {
            state = eskf_predict(&state, &ControlInput::new(ds.controls[k - 1].clone(), w.clone())?)?;
        }
        for m in by_pose.get(&k).into_iter().flatten() {
            let meas = BeaconMeasurement::new(m.beacon, m.y.clone(), n.clone())?;
            state = eskf_correct(&state, &meas, &ds.beacons[m.beacon])?;
        }
        let est = GroupElement::from(state.mean.clone());
        let e = truth.rminus(&est)?;
        let q = nees(&e, &state.cov);
        let (dp, dr) = pose_errors(truth, &est, dim)?;
        errs.add(dp, dr, q);
        terminal = e.norm();
        let mut row = vec![k as f64, k as f64 * sc.dt];
        row.extend(pose_row(&est));
        row.extend(state.cov.diagonal().iter());
        row.push(q);
        table.rows.push(row);
    }
    let mut summary = base_summary("eskf", ds);
    errs.fill(&mut summary);
    summary.terminal_error = terminal;
    summary.iterations = Some(ds.truth.len() - 1);
    Ok(RunOutput { summary, estimates: table, extra: Vec::new(), failure: None })
}

/// SAM problem of a dataset; biased odometry when `self_calibrate` is set.
pub fn sam_problem(ds: &Dataset, self_calibrate: bool) -> Result<SamProblem> {
    let w = ds.scenario.control_cov();
    let n = ds.scenario.meas_cov();
    let controls = ds.controls.iter().map(|u| ControlInput::new(u.clone(), w.clone())).collect::<Result<Vec<_>>>()?;
    let observations = ds
        .measurements
        .iter()
        .map(|m| Ok(Observation { pose: m.pose, meas: BeaconMeasurement::new(m.beacon, m.y.clone(), n.clone())? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(SamProblem {
        prior: ds.prior_mean.clone(),
        prior_cov: ds.scenario.prior_cov(),
        controls,
        observations,
        num_beacons: ds.beacons.len(),
        self_calibrate,
    })
}

/// Batch smoothing and mapping, optionally estimating the odometry bias.
pub fn run_sam(ds: &Dataset, self_calibrate: bool, opts: &SolveOptions) -> Result<RunOutput> {
    ds.validate()?;
    let dim = ds.scenario.dim;
    let (graph, idx, report) = sam_problem(ds, self_calibrate)?.solve_incremental(SAM_WINDOW, opts)?;
    let cov = if report.nullity == 0 { graph.marginal_covariance().ok() } else { None };
    let block_cov = |id: BlockId| -> Option<DMatrix<f64>> {
        let c = cov.as_ref()?;
        let l = graph.state.layout();
        let (o, d) = (l.offset(id), l.dof(id));
        Some(c.view((o, o), (d, d)).into_owned())
    };
    let mut table = Table { header: estimate_header(&["pose", "t"], dim), rows: Vec::new() };
    let mut errs = Errors::new();
    let mut terminal = 0.0;
    for (k, id) in idx.poses.iter().enumerate() {
        let est = graph.state.block(*id);
        let truth = &ds.truth[k];
        let e = truth.rminus(est)?;
        let c = block_cov(*id);
        let q = c.as_ref().map_or(f64::NAN, |c| nees(&e, c));
        let (dp, dr) = pose_errors(truth, est, dim)?;
        errs.add(dp, dr, q);
        terminal = e.norm();
        let mut row = vec![k as f64, k as f64 * ds.scenario.dt];
        row.extend(pose_row(est));
        match &c {
            Some(c) => row.extend(c.diagonal().iter()),
            None => row.extend(std::iter::repeat_n(f64::NAN, est.dof())),
        }
        row.push(q);
        table.rows.push(row);
    }
    let axes = ["x", "y", "z"];
    let mut bh = vec!["id".to_string()];
    bh.extend(axes[..dim].iter().map(|a| a.to_string()));
    bh.extend(axes[..dim].iter().map(|a| format!("var_{a}")));
    let mut beacons = Table { header: bh, rows: Vec::new() };
    for (k, id) in idx.beacons.iter().enumerate() {
        let b = &graph.state.block(*id).as_trans().expect("beacon block").v;
        let mut row = vec![k as f64];
        row.extend(b.iter());
        match block_cov(*id) {
            Some(c) => row.extend(c.diagonal().iter()),
            None => row.extend(std::iter::repeat_n(f64::NAN, dim)),
        }
        beacons.rows.push(row);
    }
    let mut summary = base_summary(if self_calibrate { "selfcal" } else { "sam" }, ds);
    errs.fill(&mut summary);
    summary.terminal_error = terminal;
    summary.converged = Some(report.converged);
    summary.iterations = Some(report.iterations);
    summary.initial_cost = Some(report.initial_cost);
    summary.final_cost = Some(report.final_cost);
    summary.residual_dim = Some(graph.residual_layout().total());
    summary.nullity = Some(report.nullity);
    if let Some(b) = idx.bias {
        summary.bias = Some(graph.state.block(b).as_trans().expect("bias block").v.iter().copied().collect());
        summary.bias_sigma = block_cov(b).map(|c| c.diagonal().iter().map(|v| v.sqrt()).collect());
        summary.bias_truth = Some(ds.scenario.bias.to_vec());
    }
    Ok(RunOutput { summary, estimates: table, extra: vec![("beacons".into(), beacons)], failure: report.check().err() })
}

/// Differential-drive intrinsic calibration from the encoder and anchor logs.
pub fn run_ddcalib(ds: &Dataset, opts: &CalibOptions) -> Result<RunOutput> {
    let cfg = ds.scenario.diffdrive.as_ref().ok_or_else(|| Error::Invalid("the config has no diffdrive section".into()))?;
    let data = ds.diffdrive.as_ref().ok_or_else(|| Error::Invalid("the dataset has no encoder log".into()))?;
    let problem = calib_problem(cfg, data)?;
    let rep = calibrate(&problem, opts)?;
    let cov = if rep.nullity == 0 { build_graph(&problem, &rep.calib, &rep.poses)?.marginal_covariance().ok() } else { None };
    let mut table = Table { header: estimate_header(&["keyframe", "t"], 2), rows: Vec::new() };
    let mut errs = Errors::new();
    let mut terminal = 0.0;
    for (k, (anchor, est)) in problem.anchors.iter().zip(&rep.poses).enumerate() {
        let est_el = GroupElement::from(*est);
        let c = cov.as_ref().map(|c| c.view((3 + 3 * k, 3 + 3 * k), (3, 3)).into_owned());
        let truth = data.truth.get(anchor.tick).map(|(_, p)| GroupElement::from(*p));
        let (q, dp, dr) = match &truth {
            Some(t) => {
                let e = t.rminus(&est_el)?;
                terminal = e.norm();
                let (dp, dr) = pose_errors(t, &est_el, 2)?;
                (c.as_ref().map_or(f64::NAN, |c| nees(&e, c)), dp, dr)
            }
            None => (f64::NAN, f64::NAN, f64::NAN),
        };
        if truth.is_some() {
            errs.add(dp, dr, q);
        }
        let t = data.anchors[k].0;
        let mut row = vec![k as f64, t];
        row.extend(pose_row(&est_el));
        match &c {
            Some(c) => row.extend(c.diagonal().iter()),
            None => row.extend([f64::NAN; 3]),
        }
        row.push(q);
        table.rows.push(row);
    }
    let mut summary = base_summary("ddcalib", ds);
    errs.fill(&mut summary);
    summary.terminal_error = terminal;
    summary.converged = Some(rep.converged);
    summary.iterations = Some(rep.inner_iterations);
    summary.outer_iterations = Some(rep.outer_iterations);
    summary.final_cost = Some(rep.final_cost);
    summary.nullity = Some(rep.nullity);
    summary.calibration = Some(rep.calib.c.iter().copied().collect());
    summary.calibration_sigma = rep.cov.map(|c| c.diagonal().iter().map(|v| v.sqrt()).collect());
    summary.calibration_truth = Some(cfg.calib.to_vec());
    let failure = if rep.nullity > 0 {
        Some(Error::RankDeficient { nullity: rep.nullity })
    } else if !rep.converged {
        Some(Error::NotConverged { iterations: rep.outer_iterations })
    } else {
        None
    };
    Ok(RunOutput { summary, estimates: table, extra: Vec::new(), failure })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate, DiffDriveConfig};

    #[test]
    fn noiseless_eskf_tracks_exactly() {
        for dim in [2, 3] {
            let ds = simulate(&Scenario { dim, noiseless: true, steps: 50, ..Default::default() }).unwrap();
            let out = run_eskf(&ds).unwrap();
            assert!(out.summary.terminal_error < 1e-9, "{dim}: {}", out.summary.terminal_error);
            assert_eq!(out.estimates.rows.len(), 51);
            assert_eq!(out.estimates.header.len(), out.estimates.rows[0].len());
        }
    }

    #[test]
    fn sam_and_selfcal_converge() {
        let sc = Scenario {
            steps: 2,
            dt: 1.0,
            observations: Some(vec![[0, 0], [0, 1], [1, 1], [1, 2], [2, 2]]),
            seed: 4,
            ..Default::default()
        };
        let out = run_sam(&simulate(&sc).unwrap(), false, &SolveOptions::default()).unwrap();
        assert!(out.failure.is_none(), "{:?}", out.failure);
        assert_eq!(out.summary.converged, Some(true));
        let sc = Scenario { bias: [0.05, -0.02], noiseless: true, ..sc };
        let out = run_sam(&simulate(&sc).unwrap(), true, &SolveOptions::default()).unwrap();
        let b = out.summary.bias.unwrap();
        assert!((b[0] - 0.05).abs() < 1e-6 && (b[1] + 0.02).abs() < 1e-6, "{b:?}");
    }

    #[test]
    fn ddcalib_recovers_noiseless_calibration() {
        let sc = Scenario { noiseless: true, steps: 1, diffdrive: Some(DiffDriveConfig::default()), ..Default::default() };
        let out = run_ddcalib(&simulate(&sc).unwrap(), &CalibOptions::default()).unwrap();
        assert!(out.failure.is_none());
        let c = out.summary.calibration.unwrap();
        for (a, b) in c.iter().zip([1.02, 0.98, 1.05]) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
