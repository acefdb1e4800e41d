//! Synthetic scenarios: a robot driving a twist schedule among point beacons,
//! optionally with a differential-drive encoder log, plus CSV/JSON persistence.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::composite::GroupElement;
use crate::diffdrive::{
    body_magnitudes, delta_compose, delta_from_body, encoder_noise_cov, pose_coords, pose_from_coords, Anchor, Calib, CalibProblem,
    EncoderTick, NoiseParams, WheelParams, THETA_TOL,
};
use crate::error::{Error, Result};
use crate::groups::{Pose2, Pose3, Rot3};
use crate::lie::Tangent;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma_v: f64,
    pub sigma_s: f64,
    pub sigma_w: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_z: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { sigma_v: 0.1, sigma_s: 0.1, sigma_w: 0.1, sigma_x: 0.01, sigma_y: 0.01, sigma_z: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trajectory {
    FigureEight,
    Straight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffDriveConfig {
    pub ticks: usize,
    pub dt: f64,
    pub r_l: f64,
    pub r_r: f64,
    pub d: f64,
    /// True calibration used to generate the ticks.
    pub calib: [f64; 3],
    pub c_init: [f64; 3],
    pub trajectory: Trajectory,
    pub speed: f64,
    pub anchor_every: usize,
    pub anchor_sigma: [f64; 3],
    pub k_l: f64,
    pub k_r: f64,
    pub mu_l: f64,
    pub mu_r: f64,
    pub slip_var: f64,
}

impl Default for DiffDriveConfig {
    fn default() -> Self {
        Self {
            ticks: 500,
            dt: 0.02,
            r_l: 0.1,
            r_r: 0.1,
            d: 0.5,
            calib: [1.02, 0.98, 1.05],
            c_init: [1.0, 1.0, 1.0],
            trajectory: Trajectory::FigureEight,
            speed: 0.5,
            anchor_every: 50,
            anchor_sigma: [1e-3, 1e-3, 1e-3],
            k_l: 1e-5,
            k_r: 1e-5,
            mu_l: 1e-4,
            mu_r: 1e-4,
            slip_var: crate::diffdrive::DEFAULT_SLIP_VAR,
        }
    }
}

impl DiffDriveConfig {
    pub fn params(&self) -> Result<WheelParams> {
        WheelParams::new(self.r_l, self.r_r, self.d)
    }

    pub fn noise(&self) -> NoiseParams {
        NoiseParams { k_l: self.k_l, k_r: self.k_r, mu_l: self.mu_l, mu_r: self.mu_r, q_s: Matrix2::identity() * self.slip_var }
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        self.noise().validate()?;
        Calib::new(self.calib[0], self.calib[1], self.calib[2]).validate()?;
        Calib::new(self.c_init[0], self.c_init[1], self.c_init[2]).validate()?;
        if self.ticks == 0 || self.anchor_every == 0 || !(self.dt > 0.0) || !self.speed.is_finite() {
            return Err(Error::Invalid("diffdrive needs ticks > 0, anchor_every > 0, dt > 0 and a finite speed".into()));
        }
        if self.anchor_sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Invalid("anchor_sigma must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JacCheckConfig {
    pub trials: usize,
    pub tolerance: f64,
    pub inject_faults: Vec<String>,
}

impl Default for JacCheckConfig {
    fn default() -> Self {
        Self { trials: crate::audit::DEFAULT_TRIALS, tolerance: crate::audit::DEFAULT_TOLERANCE, inject_faults: Vec::new() }
    }
}

/// One JSON document describing a synthetic run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub dim: usize,
    pub seed: u64,
    pub steps: usize,
    pub dt: f64,
    /// Forward speed and yaw rate, used when `twist` is absent.
    pub v: f64,
    pub w: f64,
    /// Constant body twist per second (3 or 6 entries).
    pub twist: Option<Vec<f64>>,
    pub noise: NoiseConfig,
    /// Generate measurements without noise; filters still use the configured covariances.
    pub noiseless: bool,
    pub beacons: Option<Vec<Vec<f64>>>,
    /// (pose, beacon) pairs observed; every beacon from every pose when absent.
    pub observations: Option<Vec<[usize; 2]>>,
    /// Constant odometry bias (c_v, c_ω) added to the controls.
    pub bias: [f64; 2],
    pub initial_pose: Option<Vec<f64>>,
    pub prior_sigma: Option<Vec<f64>>,
    pub diffdrive: Option<DiffDriveConfig>,
    pub jaccheck: JacCheckConfig,
    /// Read this dataset directory instead of simulating.
    pub dataset: Option<String>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            dim: 2,
            seed: 0,
            steps: 200,
            dt: 0.1,
            v: 1.0,
            w: 0.5,
            twist: None,
            noise: NoiseConfig::default(),
            noiseless: false,
            beacons: None,
            observations: None,
            bias: [0.0, 0.0],
            initial_pose: None,
            prior_sigma: None,
            diffdrive: None,
            jaccheck: JacCheckConfig::default(),
            dataset: None,
        }
    }
}

impl Scenario {
    pub fn from_json(s: &str) -> Result<Self> {
        let sc: Self = serde_json::from_str(s).map_err(|e| Error::Invalid(format!("config: {e}")))?;
        Ok(sc)
    }

    /// Tangent dimension of the robot pose.
    pub fn dof(&self) -> usize {
        if self.dim == 3 { 6 } else { 3 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::Invalid(format!("dim must be 2 or 3, got {}", self.dim)));
        }
        if self.steps == 0 || !(self.dt > 0.0) {
            return Err(Error::Invalid("steps must be positive and dt > 0".into()));
        }
        let n = &self.noise;
        let mut sig = vec![n.sigma_v, n.sigma_s, n.sigma_w, n.sigma_x, n.sigma_y];
        if self.dim == 3 {
            sig.push(n.sigma_z);
        }
        if sig.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Invalid("noise standard deviations must be positive".into()));
        }
        let tw = self.twist_per_second();
        if tw.len() != self.dof() || tw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("twist must have {} finite entries", self.dof())));
        }
        for b in self.beacon_positions() {
            if b.len() != self.dim || b.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("beacons must have {} finite coordinates", self.dim)));
            }
        }
        if self.beacon_positions().is_empty() {
            return Err(Error::Invalid("at least one beacon is required".into()));
        }
        for [i, k] in self.observation_pairs() {
            if i > self.steps || k >= self.beacon_positions().len() {
                return Err(Error::Invalid(format!("observation ({i}, {k}) out of range")));
            }
        }
        if !self.bias.iter().all(|v| v.is_finite()) {
            return Err(Error::Invalid("bias must be finite".into()));
        }
        if let Some(p) = &self.initial_pose {
            pose_from_row(self.dim, p)?;
        }
        let ps = self.prior_sigmas();
        if ps.len() != self.dof() || ps.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Invalid(format!("prior_sigma must have {} positive entries", self.dof())));
        }
        if let Some(d) = &self.diffdrive {
            d.validate()?;
        }
        Ok(())
    }

    pub fn twist_per_second(&self) -> Vec<f64> {
        match &self.twist {
            Some(t) => t.clone(),
            None if self.dim == 3 => vec![self.v, 0.0, 0.1 * self.v, 0.05, 0.0, self.w],
            None => vec![self.v, 0.0, self.w],
        }
    }

    pub fn beacon_positions(&self) -> Vec<Vec<f64>> {
        match &self.beacons {
            Some(b) => b.clone(),
            None if self.dim == 3 => vec![vec![2.0, 0.0, 0.5], vec![2.0, 1.0, -0.5], vec![2.0, -1.0, 1.0]],
            None => vec![vec![2.0, 0.0], vec![2.0, 1.0], vec![2.0, -1.0]],
        }
    }

    pub fn observation_pairs(&self) -> Vec<[usize; 2]> {
        match &self.observations {
            Some(o) => o.clone(),
            None => {
                let nb = self.beacon_positions().len();
                (0..=self.steps).flat_map(|i| (0..nb).map(move |k| [i, k])).collect()
            }
        }
    }

    pub fn prior_sigmas(&self) -> Vec<f64> {
        self.prior_sigma.clone().unwrap_or_else(|| vec![0.01; self.dof()])
    }

    /// W = diag(σ_v², σ_s², σ_w²)·δt, with σ_s on both lateral axes and σ_w on every rotation axis in 3D.
    pub fn control_cov(&self) -> DMatrix<f64> {
        let n = &self.noise;
        let d: Vec<f64> = if self.dim == 3 {
            vec![n.sigma_v, n.sigma_s, n.sigma_s, n.sigma_w, n.sigma_w, n.sigma_w]
        } else {
            vec![n.sigma_v, n.sigma_s, n.sigma_w]
        };
        DMatrix::from_diagonal(&DVector::from_iterator(d.len(), d.iter().map(|s| s * s * self.dt)))
    }

    /// N = diag(σ_x², σ_y²[, σ_z²]).
    pub fn meas_cov(&self) -> DMatrix<f64> {
        let n = &self.noise;
        let d = [n.sigma_x, n.sigma_y, n.sigma_z];
        DMatrix::from_diagonal(&DVector::from_iterator(self.dim, d[..self.dim].iter().map(|s| s * s)))
    }

    pub fn prior_cov(&self) -> DMatrix<f64> {
        let s = self.prior_sigmas();
        DMatrix::from_diagonal(&DVector::from_iterator(s.len(), s.iter().map(|v| v * v)))
    }

    pub fn initial(&self) -> Result<GroupElement> {
        match &self.initial_pose {
            Some(p) => pose_from_row(self.dim, p),
            None => pose_from_row(self.dim, &vec![0.0; self.dof()]),
        }
    }

    /// Twist positions of (c_v, c_ω).
    fn bias_indices(&self) -> (usize, usize) {
        if self.dim == 3 { (0, 5) } else { (0, 2) }
    }
}

/// Pose as a CSV row: (x, y, θ) or (x, y, z, rotation vector).
pub fn pose_row(x: &GroupElement) -> Vec<f64> {
    match x {
        GroupElement::Pose2(p) => vec![p.x(), p.y(), p.angle()],
        GroupElement::Pose3(p) => {
            let r = p.rot.to_rotation_vector();
            vec![p.t.x, p.t.y, p.t.z, r.x, r.y, r.z]
        }
        other => other.log().iter().copied().collect(),
    }
}

pub fn pose_from_row(dim: usize, row: &[f64]) -> Result<GroupElement> {
    if row.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pose"));
    }
    match (dim, row.len()) {
        (2, 3) => Ok(Pose2::new(row[0], row[1], row[2]).into()),
        (3, 6) => Ok(Pose3::from_parts(Rot3::from_rotation_vector(&Vector3::new(row[3], row[4], row[5])), Vector3::new(row[0], row[1], row[2])).into()),
        _ => Err(Error::Invalid(format!("a {dim}D pose needs {} values, got {}", if dim == 3 { 6 } else { 3 }, row.len()))),
    }
}

pub fn pose_header(dim: usize) -> Vec<&'static str> {
    if dim == 3 { vec!["x", "y", "z", "rx", "ry", "rz"] } else { vec!["x", "y", "theta"] }
}

pub fn tangent_header(dim: usize) -> Vec<&'static str> {
    if dim == 3 {
        vec!["rho_x", "rho_y", "rho_z", "theta_x", "theta_y", "theta_z"]
    } else {
        vec!["rho_x", "rho_y", "theta"]
    }
}

fn control_header(dim: usize) -> Vec<&'static str> {
    if dim == 3 { vec!["u_x", "u_y", "u_z", "u_rx", "u_ry", "u_rz"] } else { vec!["u_v", "u_s", "u_w"] }
}

const POINT_AXES: [&str; 3] = ["x", "y", "z"];

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub pose: usize,
    pub beacon: usize,
    pub y: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffDriveData {
    /// (end time, tick)
    pub ticks: Vec<(f64, EncoderTick)>,
    pub anchors: Vec<(f64, Pose2)>,
    /// Pose after each tick, starting at t = 0.
    pub truth: Vec<(f64, Pose2)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub scenario: Scenario,
    pub truth: Vec<GroupElement>,
    /// Initial estimate, drawn from the prior around the true start.
    pub prior_mean: GroupElement,
    /// Measured odometry ũ between consecutive poses.
    pub controls: Vec<Tangent>,
    pub beacons: Vec<DVector<f64>>,
    pub measurements: Vec<MeasurementRecord>,
    pub diffdrive: Option<DiffDriveData>,
}

fn gaussian(rng: &mut ChaCha8Rng, cov: &DMatrix<f64>) -> Result<DVector<f64>> {
    crate::uncertainty::sample_tangent(cov, rng)
}

/// Generates a dataset deterministically from the scenario and its seed.
pub fn simulate(sc: &Scenario) -> Result<Dataset> {
    sc.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let noisy = !sc.noiseless;
    let x0 = sc.initial()?;
    let prior_mean = if noisy { x0.rplus(&gaussian(&mut rng, &sc.prior_cov())?)? } else { x0.clone() };

    let u_true = Tangent::from_iterator(sc.dof(), sc.twist_per_second().iter().map(|v| v * sc.dt));
    let w = sc.control_cov();
    let (iv, iw) = sc.bias_indices();
    let mut truth = vec![x0];
    let mut controls = Vec::with_capacity(sc.steps);
    for _ in 0..sc.steps {
        let next = truth[truth.len() - 1].rplus(&u_true)?;
        truth.push(next);
        let mut u = u_true.clone();
        u[iv] += sc.bias[0];
        u[iw] += sc.bias[1];
        if noisy {
            u += gaussian(&mut rng, &w)?;
        }
        controls.push(u);
    }

    let beacons: Vec<DVector<f64>> = sc.beacon_positions().into_iter().map(DVector::from_vec).collect();
    let n = sc.meas_cov();
    let mut measurements = Vec::new();
    for [i, k] in sc.observation_pairs() {
        let mut y = truth[i].inverse().act(&beacons[k])?;
        if noisy {
            y += gaussian(&mut rng, &n)?;
        }
        measurements.push(MeasurementRecord { pose: i, beacon: k, y });
    }

    let diffdrive = match &sc.diffdrive {
        Some(d) => Some(simulate_diffdrive(d, noisy, &mut rng)?),
        None => None,
    };
    Ok(Dataset { scenario: sc.clone(), truth, prior_mean, controls, beacons, measurements, diffdrive })
}

/// Wheel increments that realize the body motion (δl, δθ) under calibration `c`.
pub fn ticks_for_body(dl: f64, dtheta: f64, c: &Calib, p: &WheelParams) -> EncoderTick {
    let dd = p.d * c.c_d();
    let right = dl + 0.5 * dd * dtheta;
    let left = dl - 0.5 * dd * dtheta;
    EncoderTick::new(left / (p.r_l * c.c_l()), right / (p.r_r * c.c_r()))
}

/// Noise-free body increments of the configured trajectory.
pub fn body_schedule(cfg: &DiffDriveConfig) -> Vec<(f64, f64)> {
    let total = cfg.ticks as f64 * cfg.dt;
    // Two opposite full turns: ∫ ω over each half period is ±2π.
    let w0 = 2.0 * PI * PI / total;
    (0..cfg.ticks)
        .map(|k| {
            let t = (k as f64 + 0.5) * cfg.dt;
            let w = match cfg.trajectory {
                Trajectory::FigureEight => w0 * (2.0 * PI * t / total).sin(),
                Trajectory::Straight => 0.0,
            };
            (cfg.speed * cfg.dt, w * cfg.dt)
        })
        .collect()
}

fn simulate_diffdrive(cfg: &DiffDriveConfig, noisy: bool, rng: &mut ChaCha8Rng) -> Result<DiffDriveData> {
    let p = cfg.params()?;
    let c = Calib::new(cfg.calib[0], cfg.calib[1], cfg.calib[2]);
    let np = cfg.noise();
    let mut x = Vector3::zeros();
    let mut truth = vec![(0.0, pose_from_coords(&x))];
    let mut ticks = Vec::with_capacity(cfg.ticks);
    for (k, (dl, dth)) in body_schedule(cfg).into_iter().enumerate() {
        let y = ticks_for_body(dl, dth, &c, &p);
        let t = (k + 1) as f64 * cfg.dt;
        x = delta_compose(&x, &delta_from_body(&body_magnitudes(&y, &c, &p), THETA_TOL));
        truth.push((t, pose_from_coords(&x)));
        let y = if noisy {
            let q = encoder_noise_cov(&y, &np);
            let n: Vector2<f64> = Vector2::new(rng.sample::<f64, _>(StandardNormal) * q[(0, 0)].sqrt(), rng.sample::<f64, _>(StandardNormal) * q[(1, 1)].sqrt());
            EncoderTick::new(y.dpsi_l + n.x, y.dpsi_r + n.y)
        } else {
            y
        };
        ticks.push((t, y));
    }
    let mut anchors = Vec::new();
    for k in (0..=cfg.ticks).step_by(cfg.anchor_every) {
        let (t, pose) = truth[k];
        let pose = if noisy {
            let s = cfg.anchor_sigma;
            let e = Vector3::new(
                s[0] * rng.sample::<f64, _>(StandardNormal),
                s[1] * rng.sample::<f64, _>(StandardNormal),
                s[2] * rng.sample::<f64, _>(StandardNormal),
            );
            pose_from_coords(&(pose_coords(&pose) + e))
        } else {
            pose
        };
        anchors.push((t, pose));
    }
    Ok(DiffDriveData { ticks, anchors, truth })
}

/// Maps anchor times onto tick counts and assembles the calibration problem.
pub fn calib_problem(cfg: &DiffDriveConfig, data: &DiffDriveData) -> Result<CalibProblem> {
    let ticks: Vec<EncoderTick> = data.ticks.iter().map(|(_, y)| *y).collect();
    let mut anchors = Vec::new();
    for (t, pose) in &data.anchors {
        let k = data.ticks.iter().take_while(|(tt, _)| *tt <= t + 1e-9).count();
        anchors.push(Anchor { tick: k, pose: *pose });
    }
    let s = cfg.anchor_sigma;
    let mut p = CalibProblem::new(ticks, anchors, Matrix3::from_diagonal(&Vector3::new(s[0] * s[0], s[1] * s[1], s[2] * s[2])), cfg.params()?, cfg.noise());
    p.c_init = Calib::new(cfg.c_init[0], cfg.c_init[1], cfg.c_init[2]);
    Ok(p)
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Invalid(format!("{}: {e}", path.display()))
}

/// Writes rows of numbers under a fixed header.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string())).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a numeric CSV, checking the header exactly.
pub fn read_csv(path: &Path, header: &[String]) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let got: Vec<String> = r.headers().map_err(|e| io_err(path, e))?.iter().map(str::to_owned).collect();
    if got != header {
        return Err(io_err(path, format!("expected header {}, found {}", header.join(","), got.join(","))));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let row: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| io_err(path, e))?);
    }
    Ok(rows)
}

pub fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

fn with_prefix(prefix: &[&str], rest: &[&str]) -> Vec<String> {
    prefix.iter().chain(rest).map(|s| s.to_string()).collect()
}

fn point_header(lead: &[&str], prefix: &str, dim: usize) -> Vec<String> {
    let mut h = header(lead);
    h.extend(POINT_AXES[..dim].iter().map(|a| format!("{prefix}{a}")));
    h
}

pub const ENCODER_HEADER: [&str; 3] = ["t", "dpsi_l", "dpsi_r"];
pub const ANCHOR_HEADER: [&str; 4] = ["t", "x", "y", "theta"];

impl Dataset {
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let dim = self.scenario.dim;
        let mut sc = self.scenario.clone();
        sc.dataset = None;
        let json = serde_json::to_string_pretty(&sc).map_err(|e| io_err(dir, e))?;
        fs::write(dir.join("scenario.json"), json + "\n").map_err(|e| io_err(dir, e))?;
        let dt = self.scenario.dt;
        let pose_h = with_prefix(&["step", "t"], &pose_header(dim));
        let rows: Vec<Vec<f64>> =
            self.truth.iter().enumerate().map(|(i, x)| [vec![i as f64, i as f64 * dt], pose_row(x)].concat()).collect();
        write_csv(&dir.join("truth.csv"), &pose_h, &rows)?;
        write_csv(&dir.join("prior.csv"), &pose_h, &[[vec![0.0, 0.0], pose_row(&self.prior_mean)].concat()])?;
        let rows: Vec<Vec<f64>> =
            self.controls.iter().enumerate().map(|(i, u)| [vec![(i + 1) as f64], u.iter().copied().collect()].concat()).collect();
        write_csv(&dir.join("controls.csv"), &with_prefix(&["step"], &control_header(dim)), &rows)?;
        let rows: Vec<Vec<f64>> =
            self.beacons.iter().enumerate().map(|(k, b)| [vec![k as f64], b.iter().copied().collect()].concat()).collect();
        write_csv(&dir.join("beacons.csv"), &point_header(&["id"], "", dim), &rows)?;
        let rows: Vec<Vec<f64>> = self
            .measurements
            .iter()
            .map(|m| [vec![m.pose as f64, m.beacon as f64], m.y.iter().copied().collect()].concat())
            .collect();
        write_csv(&dir.join("measurements.csv"), &point_header(&["step", "beacon"], "y_", dim), &rows)?;
        if let Some(d) = &self.diffdrive {
            let rows: Vec<Vec<f64>> = d.ticks.iter().map(|(t, y)| vec![*t, y.dpsi_l, y.dpsi_r]).collect();
            write_csv(&dir.join("encoders.csv"), &header(&ENCODER_HEADER), &rows)?;
            let pose_rows = |v: &[(f64, Pose2)]| v.iter().map(|(t, p)| vec![*t, p.x(), p.y(), p.angle()]).collect::<Vec<_>>();
            write_csv(&dir.join("anchors.csv"), &header(&ANCHOR_HEADER), &pose_rows(&d.anchors))?;
            write_csv(&dir.join("dd_truth.csv"), &header(&ANCHOR_HEADER), &pose_rows(&d.truth))?;
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let p = dir.join("scenario.json");
        let text = fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
        let scenario = Scenario::from_json(&text)?;
        scenario.validate()?;
        let dim = scenario.dim;
        let pose_h = with_prefix(&["step", "t"], &pose_header(dim));
        let poses = |rows: Vec<Vec<f64>>| -> Result<Vec<GroupElement>> { rows.iter().map(|r| pose_from_row(dim, &r[2..])).collect() };
        let truth = poses(read_csv(&dir.join("truth.csv"), &pose_h)?)?;
        let prior_mean = poses(read_csv(&dir.join("prior.csv"), &pose_h)?)?
            .into_iter()
            .next()
            .ok_or_else(|| Error::Invalid("prior.csv is empty".into()))?;
        let controls = read_csv(&dir.join("controls.csv"), &with_prefix(&["step"], &control_header(dim)))?
            .into_iter()
            .map(|r| Tangent::from_column_slice(&r[1..]))
            .collect();
        let beacons = read_csv(&dir.join("beacons.csv"), &point_header(&["id"], "", dim))?
            .into_iter()
            .map(|r| DVector::from_column_slice(&r[1..]))
            .collect();
        let measurements = read_csv(&dir.join("measurements.csv"), &point_header(&["step", "beacon"], "y_", dim))?
            .into_iter()
            .map(|r| MeasurementRecord { pose: r[0] as usize, beacon: r[1] as usize, y: DVector::from_column_slice(&r[2..]) })
            .collect();
        let diffdrive = if scenario.diffdrive.is_some() {
            let ticks = read_csv(&dir.join("encoders.csv"), &header(&ENCODER_HEADER))?
                .into_iter()
                .map(|r| (r[0], EncoderTick::new(r[1], r[2])))
                .collect();
            let pose_rows = |rows: Vec<Vec<f64>>| rows.into_iter().map(|r| (r[0], Pose2::new(r[1], r[2], r[3]))).collect::<Vec<_>>();
            let anchors = pose_rows(read_csv(&dir.join("anchors.csv"), &header(&ANCHOR_HEADER))?);
            let truth_path = dir.join("dd_truth.csv");
            let truth = if truth_path.exists() { pose_rows(read_csv(&truth_path, &header(&ANCHOR_HEADER))?) } else { Vec::new() };
            Some(DiffDriveData { ticks, anchors, truth })
        } else {
            None
        };
        let ds = Dataset { scenario, truth, prior_mean, controls, beacons, measurements, diffdrive };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let sc = &self.scenario;
        if self.truth.len() != self.controls.len() + 1 {
            return Err(Error::Invalid("truth must have one more row than controls".into()));
        }
        for u in &self.controls {
            if u.len() != sc.dof() {
                return Err(Error::DimensionMismatch { expected: sc.dof(), actual: u.len() });
            }
        }
        for m in &self.measurements {
            if m.pose >= self.truth.len() || m.beacon >= self.beacons.len() || m.y.len() != sc.dim {
                return Err(Error::Invalid(format!("measurement of beacon {} from pose {} is out of range", m.beacon, m.pose)));
            }
        }
        Ok(())
    }
}
