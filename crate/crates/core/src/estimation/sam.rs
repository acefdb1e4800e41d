//! Smoothing and mapping as a factor graph over a composite state, solved by
//! Gauss–Newton on the normal equations with Levenberg damping on cost increase.

use nalgebra::{DMatrix, DVector};

use crate::composite::{jac_composite, BlockId, BlockJacobian, CompositeElement, GroupElement, GroupKind, Layout};
use crate::diffdrive::{jac_preint_error, preint_error, Calib, PreintDelta};
use crate::error::{Error, Result};
use crate::estimation::bias::{bias_correct, jac_bias_correct, BIAS_DIM};
use crate::estimation::eskf::{BeaconMeasurement, ControlInput};
use crate::groups::TransN;
use crate::lie::{check_dim, check_finite, Jac, Tangent};
use crate::uncertainty::{check_covariance, symmetrize};

/// What a factor measures and which blocks it connects.
#[derive(Debug, Clone, PartialEq)]
pub enum FactorKind {
    /// e = X̄ ⊖ X
    Prior { x: BlockId, measurement: GroupElement },
    /// e = u − (Xⱼ ⊖ Xᵢ)
    Motion { from: BlockId, to: BlockId, u: Tangent },
    /// e = y − Xᵢ⁻¹·b
    Beacon { pose: BlockId, beacon: BlockId, y: DVector<f64> },
    /// e = c(ũ, c) − (Xⱼ ⊖ Xᵢ)
    CalibratedMotion { bias: BlockId, from: BlockId, to: BlockId, u_tilde: Tangent },
    /// e = Δ̂ᵢⱼ − (Δᵢⱼ + Jc (c − c̄)), in (p, θ) coordinates
    PreintMotion { calib: BlockId, from: BlockId, to: BlockId, delta: PreintDelta },
}

/// A measurement with its information matrix Ω and the whitening factor U (UᵀU = Ω).
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub kind: FactorKind,
    pub omega: DMatrix<f64>,
    sqrt_info: DMatrix<f64>,
}

/// Ω^{⊤/2}: transpose of the lower Cholesky factor, so that ‖U e‖² = eᵀ Ω e.
pub fn sqrt_information(omega: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_covariance(omega, omega.nrows())?;
    let l = omega.clone().cholesky().ok_or(Error::Singular("information matrix"))?.l();
    Ok(l.transpose())
}

fn information_from_cov(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = cov.clone().cholesky().ok_or(Error::Singular("factor covariance"))?.inverse();
    Ok(symmetrize(&inv))
}

impl Factor {
    pub fn new(kind: FactorKind, omega: DMatrix<f64>) -> Result<Self> {
        let sqrt_info = sqrt_information(&omega)?;
        let f = Self { kind, omega, sqrt_info };
        check_dim(f.dim(), f.omega.nrows())?;
        Ok(f)
    }

    /// Same as [`Factor::new`] with Ω = Σ⁻¹.
    pub fn from_cov(kind: FactorKind, cov: &DMatrix<f64>) -> Result<Self> {
        Self::new(kind, information_from_cov(cov)?)
    }

    pub fn prior(x: BlockId, measurement: GroupElement, cov: &DMatrix<f64>) -> Result<Self> {
        Self::from_cov(FactorKind::Prior { x, measurement }, cov)
    }

    pub fn motion(from: BlockId, to: BlockId, ctrl: &ControlInput) -> Result<Self> {
        Self::from_cov(FactorKind::Motion { from, to, u: ctrl.u.clone() }, &ctrl.w)
    }

    pub fn beacon(pose: BlockId, beacon: BlockId, meas: &BeaconMeasurement) -> Result<Self> {
        Self::from_cov(FactorKind::Beacon { pose, beacon, y: meas.y.clone() }, &meas.n)
    }

    pub fn calibrated_motion(bias: BlockId, from: BlockId, to: BlockId, ctrl: &ControlInput) -> Result<Self> {
        Self::from_cov(FactorKind::CalibratedMotion { bias, from, to, u_tilde: ctrl.u.clone() }, &ctrl.w)
    }

    /// Ω = Q⁻¹ of the pre-integrated delta.
    pub fn preint_motion(calib: BlockId, from: BlockId, to: BlockId, delta: PreintDelta) -> Result<Self> {
        let u = delta.sqrt_info()?;
        let u = DMatrix::from_column_slice(3, 3, u.as_slice());
        let omega = symmetrize(&(u.transpose() * &u));
        Ok(Self { kind: FactorKind::PreintMotion { calib, from, to, delta }, omega, sqrt_info: u })
    }

    pub fn sqrt_info(&self) -> &DMatrix<f64> {
        &self.sqrt_info
    }

    /// Residual dimension.
    pub fn dim(&self) -> usize {
        match &self.kind {
            FactorKind::Prior { measurement, .. } => measurement.dof(),
            FactorKind::Motion { u, .. } => u.len(),
            FactorKind::Beacon { y, .. } => y.len(),
            FactorKind::CalibratedMotion { u_tilde, .. } => u_tilde.len(),
            FactorKind::PreintMotion { .. } => 3,
        }
    }

    /// Connected blocks, in the order their Jacobians are returned.
    pub fn blocks(&self) -> Vec<BlockId> {
        match &self.kind {
            FactorKind::Prior { x, .. } => vec![*x],
            FactorKind::Motion { from, to, .. } => vec![*from, *to],
            FactorKind::Beacon { pose, beacon, .. } => vec![*pose, *beacon],
            FactorKind::CalibratedMotion { bias, from, to, .. } => vec![*bias, *from, *to],
            FactorKind::PreintMotion { calib, from, to, .. } => vec![*calib, *from, *to],
        }
    }

    /// Checks that the handles resolve to blocks of the expected kinds.
    pub fn validate(&self, x: &CompositeElement) -> Result<()> {
        for id in self.blocks() {
            if x.get(id).is_none() {
                return Err(Error::LayoutMismatch(format!("factor refers to missing block {}", id.0)));
            }
        }
        let kind = |id: BlockId| x.block(id).kind();
        let expect = |id: BlockId, k: GroupKind| {
            if kind(id) == k {
                Ok(())
            } else {
                Err(Error::LayoutMismatch(format!("block {} is {:?}, expected {:?}", id.0, kind(id), k)))
            }
        };
        match &self.kind {
            FactorKind::Prior { x, measurement } => expect(*x, measurement.kind()),
            FactorKind::Motion { from, to, u } => {
                expect(*to, kind(*from))?;
                check_dim(kind(*from).dof(), u.len())
            }
            FactorKind::Beacon { pose, beacon, y } => {
                let d = x.block(*pose).point_dim();
                if d == 0 {
                    return Err(Error::LayoutMismatch(format!("block {} does not act on points", pose.0)));
                }
                expect(*beacon, GroupKind::Trans(d))?;
                check_dim(d, y.len())
            }
            FactorKind::CalibratedMotion { bias, from, to, u_tilde } => {
                expect(*bias, GroupKind::Trans(BIAS_DIM))?;
                expect(*to, kind(*from))?;
                check_dim(kind(*from).dof(), u_tilde.len())
            }
            FactorKind::PreintMotion { calib, from, to, .. } => {
                expect(*calib, GroupKind::Trans(3))?;
                expect(*from, GroupKind::Pose2)?;
                expect(*to, GroupKind::Pose2)
            }
        }
    }

    /// Unwhitened error e.
    pub fn error(&self, x: &CompositeElement) -> Result<DVector<f64>> {
        match &self.kind {
            FactorKind::Prior { x: id, measurement } => measurement.rminus(x.block(*id)),
            FactorKind::Motion { from, to, u } => Ok(u - x.block(*to).rminus(x.block(*from))?),
            FactorKind::Beacon { pose, beacon, y } => {
                let b = &trans(x, *beacon)?.v;
                Ok(y - x.block(*pose).inverse().act(b)?)
            }
            FactorKind::CalibratedMotion { bias, from, to, u_tilde } => {
                let u = bias_correct(u_tilde, &trans(x, *bias)?.v)?;
                Ok(u - x.block(*to).rminus(x.block(*from))?)
            }
            FactorKind::PreintMotion { calib, from, to, delta } => {
                let (xi, xj) = (pose2(x, *from)?, pose2(x, *to)?);
                let e = preint_error(xi, xj, &calib_of(x, *calib)?, delta);
                Ok(DVector::from_column_slice(e.as_slice()))
            }
        }
    }

    /// ∂e/∂Xₖ for each connected block, in [`Factor::blocks`] order.
    pub fn error_jacobians(&self, x: &CompositeElement) -> Result<Vec<(BlockId, Jac)>> {
        Ok(match &self.kind {
            FactorKind::Prior { x: id, measurement } => {
                let tau = measurement.rminus(x.block(*id))?;
                vec![(*id, -measurement.kind().jl_inv(&tau)?)]
            }
            FactorKind::Motion { from, to, .. } => motion_jacobians(x, *from, *to)?,
            FactorKind::Beacon { pose, beacon, .. } => {
                let xi = x.block(*pose);
                let b = &trans(x, *beacon)?.v;
                let xinv = xi.inverse();
                let jx = xinv.jac_act_x(b)? * xi.jac_inverse();
                vec![(*pose, -jx), (*beacon, -xinv.jac_act_p(b)?)]
            }
            FactorKind::CalibratedMotion { bias, from, to, u_tilde } => {
                let mut v = vec![(*bias, jac_bias_correct(u_tilde.len())?)];
                v.extend(motion_jacobians(x, *from, *to)?);
                v
            }
            FactorKind::PreintMotion { calib, from, to, delta } => {
                let (xi, xj) = (pose2(x, *from)?, pose2(x, *to)?);
                let (ji, jj, jc) = jac_preint_error(xi, xj, &calib_of(x, *calib)?, delta);
                let d = |m: nalgebra::Matrix3<f64>| DMatrix::from_column_slice(3, 3, m.as_slice());
                vec![(*calib, d(jc)), (*from, d(ji)), (*to, d(jj))]
            }
        })
    }

    /// r = U e.
    pub fn residual(&self, x: &CompositeElement) -> Result<DVector<f64>> {
        Ok(&self.sqrt_info * self.error(x)?)
    }

    /// ∂r/∂Xₖ = U ∂e/∂Xₖ.
    pub fn jacobians(&self, x: &CompositeElement) -> Result<Vec<(BlockId, Jac)>> {
        Ok(self.error_jacobians(x)?.into_iter().map(|(id, j)| (id, &self.sqrt_info * j)).collect())
    }
}

fn motion_jacobians(x: &CompositeElement, from: BlockId, to: BlockId) -> Result<Vec<(BlockId, Jac)>> {
    let (xi, xj) = (x.block(from), x.block(to));
    let tau = xj.rminus(xi)?;
    let k = xi.kind();
    Ok(vec![(from, k.jl_inv(&tau)?), (to, -k.jr_inv(&tau)?)])
}

fn trans(x: &CompositeElement, id: BlockId) -> Result<&TransN> {
    x.block(id).as_trans().ok_or_else(|| Error::LayoutMismatch(format!("block {} is not a vector block", id.0)))
}

fn pose2(x: &CompositeElement, id: BlockId) -> Result<&crate::groups::Pose2> {
    x.block(id).as_pose2().ok_or_else(|| Error::LayoutMismatch(format!("block {} is not a planar pose", id.0)))
}

fn calib_of(x: &CompositeElement, id: BlockId) -> Result<Calib> {
    let v = &trans(x, id)?.v;
    check_dim(3, v.len())?;
    Ok(Calib::new(v[0], v[1], v[2]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub max_iters: usize,
    /// Stop once ‖δx‖∞ falls below this.
    pub step_tol: f64,
    /// Stop once the relative cost decrease falls below this.
    pub rel_cost_tol: f64,
    /// Eigenvalues of JᵀJ below `rank_tol · λ_max` count as zero.
    pub rank_tol: f64,
    pub lambda_init: f64,
    pub lambda_max: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { max_iters: 50, step_tol: 1e-8, rel_cost_tol: 1e-12, rank_tol: 1e-10, lambda_init: 1e-6, lambda_max: 1e12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Cost after each accepted iteration, starting with the initial cost.
    pub cost_history: Vec<f64>,
    pub damped_steps: usize,
    /// Dimension of the null space of JᵀJ at the final state.
    pub nullity: usize,
}

impl SolveReport {
    /// Turns a rank-deficient or unconverged run into an error.
    pub fn check(&self) -> Result<()> {
        if self.nullity > 0 {
            return Err(Error::RankDeficient { nullity: self.nullity });
        }
        if !self.converged {
            return Err(Error::NotConverged { iterations: self.iterations });
        }
        Ok(())
    }
}

/// Eigen-decomposition based pseudo-inverse of a symmetric matrix.
fn pinv_sym(a: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, usize) {
    let eig = symmetrize(a).symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let tol = rel_tol * max;
    let mut nullity = 0;
    let inv = eig.eigenvalues.map(|v| {
        if v.abs() <= tol || max == 0.0 {
            nullity += 1;
            0.0
        } else {
            1.0 / v
        }
    });
    let v = &eig.eigenvectors;
    (v * DMatrix::from_diagonal(&inv) * v.transpose(), nullity)
}

/// Number of (relatively) zero eigenvalues of a symmetric PSD matrix.
pub fn nullity(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    if well_conditioned(a, rel_tol) {
        return 0;
    }
    pinv_sym(a, rel_tol).1
}

/// Cheap sufficient test for λ_min > rel_tol·λ_max, using λ_min ≥ 1/tr(A⁻¹)
/// and the Gershgorin bound on λ_max.
fn well_conditioned(a: &DMatrix<f64>, rel_tol: f64) -> bool {
    let n = a.nrows();
    if n == 0 {
        return true;
    }
    let Some(ch) = a.clone().cholesky() else { return false };
    let Some(linv) = ch.l().solve_lower_triangular(&DMatrix::identity(n, n)) else { return false };
    let tr_inv = linv.norm_squared();
    let lmax = a.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    tr_inv.is_finite() && 1.0 / tr_inv > rel_tol * lmax
}

/// Cholesky solve of A x = b, or `None` when a pivot is relatively negligible.
fn chol_solve(a: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> Option<DVector<f64>> {
    let max_d = a.diagonal().amax();
    let ch = a.clone().cholesky()?;
    let min_piv = ch.l_dirty().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v * v));
    if !(min_piv > rel_tol * max_d) {
        return None;
    }
    let x = ch.solve(b);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph {
    pub state: CompositeElement,
    pub factors: Vec<Factor>,
}

impl FactorGraph {
    pub fn new(state: CompositeElement, factors: Vec<Factor>) -> Result<Self> {
        for f in &factors {
            f.validate(&state)?;
        }
        Ok(Self { state, factors })
    }

    pub fn residual_layout(&self) -> Layout {
        Layout::new(self.factors.iter().map(Factor::dim).collect())
    }

    pub fn residuals(&self) -> Result<DVector<f64>> {
        let mut r = DVector::zeros(self.residual_layout().total());
        let mut off = 0;
        for f in &self.factors {
            let ri = f.residual(&self.state)?;
            r.rows_mut(off, ri.len()).copy_from(&ri);
            off += ri.len();
        }
        check_finite(r.as_slice(), "residual")?;
        Ok(r)
    }

    pub fn jacobian(&self) -> Result<BlockJacobian> {
        let mut blocks = Vec::new();
        for (i, f) in self.factors.iter().enumerate() {
            for (id, j) in f.jacobians(&self.state)? {
                blocks.push((BlockId(i), id, j));
            }
        }
        jac_composite(&self.residual_layout(), self.state.layout(), blocks)
    }

    /// ‖r‖².
    pub fn cost(&self) -> Result<f64> {
        Ok(self.residuals()?.norm_squared())
    }

    /// JᵀJ and Jᵀr, accumulated factor by factor.
    pub fn normal_equations(&self) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let l = self.state.layout();
        let n = l.total();
        let mut h = DMatrix::zeros(n, n);
        let mut g = DVector::zeros(n);
        for f in &self.factors {
            let r = f.residual(&self.state)?;
            let js = f.jacobians(&self.state)?;
            for (a, ja) in &js {
                let oa = l.offset(*a);
                let mut gv = g.rows_mut(oa, ja.ncols());
                gv += ja.transpose() * &r;
                for (b, jb) in &js {
                    let mut hv = h.view_mut((oa, l.offset(*b)), (ja.ncols(), jb.ncols()));
                    hv += ja.transpose() * jb;
                }
            }
        }
        check_finite(g.as_slice(), "gradient")?;
        Ok((h, g))
    }

    /// Information matrix JᵀJ.
    pub fn normal_matrix(&self) -> Result<DMatrix<f64>> {
        Ok(self.normal_equations()?.0)
    }

    /// Null-space dimension of JᵀJ at the current state.
    pub fn nullity(&self, rel_tol: f64) -> Result<usize> {
        Ok(nullity(&self.normal_matrix()?, rel_tol))
    }

    /// δx* = −(JᵀJ + λI)⁺ Jᵀ r.
    pub fn step(&self, lambda: f64, rel_tol: f64) -> Result<Tangent> {
        let (h, g) = self.normal_equations()?;
        Ok(solve_normal(&h, &g, lambda, rel_tol))
    }

    /// Gauss–Newton, falling back to Levenberg damping only when a step increases the cost.
    pub fn solve(&mut self, opts: &SolveOptions) -> Result<SolveReport> {
        let mut cost = self.cost()?;
        let mut report = SolveReport {
            iterations: 0,
            converged: false,
            initial_cost: cost,
            final_cost: cost,
            cost_history: vec![cost],
            damped_steps: 0,
            nullity: 0,
        };
        for it in 1..=opts.max_iters {
            report.iterations = it;
            let (h, g) = self.normal_equations()?;
            let mut lambda = 0.0;
            let (dx, cand, new_cost) = loop {
                let dx = solve_normal(&h, &g, lambda, opts.rank_tol);
                let cand = self.state.dplus(&dx)?;
                let new_cost = FactorGraph { state: cand.clone(), factors: Vec::new() }.cost_with(&self.factors)?;
                let small = dx.amax() < opts.step_tol;
                if new_cost <= cost || small {
                    break (dx, cand, new_cost);
                }
                lambda = if lambda == 0.0 { opts.lambda_init } else { lambda * 10.0 };
                report.damped_steps += 1;
                if lambda > opts.lambda_max {
                    report.nullity = self.nullity(opts.rank_tol)?;
                    return Ok(report);
                }
            };
            let small = dx.amax() < opts.step_tol;
            if new_cost <= cost {
                self.state = cand;
                let decrease = cost - new_cost;
                cost = new_cost;
                report.final_cost = cost;
                report.cost_history.push(cost);
                if small || decrease <= opts.rel_cost_tol * report.cost_history[report.cost_history.len() - 2] {
                    report.converged = true;
                    break;
                }
            } else if small {
                report.converged = true;
                break;
            }
        }
        report.nullity = self.nullity(opts.rank_tol)?;
        Ok(report)
    }

    fn cost_with(&self, factors: &[Factor]) -> Result<f64> {
        let mut c = 0.0;
        for f in factors {
            c += f.residual(&self.state)?.norm_squared();
        }
        if !c.is_finite() {
            return Err(Error::NonFinite("cost"));
        }
        Ok(c)
    }

    /// Tangent-space covariance (JᵀJ)⁻¹ of the whole state.
    pub fn marginal_covariance(&self) -> Result<DMatrix<f64>> {
        let a = self.normal_matrix()?;
        let n = nullity(&a, SolveOptions::default().rank_tol);
        if n > 0 {
            return Err(Error::RankDeficient { nullity: n });
        }
        let inv = a.cholesky().ok_or(Error::Singular("normal matrix"))?.inverse();
        Ok(symmetrize(&inv))
    }

    /// Covariance block of one state block.
    pub fn block_covariance(&self, id: BlockId) -> Result<DMatrix<f64>> {
        self.state.layout().check_id(id)?;
        let cov = self.marginal_covariance()?;
        let (o, d) = (self.state.layout().offset(id), self.state.layout().dof(id));
        Ok(cov.view((o, o), (d, d)).into_owned())
    }
}

fn solve_normal(h: &DMatrix<f64>, g: &DVector<f64>, lambda: f64, rel_tol: f64) -> Tangent {
    let mut a = h.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += lambda;
    }
    if let Some(x) = chol_solve(&a, g, rel_tol) {
        return -x;
    }
    let (pinv, _) = pinv_sym(&a, rel_tol);
    -(pinv * g)
}

/// Beacon observation from a given pose.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub pose: usize,
    pub meas: BeaconMeasurement,
}

/// A SAM problem over a pose chain and point beacons, in 2D or 3D.
#[derive(Debug, Clone, PartialEq)]
pub struct SamProblem {
    pub prior: GroupElement,
    pub prior_cov: DMatrix<f64>,
    /// Odometry between consecutive poses; biased when `self_calibrate` is set.
    pub controls: Vec<ControlInput>,
    pub observations: Vec<Observation>,
    pub num_beacons: usize,
    pub self_calibrate: bool,
}

/// Where each unknown lives in the composite state.
#[derive(Debug, Clone, PartialEq)]
pub struct SamIndex {
    pub bias: Option<BlockId>,
    pub poses: Vec<BlockId>,
    pub beacons: Vec<BlockId>,
}

impl SamProblem {
    pub fn num_poses(&self) -> usize {
        self.controls.len() + 1
    }

    /// Builds the graph, initializing poses by dead reckoning from the prior and each
    /// beacon by back-projecting its first observation.
    pub fn build(&self, with_prior: bool) -> Result<(FactorGraph, SamIndex)> {
        let dof = self.prior.dof();
        let pd = self.prior.point_dim();
        let mut blocks = Vec::new();
        let bias = self.self_calibrate.then(|| {
            blocks.push(TransN::zeros(BIAS_DIM).into());
            BlockId(0)
        });
        let mut x = self.prior.clone();
        let first = blocks.len();
        blocks.push(x.clone());
        for c in &self.controls {
            check_dim(dof, c.u.len())?;
            x = x.rplus(&c.u)?;
            blocks.push(x.clone());
        }
        let poses: Vec<BlockId> = (first..blocks.len()).map(BlockId).collect();
        let mut beacon_init: Vec<Option<DVector<f64>>> = vec![None; self.num_beacons];
        for o in &self.observations {
            let id = o.meas.beacon_id;
            let slot = beacon_init
                .get_mut(id)
                .ok_or_else(|| Error::Invalid(format!("beacon {id} out of range")))?;
            let pose = blocks
                .get(first + o.pose)
                .filter(|_| o.pose < poses.len())
                .ok_or_else(|| Error::Invalid(format!("pose {} out of range", o.pose)))?;
            if slot.is_none() {
                *slot = Some(pose.act(&o.meas.y)?);
            }
        }
        let bfirst = blocks.len();
        for (k, b) in beacon_init.into_iter().enumerate() {
            let b = b.ok_or_else(|| Error::Invalid(format!("beacon {k} is never observed")))?;
            check_dim(pd, b.len())?;
            blocks.push(TransN::new(b).into());
        }
        let beacons: Vec<BlockId> = (bfirst..blocks.len()).map(BlockId).collect();

        let mut factors = Vec::new();
        if with_prior {
            factors.push(Factor::prior(poses[0], self.prior.clone(), &self.prior_cov)?);
        }
        for (i, c) in self.controls.iter().enumerate() {
            factors.push(match bias {
                Some(b) => Factor::calibrated_motion(b, poses[i], poses[i + 1], c)?,
                None => Factor::motion(poses[i], poses[i + 1], c)?,
            });
        }
        for o in &self.observations {
            factors.push(Factor::beacon(poses[o.pose], beacons[o.meas.beacon_id], &o.meas)?);
        }
        let graph = FactorGraph::new(CompositeElement::new(blocks), factors)?;
        Ok((graph, SamIndex { bias, poses, beacons }))
    }

    /// The problem restricted to the first `len` controls and the observations they reach.
    pub fn prefix(&self, len: usize) -> Self {
        let len = len.min(self.controls.len());
        Self {
            controls: self.controls[..len].to_vec(),
            observations: self.observations.iter().filter(|o| o.pose <= len).cloned().collect(),
            ..self.clone()
        }
    }

    /// Shortest prefix in which every beacon has been observed.
    fn first_complete_prefix(&self) -> usize {
        let mut first = vec![usize::MAX; self.num_beacons];
        for o in &self.observations {
            if let Some(f) = first.get_mut(o.meas.beacon_id) {
                *f = (*f).min(o.pose);
            }
        }
        first.into_iter().max().unwrap_or(0).min(self.controls.len())
    }

    /// Solves growing prefixes of `window` more controls at a time, seeding each stage with
    /// the previous solution and dead reckoning (bias-corrected) beyond it. The returned
    /// report is that of the final, full problem.
    pub fn solve_incremental(&self, window: usize, opts: &SolveOptions) -> Result<(FactorGraph, SamIndex, SolveReport)> {
        let n = self.controls.len();
        let window = window.max(1);
        let mut len = self.first_complete_prefix().max(window).min(n);
        let mut prev: Option<(FactorGraph, SamIndex)> = None;
        loop {
            let sub = self.prefix(len);
            let (mut g, idx) = sub.build(true)?;
            if let Some((pg, pidx)) = &prev {
                g.state = sub.warm_start(&g.state, &idx, pg, pidx)?;
            }
            let rep = g.solve(opts)?;
            if len == n {
                return Ok((g, idx, rep));
            }
            prev = Some((g, idx));
            len = (len + window).min(n);
        }
    }

    fn warm_start(&self, state: &CompositeElement, idx: &SamIndex, prev: &FactorGraph, pidx: &SamIndex) -> Result<CompositeElement> {
        let mut s = state.clone();
        let bias = match (idx.bias, pidx.bias) {
            (Some(b), Some(pb)) => {
                let v = prev.state.block(pb).clone();
                s = s.with_block(b, v.clone())?;
                v.as_trans().map(|t| t.v.clone())
            }
            _ => None,
        };
        for (k, id) in pidx.poses.iter().enumerate() {
            s = s.with_block(idx.poses[k], prev.state.block(*id).clone())?;
        }
        let mut x = prev.state.block(*pidx.poses.last().expect("at least one pose")).clone();
        for k in pidx.poses.len()..idx.poses.len() {
            let u = &self.controls[k - 1].u;
            let u = match &bias {
                Some(c) => bias_correct(u, c)?,
                None => u.clone(),
            };
            x = x.rplus(&u)?;
            s = s.with_block(idx.poses[k], x.clone())?;
        }
        for (k, id) in pidx.beacons.iter().enumerate() {
            s = s.with_block(idx.beacons[k], prev.state.block(*id).clone())?;
        }
        Ok(s)
    }
}
