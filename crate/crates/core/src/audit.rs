//! Conformance audit: every closed-form Jacobian block against central finite
//! differences over seeded random inputs.

use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::composite::{jac_composite, BlockId, CompositeElement, GroupElement};
use crate::diffdrive::{
    body_magnitudes, delta_compose, delta_from_body, jac_body_c, jac_body_y, jac_delta_body, jac_delta_compose, jac_preint_error,
    preint_error, preintegrate, BodyMag, Calib, EncoderTick, NoiseParams, WheelParams, THETA_TOL,
};
use crate::error::Result;
use crate::estimation::bias::{bias_correct, jac_bias_correct};
use crate::estimation::eskf::{expected_measurement, measurement_jacobian, prediction_jacobians};
use crate::estimation::sam::{Factor, FactorKind};
use crate::groups::{Pose2, Pose3, Rot2, Rot3, TransN, UnitComplex, UnitQuaternion};
use crate::lie::{jac_numeric, jac_numeric_sided, max_rel_error, to_dmat, to_dvec, Action, Jac, LieGroup, Manifold, Side, Tangent, FD_EPS};

pub const DEFAULT_TRIALS: usize = 100;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;
/// Absolute floor of the relative error denominator.
pub const ERROR_FLOOR: f64 = 1e-9;

type Eval = Box<dyn Fn(&mut ChaCha8Rng) -> Result<(Jac, Jac)>>;

/// One analytic block with a generator of (analytic, numeric) pairs.
pub struct AuditBlock {
    pub name: String,
    eval: Eval,
}

impl AuditBlock {
    fn new(name: impl Into<String>, eval: impl Fn(&mut ChaCha8Rng) -> Result<(Jac, Jac)> + 'static) -> Self {
        Self { name: name.into(), eval: Box::new(eval) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockResult {
    pub name: String,
    pub max_rel_error: f64,
    pub worst_trial: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub seed: u64,
    pub trials: usize,
    pub eps: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub failed: Vec<String>,
    pub blocks: Vec<BlockResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditOptions {
    pub seed: u64,
    pub trials: usize,
    pub tolerance: f64,
    /// Blocks whose analytic value is negated before comparison.
    pub inject_faults: Vec<String>,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self { seed: 0, trials: DEFAULT_TRIALS, tolerance: DEFAULT_TOLERANCE, inject_faults: Vec::new() }
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

/// Random element with rotation magnitude well inside the injectivity radius.
fn sample<G: LieGroup>(rng: &mut ChaCha8Rng, dof: usize) -> G {
    G::exp(&uniform(rng, dof, 1.0)).expect("tangent of the right size")
}

fn group_blocks<G: Action>(prefix: &str, dof: usize, out: &mut Vec<AuditBlock>) {
    let name = |b: &str| format!("{prefix}.{b}");
    out.push(AuditBlock::new(name("inverse"), move |r| {
        let x: G = sample(r, dof);
        Ok((x.jac_inverse(), jac_numeric(|y: &G| y.inverse(), &x, FD_EPS)?))
    }));
    out.push(AuditBlock::new(name("compose_lhs"), move |r| {
        let (x, y): (G, G) = (sample(r, dof), sample(r, dof));
        Ok((x.jac_compose_lhs(&y), jac_numeric(|a: &G| a.compose(&y), &x, FD_EPS)?))
    }));
    out.push(AuditBlock::new(name("compose_rhs"), move |r| {
        let (x, y): (G, G) = (sample(r, dof), sample(r, dof));
        Ok((x.jac_compose_rhs(&y), jac_numeric(|b: &G| x.compose(b), &y, FD_EPS)?))
    }));
    out.push(AuditBlock::new(name("jr"), move |r| {
        let t = uniform(r, dof, 1.0);
        Ok((G::jr(&t)?, jac_numeric(|v: &Tangent| G::exp(v).unwrap(), &t, FD_EPS)?))
    }));
    out.push(AuditBlock::new(name("jl"), move |r| {
        let t = uniform(r, dof, 1.0);
        let num = jac_numeric_sided(|v: &Tangent| G::exp(v).unwrap(), &t, FD_EPS, Side::Left, Side::Left)?;
        Ok((G::jl(&t)?, num))
    }));
    out.push(AuditBlock::new(name("jr_inv"), move |r| {
        let t = uniform(r, dof, 1.0);
        let x = G::exp(&t)?;
        Ok((G::jr_inv(&t)?, jac_numeric(|y: &G| y.log(), &x, FD_EPS)?))
    }));
    out.push(AuditBlock::new(name("jl_inv"), move |r| {
        let t = uniform(r, dof, 1.0);
        let x = G::exp(&t)?;
        Ok((G::jl_inv(&t)?, jac_numeric_sided(|y: &G| y.log(), &x, FD_EPS, Side::Left, Side::Left)?))
    }));
    out.push(AuditBlock::new(name("rplus_x"), move |r| {
        let x: G = sample(r, dof);
        let t = uniform(r, dof, 1.0);
        Ok((x.jac_rplus_x(&t)?, jac_numeric(|y: &G| y.rplus(&t).unwrap(), &x, FD_EPS)?))
    }));
    out.push(AuditBlock::new(name("rplus_tau"), move |r| {
        let x: G = sample(r, dof);
        let t = uniform(r, dof, 1.0);
        Ok((x.jac_rplus_tau(&t)?, jac_numeric(|v: &Tangent| x.rplus(v).unwrap(), &t, FD_EPS)?))
    }));
    out.push(AuditBlock::new(name("rminus_lhs"), move |r| {
        let x: G = sample(r, dof);
        let y = x.rplus(&uniform(r, dof, 1.0))?;
        Ok((y.jac_rminus_lhs(&x)?, jac_numeric(|a: &G| a.rminus(&x).unwrap(), &y, FD_EPS)?))
    }));
    out.push(AuditBlock::new(name("rminus_rhs"), move |r| {
        let x: G = sample(r, dof);
        let y = x.rplus(&uniform(r, dof, 1.0))?;
        Ok((y.jac_rminus_rhs(&x)?, jac_numeric(|b: &G| y.rminus(b).unwrap(), &x, FD_EPS)?))
    }));
    out.push(AuditBlock::new(name("act_x"), move |r| {
        let x: G = sample(r, dof);
        let p = uniform(r, x.point_dim(), 2.0);
        Ok((x.jac_act_x(&p)?, jac_numeric(|y: &G| y.act(&p).unwrap(), &x, FD_EPS)?))
    }));
    out.push(AuditBlock::new(name("act_p"), move |r| {
        let x: G = sample(r, dof);
        let p = uniform(r, x.point_dim(), 2.0);
        Ok((x.jac_act_p(&p)?, jac_numeric(|q: &DVector<f64>| x.act(q).unwrap(), &p, FD_EPS)?))
    }));
}

fn wheels(r: &mut ChaCha8Rng) -> (WheelParams, Calib) {
    let p = WheelParams::new(r.random_range(0.05..0.2), r.random_range(0.05..0.2), r.random_range(0.3..0.8)).unwrap();
    let c = Calib::new(r.random_range(0.9..1.1), r.random_range(0.9..1.1), r.random_range(0.9..1.1));
    (p, c)
}

fn tick(r: &mut ChaCha8Rng) -> EncoderTick {
    EncoderTick::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
}

fn v3(v: &DVector<f64>) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

fn calib_of(v: &DVector<f64>) -> Calib {
    Calib::new(v[0], v[1], v[2])
}

fn diffdrive_blocks(out: &mut Vec<AuditBlock>) {
    out.push(AuditBlock::new("diffdrive.body_y", |r| {
        let (p, c) = wheels(r);
        let y = tick(r);
        let f = |v: &DVector<f64>| {
            let b = body_magnitudes(&EncoderTick::new(v[0], v[1]), &c, &p);
            DVector::from_vec(vec![b.dl, b.dtheta])
        };
        Ok((to_dmat(&jac_body_y(&c, &p)), jac_numeric(f, &DVector::from_vec(vec![y.dpsi_l, y.dpsi_r]), FD_EPS)?))
    }));
    out.push(AuditBlock::new("diffdrive.body_c", |r| {
        let (p, c) = wheels(r);
        let y = tick(r);
        let f = |v: &DVector<f64>| {
            let b = body_magnitudes(&y, &calib_of(v), &p);
            DVector::from_vec(vec![b.dl, b.dtheta])
        };
        Ok((to_dmat(&jac_body_c(&y, &c, &p)), jac_numeric(f, &to_dvec(&c.c), FD_EPS)?))
    }));
    let delta_body = |straight: bool| {
        move |r: &mut ChaCha8Rng| {
            let dl = r.random_range(-1.0..1.0);
            let dtheta = if straight {
                0.0
            } else {
                let t: f64 = r.random_range(0.01..1.5);
                if r.random_bool(0.5) { t } else { -t }
            };
            let f = |v: &DVector<f64>| to_dvec(&delta_from_body(&BodyMag { dl: v[0], dtheta: v[1] }, THETA_TOL));
            let b = BodyMag { dl, dtheta };
            Ok((to_dmat(&jac_delta_body(&b, THETA_TOL)), jac_numeric(f, &DVector::from_vec(vec![dl, dtheta]), FD_EPS)?))
        }
    };
    out.push(AuditBlock::new("diffdrive.delta_body_arc", delta_body(false)));
    out.push(AuditBlock::new("diffdrive.delta_body_straight", delta_body(true)));
    out.push(AuditBlock::new("diffdrive.compose_delta", |r| {
        let (a, b) = (uniform(r, 3, 1.0), uniform(r, 3, 1.0));
        let (ja, _) = jac_delta_compose(&v3(&a), &v3(&b));
        Ok((to_dmat(&ja), jac_numeric(|v: &DVector<f64>| to_dvec(&delta_compose(&v3(v), &v3(&b))), &a, FD_EPS)?))
    }));
    out.push(AuditBlock::new("diffdrive.compose_step", |r| {
        let (a, b) = (uniform(r, 3, 1.0), uniform(r, 3, 1.0));
        let (_, jb) = jac_delta_compose(&v3(&a), &v3(&b));
        Ok((to_dmat(&jb), jac_numeric(|v: &DVector<f64>| to_dvec(&delta_compose(&v3(&a), &v3(v))), &b, FD_EPS)?))
    }));
    out.push(AuditBlock::new("diffdrive.preint_calib", |r| {
        let (p, c) = wheels(r);
        let ticks: Vec<EncoderTick> = (0..20).map(|_| EncoderTick::new(r.random_range(0.0..0.4), r.random_range(0.0..0.4))).collect();
        let np = NoiseParams::noiseless();
        let d = preintegrate(&ticks, &c, &p, &np, THETA_TOL)?;
        let f = |v: &DVector<f64>| to_dvec(&preintegrate(&ticks, &calib_of(v), &p, &np, THETA_TOL).unwrap().delta);
        Ok((to_dmat(&d.jc), jac_numeric(f, &to_dvec(&c.c), FD_EPS)?))
    }));
    let residual = |which: usize| {
        move |r: &mut ChaCha8Rng| {
            let (p, c) = wheels(r);
            let ticks: Vec<EncoderTick> = (0..5).map(|_| EncoderTick::new(r.random_range(0.0..0.4), r.random_range(0.0..0.4))).collect();
            let d = preintegrate(&ticks, &c, &p, &NoiseParams::noiseless(), THETA_TOL)?;
            let xi = Pose2::exp(&uniform(r, 3, 1.0))?;
            let xj = xi.rplus(&(to_dvec(&d.delta) + uniform(r, 3, 0.1)))?;
            let cc = Calib::new(c.c_l() + 0.01, c.c_r() - 0.01, c.c_d() + 0.02);
            let (ji, jj, jc) = jac_preint_error(&xi, &xj, &cc, &d);
            let err = |a: &Pose2, b: &Pose2, k: &Calib| to_dvec(&preint_error(a, b, k, &d));
            Ok(match which {
                0 => (to_dmat(&ji), jac_numeric(|a: &Pose2| err(a, &xj, &cc), &xi, FD_EPS)?),
                1 => (to_dmat(&jj), jac_numeric(|b: &Pose2| err(&xi, b, &cc), &xj, FD_EPS)?),
                _ => (to_dmat(&jc), jac_numeric(|v: &DVector<f64>| err(&xi, &xj, &calib_of(v)), &to_dvec(&cc.c), FD_EPS)?),
            })
        }
    };
    out.push(AuditBlock::new("diffdrive.residual_xi", residual(0)));
    out.push(AuditBlock::new("diffdrive.residual_xj", residual(1)));
    out.push(AuditBlock::new("diffdrive.residual_c", residual(2)));
}

fn estimation_blocks<G: Action>(prefix: &str, dof: usize, out: &mut Vec<AuditBlock>)
where
    GroupElement: From<G>,
{
    let name = |b: &str| format!("{prefix}.{b}");
    out.push(AuditBlock::new(name("eskf_f"), move |r| {
        let x: G = sample(r, dof);
        let u = uniform(r, dof, 0.5);
        Ok((prediction_jacobians(&x, &u)?.0, jac_numeric(|y: &G| y.rplus(&u).unwrap(), &x, FD_EPS)?))
    }));
    out.push(AuditBlock::new(name("eskf_g"), move |r| {
        let x: G = sample(r, dof);
        let u = uniform(r, dof, 0.5);
        Ok((prediction_jacobians(&x, &u)?.1, jac_numeric(|v: &Tangent| x.rplus(v).unwrap(), &u, FD_EPS)?))
    }));
    out.push(AuditBlock::new(name("eskf_h"), move |r| {
        let x: G = sample(r, dof);
        let b = uniform(r, x.point_dim(), 3.0);
        Ok((measurement_jacobian(&x, &b)?, jac_numeric(|y: &G| expected_measurement(y, &b).unwrap(), &x, FD_EPS)?))
    }));
    out.push(AuditBlock::new(name("bias"), move |r| {
        let u = uniform(r, dof, 0.5);
        let c = uniform(r, 2, 0.1);
        Ok((jac_bias_correct(dof)?, jac_numeric(|v: &DVector<f64>| bias_correct(&u, v).unwrap(), &c, FD_EPS)?))
    }));
    // Assembled Jacobian of a small self-calibrating SAM graph ⟨c, X₁, X₂, b⟩.
    out.push(AuditBlock::new(name("sam_jacobian"), move |r| {
        let x1: G = sample(r, dof);
        let x2: G = sample(r, dof);
        let pd = x1.point_dim();
        let state = CompositeElement::new(vec![
            TransN::new(uniform(r, 2, 0.1)).into(),
            x1.clone().into(),
            x2.clone().into(),
            TransN::new(uniform(r, pd, 3.0)).into(),
        ]);
        let id = |n: usize| BlockId(n);
        let cov = |n: usize| Jac::identity(n, n) * 0.5;
        let factors = vec![
            Factor::prior(id(1), G::exp(&uniform(r, dof, 1.0))?.into(), &cov(dof))?,
            Factor::from_cov(FactorKind::Motion { from: id(1), to: id(2), u: uniform(r, dof, 1.0) }, &cov(dof))?,
            Factor::from_cov(FactorKind::CalibratedMotion { bias: id(0), from: id(1), to: id(2), u_tilde: uniform(r, dof, 1.0) }, &cov(dof))?,
            Factor::from_cov(FactorKind::Beacon { pose: id(1), beacon: id(3), y: uniform(r, pd, 1.0) }, &cov(pd))?,
            Factor::from_cov(FactorKind::Beacon { pose: id(2), beacon: id(3), y: uniform(r, pd, 1.0) }, &cov(pd))?,
        ];
        let rows = crate::composite::Layout::new(factors.iter().map(Factor::dim).collect());
        let mut blocks = Vec::new();
        for (i, f) in factors.iter().enumerate() {
            for (c, j) in f.jacobians(&state)? {
                blocks.push((BlockId(i), c, j));
            }
        }
        let analytic = jac_composite(&rows, state.layout(), blocks)?.into_dense();
        let resid = |s: &CompositeElement| {
            let parts: Vec<DVector<f64>> = factors.iter().map(|f| f.residual(s).unwrap()).collect();
            crate::composite::stack(&rows, &parts).unwrap()
        };
        Ok((analytic, jac_numeric(resid, &state, FD_EPS)?))
    }));
}

/// Every audited block, in report order.
pub fn registry() -> Vec<AuditBlock> {
    let mut out = Vec::new();
    group_blocks::<UnitComplex>("unit_complex", 1, &mut out);
    group_blocks::<Rot2>("rot2", 1, &mut out);
    group_blocks::<UnitQuaternion>("unit_quaternion", 3, &mut out);
    group_blocks::<Rot3>("rot3", 3, &mut out);
    group_blocks::<Pose2>("se2", 3, &mut out);
    group_blocks::<Pose3>("se3", 6, &mut out);
    group_blocks::<TransN>("trans3", 3, &mut out);
    out.push(AuditBlock::new("composite.blockwise", |r| {
        let x = CompositeElement::new(vec![
            Pose2::exp(&uniform(r, 3, 1.0))?.into(),
            Rot3::exp(&uniform(r, 3, 1.0))?.into(),
            TransN::new(uniform(r, 2, 2.0)).into(),
        ]);
        // f(⟨X, R, b⟩) = ⟨X⁻¹, R∘R, X·b⟩
        let f = |s: &CompositeElement| {
            let (p, q, b) = (s.block(BlockId(0)), s.block(BlockId(1)), s.block(BlockId(2)).as_trans().unwrap());
            CompositeElement::new(vec![p.inverse(), q.compose(q).unwrap(), TransN::new(p.act(&b.v).unwrap()).into()])
        };
        let (p, q, b) = (x.block(BlockId(0)), x.block(BlockId(1)), &x.block(BlockId(2)).as_trans().unwrap().v);
        let GroupElement::Rot3(qq) = q else { unreachable!("block 1 is a rotation") };
        let jq = qq.jac_compose_lhs(qq) + qq.jac_compose_rhs(qq);
        let y = f(&x);
        let blocks = vec![
            (BlockId(0), BlockId(0), p.jac_inverse()),
            (BlockId(1), BlockId(1), jq),
            (BlockId(2), BlockId(0), p.jac_act_x(b)?),
            (BlockId(2), BlockId(2), p.jac_act_p(b)?),
        ];
        let j = jac_composite(y.layout(), x.layout(), blocks)?.into_dense();
        Ok((j, jac_numeric(f, &x, FD_EPS)?))
    }));
    diffdrive_blocks(&mut out);
    estimation_blocks::<Pose2>("estimation2d", 3, &mut out);
    estimation_blocks::<Pose3>("estimation3d", 6, &mut out);
    out
}

fn block_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64 + 1)
}

/// Runs the audit. Evaluation errors count as a failed block with infinite error.
pub fn run_audit(opts: &AuditOptions) -> AuditReport {
    let blocks = registry();
    let mut results = Vec::with_capacity(blocks.len());
    for (i, b) in blocks.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(block_seed(opts.seed, i));
        let flip = opts.inject_faults.iter().any(|f| f == &b.name);
        let (mut worst, mut worst_trial) = (0.0_f64, 0);
        for t in 0..opts.trials {
            let err = match (b.eval)(&mut rng) {
                Ok((a, n)) => {
                    let a = if flip { -a } else { a };
                    max_rel_error(&a, &n, ERROR_FLOOR)
                }
                Err(_) => f64::INFINITY,
            };
            let err = if err.is_nan() { f64::INFINITY } else { err };
            if err > worst {
                worst = err;
                worst_trial = t;
            }
        }
        results.push(BlockResult { name: b.name.clone(), max_rel_error: worst, worst_trial, passed: worst <= opts.tolerance });
    }
    let failed: Vec<String> = results.iter().filter(|r| !r.passed).map(|r| r.name.clone()).collect();
    AuditReport {
        seed: opts.seed,
        trials: opts.trials,
        eps: FD_EPS,
        tolerance: opts.tolerance,
        passed: failed.is_empty(),
        failed,
        blocks: results,
    }
}

/// Names of every audited block.
pub fn block_names() -> Vec<String> {
    registry().into_iter().map(|b| b.name).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_block_passes() {
        let rep = run_audit(&AuditOptions { trials: 20, ..Default::default() });
        assert!(rep.passed, "{:?}", rep.failed);
        assert!(rep.blocks.len() >= 40);
        let names = block_names();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
    }

    #[test]
    fn sign_flip_fails_exactly_that_block() {
        let opts = AuditOptions { trials: 5, inject_faults: vec!["se2.jr".into()], ..Default::default() };
        let rep = run_audit(&opts);
        assert_eq!(rep.failed, vec!["se2.jr".to_string()]);
    }

    #[test]
    fn deterministic_under_seed() {
        let opts = AuditOptions { seed: 7, trials: 3, ..Default::default() };
        assert_eq!(run_audit(&opts), run_audit(&opts));
    }
}
