//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use liekit::audit::{run_audit, AuditOptions};
use liekit::diffdrive::{
    body_magnitudes, delta_compose, delta_from_body, encoder_noise_cov, preintegrate, CalibOptions, Calib, EncoderTick,
    NoiseParams, WheelParams, THETA_TOL,
};
use liekit::estimation::SolveOptions;
use liekit::groups::{Pose2, Pose3, Rot2, Rot3, TransN, UnitComplex, UnitQuaternion};
use liekit::pipeline::{run_ddcalib, run_eskf, run_sam, sam_problem, RunOutput};
use liekit::sim::{simulate, DiffDriveConfig, Scenario, Trajectory};
use liekit::uncertainty::sample_covariance;
use liekit::{Jac, LieGroup, Tangent};

fn report(n: usize, pass: bool, detail: String) {
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn max_abs(a: &Jac, b: &Jac) -> f64 {
    (a - b).amax()
}

/// Tangent vector whose rotation part has magnitude below `max_angle`; the
/// magnitude is log-uniform over small values half of the time.
fn tangent(rng: &mut ChaCha8Rng, trans: usize, rot: usize, max_angle: f64) -> Tangent {
    let mut v = DVector::zeros(trans + rot);
    for i in 0..trans {
        v[i] = rng.random_range(-5.0..5.0);
    }
    if rot > 0 {
        let dir = DVector::from_fn(rot, |_, _| rng.sample::<f64, _>(StandardNormal)).normalize();
        let mag = if rng.random_bool(0.5) { rng.random_range(0.0..max_angle) } else { 10f64.powf(rng.random_range(-12.0..0.0)) };
        let sign = if rot == 1 && rng.random_bool(0.5) { -1.0 } else { 1.0 };
        v.rows_mut(trans, rot).copy_from(&(dir * mag * sign));
    }
    v
}

struct Spec {
    name: &'static str,
    trans: usize,
    rot: usize,
}

const GROUPS: [Spec; 7] = [
    Spec { name: "unit_complex", trans: 0, rot: 1 },
    Spec { name: "rot2", trans: 0, rot: 1 },
    Spec { name: "unit_quaternion", trans: 0, rot: 3 },
    Spec { name: "rot3", trans: 0, rot: 3 },
    Spec { name: "se2", trans: 2, rot: 1 },
    Spec { name: "se3", trans: 3, rot: 3 },
    Spec { name: "trans3", trans: 3, rot: 0 },
];

fn dispatch<T>(name: &str, f: impl GroupFn<T>) -> T {
    match name {
        "unit_complex" => f.call::<UnitComplex>(),
        "rot2" => f.call::<Rot2>(),
        "unit_quaternion" => f.call::<UnitQuaternion>(),
        "rot3" => f.call::<Rot3>(),
        "se2" => f.call::<Pose2>(),
        "se3" => f.call::<Pose3>(),
        _ => f.call::<TransN>(),
    }
}

trait GroupFn<T> {
    fn call<G: LieGroup>(&self) -> T;
}

struct RoundTrip<'a>(&'a Spec, u64);

impl GroupFn<f64> for RoundTrip<'_> {
    fn call<G: LieGroup>(&self) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.1);
        let mut worst = 0.0_f64;
        for _ in 0..1000 {
            let t = tangent(&mut rng, self.0.trans, self.0.rot, PI - 1e-3);
            let back = G::exp(&t).unwrap().log();
            worst = worst.max((back - &t).norm());
        }
        worst
    }
}

struct Identities<'a>(&'a Spec, u64);

impl GroupFn<f64> for Identities<'_> {
    fn call<G: LieGroup>(&self) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.1);
        let mut worst = 0.0_f64;
        for _ in 0..200 {
            let (s, r) = (self.0.trans, self.0.rot);
            let x = G::exp(&tangent(&mut rng, s, r, 3.0)).unwrap();
            let y = G::exp(&tangent(&mut rng, s, r, 3.0)).unwrap();
            let n = x.adj().nrows();
            worst = worst.max(max_abs(&x.inverse().adj(), &x.adj().try_inverse().unwrap()));
            worst = worst.max(max_abs(&(x.adj() * x.inverse().adj()), &Jac::identity(n, n)));
            worst = worst.max(max_abs(&x.compose(&y).adj(), &(x.adj() * y.adj())));
            let t = tangent(&mut rng, s, r, 3.0);
            let ad = G::exp(&t).unwrap().adj();
            worst = worst.max(max_abs(&G::jl(&t).unwrap(), &(&ad * G::jr(&t).unwrap())));
            worst = worst.max(max_abs(&ad, &(G::jl(&t).unwrap() * G::jr_inv(&t).unwrap())));
        }
        worst
    }
}

#[test]
fn criterion_1_jacobian_audit() {
    let start = Instant::now();
    let rep = run_audit(&AuditOptions::default());
    let secs = start.elapsed().as_secs_f64();
    let worst = rep.blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max);
    let pass = rep.passed && rep.trials == 100 && rep.blocks.len() >= 40 && secs < 10.0;
    report(1, pass, format!("{} blocks x {} trials, worst rel error {worst:.2e} (tol 1e-5), failed {:?}, {secs:.2}s (< 10s)", rep.blocks.len(), rep.trials, rep.failed));
}

#[test]
fn criterion_2_exp_log_round_trip() {
    let mut worst = 0.0_f64;
    let mut detail = Vec::new();
    for (i, s) in GROUPS.iter().enumerate() {
        let e = dispatch(s.name, RoundTrip(s, 200 + i as u64));
        detail.push(format!("{}={e:.1e}", s.name));
        worst = worst.max(e);
    }
    report(2, worst < 1e-9, format!("1000 trials/group, |theta| < pi - 1e-3: {} (tol 1e-9)", detail.join(" ")));
}

#[test]
fn criterion_3_adjoint_identities() {
    let mut worst = 0.0_f64;
    let mut detail = Vec::new();
    for (i, s) in GROUPS.iter().enumerate() {
        let e = dispatch(s.name, Identities(s, 300 + i as u64));
        detail.push(format!("{}={e:.1e}", s.name));
        worst = worst.max(e);
    }
    report(3, worst < 1e-8, format!("Ad(X^-1)=Ad(X)^-1, Ad(XY)=Ad(X)Ad(Y), Jl=Ad Jr: {} (tol 1e-8)", detail.join(" ")));
}

#[test]
fn criterion_4_jacobian_symmetries() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut so3, mut se3) = (0.0_f64, 0.0_f64);
    for _ in 0..1000 {
        let t = tangent(&mut rng, 0, 3, PI - 1e-3);
        for jr_jl in [(Rot3::jr(&t).unwrap(), Rot3::jl(&t).unwrap()), (UnitQuaternion::jr(&t).unwrap(), UnitQuaternion::jl(&t).unwrap())] {
            so3 = so3.max(max_abs(&jr_jl.1, &jr_jl.0.transpose()));
        }
        so3 = so3.max(max_abs(&Rot3::jr(&(-&t)).unwrap(), &Rot3::jl(&t).unwrap()));
        let t6 = tangent(&mut rng, 3, 3, PI - 1e-3);
        se3 = se3.max(max_abs(&Pose3::jr(&t6).unwrap(), &Pose3::jl(&(-&t6)).unwrap()));
    }
    report(4, so3 < 1e-10 && se3 < 1e-9, format!("SO(3) {so3:.1e} (tol 1e-10), SE(3) {se3:.1e} (tol 1e-9)"));
}

fn nees_band(dim: usize) -> (f64, f64) {
    // per-dof band scaled by the error dimension
    let k = if dim == 2 { 1.0 } else { 2.0 };
    (1.5 * k, 6.0 * k)
}

fn eskf_check(dim: usize) -> (bool, String) {
    let (lo, hi) = nees_band(dim);
    let mut means = Vec::new();
    for seed in 0..50 {
        let ds = simulate(&Scenario { dim, seed, ..Default::default() }).unwrap();
        means.push(run_eskf(&ds).unwrap().summary.mean_nees);
    }
    let mc = means.iter().sum::<f64>() / means.len() as f64;
    let (mn, mx) = means.iter().fold((f64::INFINITY, 0.0_f64), |(a, b), v| (a.min(*v), b.max(*v)));
    let clean = simulate(&Scenario { dim, noiseless: true, ..Default::default() }).unwrap();
    let start = Instant::now();
    let out = run_eskf(&clean).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let term = out.summary.terminal_error;
    let pass = (lo..=hi).contains(&mc) && term < 1e-9 && secs < 5.0;
    (pass, format!("ESKF {dim}D: mean NEES {mc:.3} in [{lo}, {hi}] (per-seed {mn:.2}..{mx:.2}), noiseless terminal {term:.1e} (< 1e-9), {secs:.3}s (< 5s)"))
}

#[test]
fn criterion_5_eskf() {
    let (pass, detail) = eskf_check(2);
    report(5, pass, detail);
}

fn sam_scenario(dim: usize, seed: u64) -> Scenario {
    Scenario {
        dim,
        seed,
        steps: 2,
        dt: 1.0,
        observations: Some((0..3).flat_map(|p| (0..3).map(move |b| [p, b])).collect()),
        ..Default::default()
    }
}

fn sam_check(dim: usize) -> (bool, String) {
    let gauge = if dim == 2 { 3 } else { 6 };
    let (mut max_it, mut worst_ratio, mut all_ok) = (0, 0.0_f64, true);
    let mut m = 0;
    for seed in 0..20 {
        let ds = simulate(&sam_scenario(dim, seed)).unwrap();
        let out = run_sam(&ds, false, &SolveOptions::default()).unwrap();
        let s = &out.summary;
        m = s.residual_dim.unwrap();
        let bound = ChiSquared::new(m as f64).unwrap().inverse_cdf(0.95);
        let it = s.iterations.unwrap();
        max_it = max_it.max(it);
        worst_ratio = worst_ratio.max(s.final_cost.unwrap() / bound);
        all_ok &= s.converged == Some(true) && it <= 10 && s.final_cost.unwrap() <= bound && out.failure.is_none();
    }
    let ds = simulate(&sam_scenario(dim, 0)).unwrap();
    let (g, _) = sam_problem(&ds, false).unwrap().build(false).unwrap();
    let free = g.nullity(SolveOptions::default().rank_tol).unwrap();
    let pass = all_ok && free == gauge;
    (pass, format!("SAM {dim}D over 20 seeds: max {max_it} iterations (<= 10), max cost / chi2_95({m}) = {worst_ratio:.3} (<= 1), nullity without prior {free} (== {gauge})"))
}

#[test]
fn criterion_6_sam() {
    let (pass, detail) = sam_check(2);
    report(6, pass, detail);
}

#[test]
fn criterion_7_self_calibration() {
    let truth = [0.05, -0.02];
    let base = Scenario { bias: truth, ..sam_scenario(2, 0) };
    let clean = simulate(&Scenario { noiseless: true, ..base.clone() }).unwrap();
    let out = run_sam(&clean, true, &SolveOptions::default()).unwrap();
    let b = out.summary.bias.unwrap();
    let clean_err = (b[0] - truth[0]).abs().max((b[1] - truth[1]).abs());
    let mut worst_z = 0.0_f64;
    for seed in 0..20 {
        let ds = simulate(&Scenario { seed, ..base.clone() }).unwrap();
        let s = run_sam(&ds, true, &SolveOptions::default()).unwrap().summary;
        let (b, sig) = (s.bias.unwrap(), s.bias_sigma.unwrap());
        for i in 0..2 {
            worst_z = worst_z.max((b[i] - truth[i]).abs() / sig[i]);
        }
    }
    report(7, clean_err < 1e-6 && worst_z <= 3.0, format!("3-pose problem: noiseless error {clean_err:.1e} (< 1e-6), noisy worst |z| {worst_z:.2} over 20 seeds (<= 3)"));
}

fn ddcalib(trajectory: Trajectory) -> (RunOutput, f64) {
    let cfg = DiffDriveConfig { trajectory, ..Default::default() };
    let sc = Scenario { noiseless: true, diffdrive: Some(cfg), ..Default::default() };
    let ds = simulate(&sc).unwrap();
    let start = Instant::now();
    let out = run_ddcalib(&ds, &CalibOptions::default()).unwrap();
    (out, start.elapsed().as_secs_f64())
}

#[test]
fn criterion_8_diffdrive_calibration() {
    let truth = [1.02, 0.98, 1.05];
    let (eight, secs) = ddcalib(Trajectory::FigureEight);
    let c = eight.summary.calibration.clone().unwrap();
    let err = c.iter().zip(truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let (line, _) = ddcalib(Trajectory::Straight);
    let nullity = line.summary.nullity.unwrap();
    let pass = err < 1e-6 && eight.failure.is_none() && nullity == 1 && secs < 10.0;
    report(8, pass, format!("500-tick figure-eight error {err:.1e} (< 1e-6) in {secs:.2}s (< 10s), straight-line nullity {nullity} (== 1)"));
}

#[test]
fn criterion_9_three_dimensional_drivers() {
    let (p1, d1) = eskf_check(3);
    let (p2, d2) = sam_check(3);
    report(9, p1 && p2, format!("{d1}; {d2}"));
}

#[test]
fn criterion_10_preintegration_covariance() {
    let p = WheelParams::new(0.1, 0.1, 0.5).unwrap();
    let c = Calib::nominal();
    let np = NoiseParams { k_l: 1e-3, k_r: 1e-3, mu_l: 1e-2, mu_r: 1e-2, q_s: Matrix2::identity() * 1e-6 };
    let ticks: Vec<EncoderTick> = (0..50)
        .map(|k| {
            let s = (2.0 * PI * k as f64 / 50.0).sin();
            EncoderTick::new(0.2 - 0.1 * s, 0.2 + 0.1 * s)
        })
        .collect();
    let nominal = preintegrate(&ticks, &c, &p, &np, THETA_TOL).unwrap();
    let slip = np.q_s.cholesky().unwrap().l();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut gauss = || rng.sample::<f64, _>(StandardNormal);
    let samples: Vec<DVector<f64>> = (0..10_000)
        .map(|_| {
            let mut d = Vector3::zeros();
            for y in &ticks {
                let q = encoder_noise_cov(y, &np);
                let noisy = EncoderTick::new(y.dpsi_l + q[(0, 0)].sqrt() * gauss(), y.dpsi_r + q[(1, 1)].sqrt() * gauss());
                let mut b = body_magnitudes(&noisy, &c, &p);
                let w = slip * Vector2::new(gauss(), gauss());
                b.dl += w.x;
                b.dtheta += w.y;
                d = delta_compose(&d, &delta_from_body(&b, THETA_TOL));
            }
            let e = d - nominal.delta;
            DVector::from_column_slice(e.as_slice())
        })
        .collect();
    let sample = sample_covariance(&samples);
    let q = DMatrix::from_column_slice(3, 3, nominal.q.as_slice());
    let rel = (&sample - &q).norm() / q.norm();
    report(10, rel < 0.1, format!("10^4 rollouts x 50 ticks: ||S - Q||_F / ||Q||_F = {rel:.4} (< 0.10)"));
}
