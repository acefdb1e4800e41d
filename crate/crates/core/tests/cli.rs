use std::fs;
use std::path::Path;
use std::process::Command;

fn liekit(args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_liekit")).args(args).output().expect("binary runs");
    out.status.code().expect("exit code")
}

fn first_line(p: &Path) -> String {
    fs::read_to_string(p).unwrap().lines().next().unwrap().to_string()
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn simulate_then_estimate_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let d = data.to_str().unwrap();
    assert_eq!(liekit(&["simulate", "--out", d, "--seed", "5", "--config", &write_cfg(dir.path(), r#"{"steps": 30, "diffdrive": {}}"#)]), 0);
    assert_eq!(first_line(&data.join("encoders.csv")), "t,dpsi_l,dpsi_r");
    assert_eq!(first_line(&data.join("anchors.csv")), "t,x,y,theta");
    let cfg = write_cfg(dir.path(), &format!(r#"{{"dataset": {:?}}}"#, d));
    let out = dir.path().join("out");
    let o = out.to_str().unwrap();
    for cmd in ["eskf", "sam", "selfcal", "ddcalib"] {
        assert_eq!(liekit(&[cmd, "--config", &cfg, "--out", o]), 0, "{cmd}");
        let s = json(&out.join(format!("{cmd}_summary.json")));
        assert_eq!(s["command"], cmd);
        assert_eq!(s["seed"], 5);
    }
    assert_eq!(first_line(&out.join("eskf_estimates.csv")), "step,t,x,y,theta,var_rho_x,var_rho_y,var_theta,nees");
    assert_eq!(first_line(&out.join("sam_beacons.csv")), "id,x,y,var_x,var_y");
    assert_eq!(fs::read_to_string(out.join("sam_estimates.csv")).unwrap().lines().count(), 32);
    assert!(json(&out.join("selfcal_summary.json"))["bias_sigma"].is_array());
    assert!(json(&out.join("ddcalib_summary.json"))["calibration"].is_array());
}

fn write_cfg(dir: &Path, body: &str) -> String {
    let p = dir.join(format!("cfg{}.json", body.len()));
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn deterministic_under_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        assert_eq!(liekit(&["sam", "--dim", "3", "--seed", "9", "--out", d.to_str().unwrap()]), 0);
    }
    for f in ["sam_estimates.csv", "sam_beacons.csv", "sam_summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(first_line(&a.join("sam_estimates.csv")).split(',').count(), 2 + 6 + 6 + 1);
}

#[test]
fn jaccheck_reports_and_injects_faults() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    assert_eq!(liekit(&["jaccheck", "--out", o, "--trials", "10"]), 0);
    let rep = json(&dir.path().join("jaccheck.json"));
    assert_eq!(rep["passed"], true);
    assert!(rep["blocks"].as_array().unwrap().len() >= 40);
    assert_eq!(liekit(&["jaccheck", "--out", o, "--trials", "10", "--inject-fault", "rot3.jr_inv"]), 4);
    let rep = json(&dir.path().join("jaccheck.json"));
    assert_eq!(rep["failed"], serde_json::json!(["rot3.jr_inv"]));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    assert_eq!(liekit(&["eskf", "--out", o, "--config", &write_cfg(dir.path(), r#"{"steps": 0}"#)]), 2);
    assert_eq!(liekit(&["eskf", "--out", o, "--config", &write_cfg(dir.path(), r#"{"unknown_key": 1}"#)]), 2);
    assert_eq!(liekit(&["eskf", "--out", o, "--config", &write_cfg(dir.path(), "not json")]), 2);
    assert_eq!(liekit(&["sam", "--out", o, "--dim", "5"]), 2);
    let straight = write_cfg(dir.path(), r#"{"noiseless": true, "diffdrive": {"trajectory": "straight"}}"#);
    assert_eq!(liekit(&["ddcalib", "--out", o, "--config", &straight]), 3);
    let s = json(&dir.path().join("ddcalib_summary.json"));
    assert_eq!(s["nullity"], 1);
    assert!(s["error"].as_str().unwrap().contains("rank deficient"));
}
