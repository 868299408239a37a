use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_magnetocube"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn simulate_writes_trajectory_with_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"duration_orbits": 0.1}"#);
    let out = dir.path().join("out");
    let st = bin().args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"]).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let text = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,phi,theta,psi,w1,w2,w3,u1,u2,u3,m1,m2,m3,b1,b2,b3,pointing,saturated");
    let times: Vec<f64> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(times.windows(2).all(|w| w[1] > w[0]));
    assert!(out.join("summary.txt").exists());
}

#[test]
fn ctrb_check_reports_controllable() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().args(["--analysis", "ctrb-check", "--out", dir.path().to_str().unwrap()]).output().unwrap();
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("verdict: controllable"), "{stdout}");
    assert!(stdout.contains("failed conditions: none"));
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"dt_integrate": 10, "dt_control": 4}"#);
    let st = bin().args(["--config", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--quiet"]).status().unwrap();
    assert_eq!(st.code(), Some(2));
    let st = bin().args(["--analysis", "nope", "--out", dir.path().to_str().unwrap(), "--quiet"]).status().unwrap();
    assert_eq!(st.code(), Some(2));
    let st = bin().args(["--config", "/nonexistent.json", "--quiet"]).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn controller_override_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"duration_orbits": 0.02}"#);
    let o = bin()
        .args(["--config", cfg.to_str().unwrap(), "--controller", "mpc", "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("controller: mpc"));
}

#[test]
fn all_static_analyses_run_in_a_capped_pool() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"duration_orbits": 0.05}"#);
    for name in ["eig-study", "stiffness-sweep"] {
        let st = bin()
            .env("MAGNETOCUBE_THREADS", "2")
            .args(["--config", cfg.to_str().unwrap(), "--analysis", name, "--out", dir.path().to_str().unwrap(), "--quiet"])
            .status()
            .unwrap();
        assert_eq!(st.code(), Some(0), "{name}");
    }
    let stiff = std::fs::read_to_string(dir.path().join("stiffness.csv")).unwrap();
    assert_eq!(stiff.lines().next().unwrap(), "delta_deg,stiffness");
    assert_eq!(stiff.lines().count(), 182);
}

#[test]
fn singularity_abort_exits_with_code_4_and_keeps_partial_log() {
    // starting exactly at gimbal lock cannot be recast
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"initial_angles_deg": [0, 90, 0], "duration_orbits": 0.05}"#);
    let st = bin().args(["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--quiet"]).status().unwrap();
    assert_eq!(st.code(), Some(4));
}
