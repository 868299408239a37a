use magnetocube::config::{DisturbanceSettings, PanelSettings, ScenarioConfig};
use magnetocube::sim::{run_config, time_to_cone, TrajectoryLog, CONE_HALF_ANGLE, LOG_HEADER};

fn short(controller: &str) -> ScenarioConfig {
    ScenarioConfig { controller: controller.into(), duration_orbits: 0.5, ..Default::default() }
}

#[test]
fn runs_are_bit_identical() {
    for c in ["lqr", "mpc"] {
        let a = run_config(&short(c)).unwrap();
        let b = run_config(&short(c)).unwrap();
        assert_eq!(a.log, b.log);
    }
}

#[test]
fn log_rows_respect_limits_and_projection() {
    for cfg in [
        short("lqr"),
        short("mpc"),
        ScenarioConfig {
            panels: Some(PanelSettings::default()),
            disturbance: Some(DisturbanceSettings::default()),
            ..short("lqr")
        },
    ] {
        let out = run_config(&cfg).unwrap();
        assert!(out.abort.is_none());
        let rows = &out.log.rows;
        let expected = (cfg.duration_orbits * cfg.period_s / cfg.log_stride_s).round() as usize + 1;
        assert_eq!(rows.len(), expected);
        assert!(rows.windows(2).all(|w| w[1].t > w[0].t));
        for r in rows {
            let (m, b) = (r.m(), r.b());
            assert!(m.amax() <= cfg.u_max + 1e-15);
            if m.norm() > 0.0 {
                assert!(m.dot(&b).abs() <= 1e-10 * m.norm() * b.norm());
            }
        }
    }
}

#[test]
fn halving_the_step_barely_moves_the_final_attitude() {
    let base = run_config(&ScenarioConfig::default()).unwrap();
    let fine = run_config(&ScenarioConfig { dt_integrate: 0.25, ..Default::default() }).unwrap();
    let (a, b) = (base.log.rows.last().unwrap(), fine.log.rows.last().unwrap());
    let gap = [(a.phi - b.phi), (a.theta - b.theta), (a.psi - b.psi)].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(gap < 1e-6, "final angle gap {gap:e}");
}

#[test]
fn trajectory_csv_round_trips() {
    let out = run_config(&ScenarioConfig { duration_orbits: 0.05, ..Default::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    out.log.save_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), LOG_HEADER.join(","));
    let back = TrajectoryLog::read_csv(text.as_bytes()).unwrap();
    assert_eq!(back, out.log);
    assert_eq!(time_to_cone(&back, CONE_HALF_ANGLE), time_to_cone(&out.log, CONE_HALF_ANGLE));
}
