//! Named batch analyses. Each one writes CSV data plus a plain-text
//! summary into an output directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::Vector3;

use crate::config::ScenarioConfig;
use crate::control::{dare_value_iteration, solve_dare, Discretizer};
use crate::controllability::{lti_ctrb_rank, theorem1_check};
use crate::dynamics::PanelConfig;
use crate::error::{Error, Result};
use crate::linmodel::{
    build_a, build_bc, delta_grid, eig_study_vs_area, max_abs_real_part, migration_threshold, stiffness_vs_delta,
};
use crate::numerics::norm2;
use crate::sim::{run_scenario, Scenario};

/// Value-iteration oracle tolerance and cap used by `dare-accuracy`.
pub const ORACLE_TOL: f64 = 1e-14;
pub const ORACLE_MAX_ITER: usize = 1_000_000;

#[derive(Debug)]
pub struct AnalysisReport {
    pub name: &'static str,
    pub summary: String,
    pub files: Vec<PathBuf>,
    /// A failure that still left partial output behind.
    pub failure: Option<Error>,
}

pub trait Analysis: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn run(&self, cfg: &ScenarioConfig, out: &Path) -> Result<AnalysisReport>;
}

fn write_text(out: &Path, file: &str, text: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let path = out.join(file);
    std::fs::write(&path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    files.push(path);
    Ok(())
}

fn csv_writer(out: &Path, file: &str, files: &mut Vec<PathBuf>) -> Result<csv::Writer<std::fs::File>> {
    let path = out.join(file);
    let w = csv::Writer::from_path(&path)?;
    files.push(path);
    Ok(w)
}

/// Panels of the scenario, or the default geometry when it has none.
fn panels_or_default(sc: &Scenario) -> PanelConfig {
    sc.panels.unwrap_or_else(|| {
        let d = crate::config::PanelSettings::default();
        PanelConfig {
            r: d.half_width_m,
            length: d.length_m,
            delta: d.deploy_angle_deg.to_radians(),
            area: d.area_m2,
            c_d: d.drag_coefficient,
            rho: d.density_kg_m3,
            orbit_radius: sc.orbit.a,
        }
    })
}

pub struct Simulate;

impl Analysis for Simulate {
    fn name(&self) -> &'static str {
        "simulate"
    }

    fn description(&self) -> &'static str {
        "closed-loop run: trajectory.csv, summary.txt"
    }

    fn run(&self, cfg: &ScenarioConfig, out: &Path) -> Result<AnalysisReport> {
        let sc = Scenario::from_config(cfg)?;
        let outcome = run_scenario(&sc)?;
        let mut files = Vec::new();
        let path = out.join("trajectory.csv");
        outcome.log.save_csv(&path)?;
        files.push(path);
        let summary = outcome.summary.to_text();
        write_text(out, "summary.txt", &summary, &mut files)?;
        Ok(AnalysisReport { name: self.name(), summary, files, failure: outcome.abort })
    }
}

pub struct EigStudy;

impl Analysis for EigStudy {
    fn name(&self) -> &'static str {
        "eig-study"
    }

    fn description(&self) -> &'static str {
        "spectrum of A versus panel area: eig_vs_area.csv"
    }

    fn run(&self, cfg: &ScenarioConfig, out: &Path) -> Result<AnalysisReport> {
        let sc = Scenario::from_config(cfg)?;
        let panels = panels_or_default(&sc);
        let max_area = (2.0 * panels.area).max(1e-3);
        let areas: Vec<f64> = (0..=200).map(|i| max_area * i as f64 / 200.0).collect();
        let study = eig_study_vs_area(&sc.inertia, sc.orbit.n, &panels, &areas)?;
        let mut files = Vec::new();
        let mut w = csv_writer(out, "eig_vs_area.csv", &mut files)?;
        let mut header = vec!["area_m2".to_string(), "gamma".to_string(), "max_abs_re".to_string()];
        for i in 1..=6 {
            header.push(format!("re{i}"));
            header.push(format!("im{i}"));
        }
        w.write_record(&header)?;
        for row in &study {
            let mut rec = vec![row.area, row.gamma, max_abs_real_part(&row.eigenvalues)];
            for z in &row.eigenvalues {
                rec.push(z.re);
                rec.push(z.im);
            }
            w.write_record(rec.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        let threshold = migration_threshold(&study, sc.orbit.n);
        let zero = study.first().map(|r| r.eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max));
        let mut summary = String::new();
        writeln!(summary, "areas: 0 .. {max_area:.4} m^2 ({} points)", areas.len()).ok();
        writeln!(summary, "largest real part at zero area: {:.6e} 1/s", zero.unwrap_or(f64::NAN)).ok();
        match threshold {
            Some(a) => writeln!(summary, "spectrum on the imaginary axis for area >= {a:.6} m^2").ok(),
            None => writeln!(summary, "spectrum never settles on the imaginary axis in this range").ok(),
        };
        write_text(out, "eig_summary.txt", &summary, &mut files)?;
        Ok(AnalysisReport { name: self.name(), summary, files, failure: None })
    }
}

pub struct StiffnessSweep;

impl Analysis for StiffnessSweep {
    fn name(&self) -> &'static str {
        "stiffness-sweep"
    }

    fn description(&self) -> &'static str {
        "sqrt|lambda_min| versus deployment angle: stiffness.csv"
    }

    fn run(&self, cfg: &ScenarioConfig, out: &Path) -> Result<AnalysisReport> {
        let sc = Scenario::from_config(cfg)?;
        let panels = panels_or_default(&sc);
        let curve = stiffness_vs_delta(&sc.inertia, sc.orbit.n, &panels, &delta_grid(0.5))?;
        let mut files = Vec::new();
        let mut w = csv_writer(out, "stiffness.csv", &mut files)?;
        w.write_record(["delta_deg", "stiffness"])?;
        for (d, s) in &curve.points {
            w.write_record([d.to_degrees().to_string(), s.to_string()])?;
        }
        w.flush()?;
        let mut summary = String::new();
        writeln!(summary, "argmax deployment angle: {:.1} deg", curve.argmax_delta.to_degrees()).ok();
        writeln!(summary, "max sqrt|lambda_min|: {:.6e}", curve.max_stiffness()).ok();
        writeln!(summary, "interior maximum: {}", curve.has_interior_max()).ok();
        write_text(out, "stiffness_summary.txt", &summary, &mut files)?;
        Ok(AnalysisReport { name: self.name(), summary, files, failure: None })
    }
}

pub struct CtrbCheck;

impl Analysis for CtrbCheck {
    fn name(&self) -> &'static str {
        "ctrb-check"
    }

    fn description(&self) -> &'static str {
        "controllability conditions and frozen-field ranks: ctrb.txt, ctrb_scan.csv"
    }

    fn run(&self, cfg: &ScenarioConfig, out: &Path) -> Result<AnalysisReport> {
        let sc = Scenario::from_config(cfg)?;
        let report = theorem1_check(&sc.inertia, sc.gamma(), &sc.orbit, &sc.dipole);
        let field = crate::environment::FieldRegistry::default().build(
            &sc.field_model,
            &sc.orbit,
            &sc.dipole,
            sc.orbit_phase,
        )?;
        let a = build_a(&sc.inertia, sc.orbit.n, sc.gamma());
        let disc = Discretizer::new(&a, sc.dt_control)?;
        let mut files = Vec::new();
        let mut w = csv_writer(out, "ctrb_scan.csv", &mut files)?;
        w.write_record(["t", "rank_continuous", "rank_discrete"])?;
        let mut min_ranks = (usize::MAX, usize::MAX);
        for i in 0..=96 {
            let t = sc.orbit.period * i as f64 / 96.0;
            // field along the nominal (LVLH-aligned) attitude
            let bc = build_bc(&sc.inertia, &field.field_lvlh(t))?;
            let rc = lti_ctrb_rank(&a, &bc);
            let m = disc.discretize(&bc, t);
            let rd = lti_ctrb_rank(&m.ad, &m.bd);
            min_ranks = (min_ranks.0.min(rc), min_ranks.1.min(rd));
            w.write_record([t.to_string(), rc.to_string(), rd.to_string()])?;
        }
        w.flush()?;
        let mut summary = report.summary();
        writeln!(summary, "gamma: {:.6e} kg m^2", sc.gamma()).ok();
        writeln!(summary, "min frozen-field rank over one orbit: continuous {}, discrete {}", min_ranks.0, min_ranks.1)
            .ok();
        write_text(out, "ctrb.txt", &summary, &mut files)?;
        Ok(AnalysisReport { name: self.name(), summary, files, failure: None })
    }
}

/// Per-sample result of [`dare_accuracy`].
#[derive(Debug, Clone, PartialEq)]
pub struct DareSample {
    pub t: f64,
    pub rel_err: f64,
    pub warm_iterations: usize,
    pub cold_iterations: usize,
    pub oracle_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct DareAccuracy {
    pub samples: Vec<DareSample>,
}

impl DareAccuracy {
    pub fn max_rel_err(&self) -> f64 {
        self.samples.iter().map(|s| s.rel_err).fold(0.0, f64::max)
    }

    /// Fraction of samples where the warm-started solve needed no more
    /// iterations than the cold one.
    pub fn warm_no_worse_fraction(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let ok = self.samples.iter().filter(|s| s.warm_iterations <= s.cold_iterations).count();
        ok as f64 / self.samples.len() as f64
    }
}

/// Compares the sign-iteration DARE against a value-iteration oracle along
/// a closed-loop run of `orbits` orbits, sampled at every control instant.
pub fn dare_accuracy(cfg: &ScenarioConfig, orbits: f64) -> Result<DareAccuracy> {
    let mut run_cfg = cfg.clone();
    run_cfg.duration_orbits = orbits;
    run_cfg.log_stride_s = cfg.dt_control;
    let sc = Scenario::from_config(&run_cfg)?;
    let outcome = run_scenario(&sc)?;
    if let Some(e) = outcome.abort {
        return Err(e);
    }
    let disc = Discretizer::new(&build_a(&sc.inertia, sc.orbit.n, sc.gamma()), sc.dt_control)?;
    let w = sc.settings.weights;
    let (q, r) = (w.q_mat(), w.r_mat());
    let mut warm = None;
    let mut oracle_prev = None;
    let mut samples = Vec::with_capacity(outcome.log.rows.len());
    for row in &outcome.log.rows {
        let b: Vector3<f64> = row.b();
        let m = disc.discretize(&build_bc(&sc.inertia, &b)?, row.t);
        let warm_sol = solve_dare(&m.ad, &m.bd, &w, warm.as_ref())?;
        let cold_sol = solve_dare(&m.ad, &m.bd, &w, None)?;
        let (p_ref, oracle_iterations) =
            dare_value_iteration(&m.ad, &m.bd, &q, &r, oracle_prev.as_ref(), ORACLE_TOL, ORACLE_MAX_ITER)?;
        let rel_err = norm2(&(&warm_sol.p - &p_ref)) / norm2(&p_ref);
        samples.push(DareSample {
            t: row.t,
            rel_err,
            warm_iterations: warm_sol.iterations,
            cold_iterations: cold_sol.iterations,
            oracle_iterations,
        });
        warm = Some(warm_sol.sign);
        oracle_prev = Some(p_ref);
    }
    Ok(DareAccuracy { samples })
}

pub struct DareAccuracyAnalysis;

impl Analysis for DareAccuracyAnalysis {
    fn name(&self) -> &'static str {
        "dare-accuracy"
    }

    fn description(&self) -> &'static str {
        "Riccati solver versus value-iteration oracle over two orbits: dare_accuracy.csv"
    }

    fn run(&self, cfg: &ScenarioConfig, out: &Path) -> Result<AnalysisReport> {
        let acc = dare_accuracy(cfg, 2.0)?;
        let mut files = Vec::new();
        let mut w = csv_writer(out, "dare_accuracy.csv", &mut files)?;
        w.write_record(["t", "rel_err", "warm_iterations", "cold_iterations", "oracle_iterations"])?;
        for s in &acc.samples {
            w.write_record([
                s.t.to_string(),
                s.rel_err.to_string(),
                s.warm_iterations.to_string(),
                s.cold_iterations.to_string(),
                s.oracle_iterations.to_string(),
            ])?;
        }
        w.flush()?;
        let mut summary = String::new();
        writeln!(summary, "samples: {}", acc.samples.len()).ok();
        writeln!(summary, "max relative 2-norm error: {:.3e}", acc.max_rel_err()).ok();
        writeln!(summary, "warm <= cold iterations: {:.1}% of samples", 100.0 * acc.warm_no_worse_fraction()).ok();
        write_text(out, "dare_summary.txt", &summary, &mut files)?;
        Ok(AnalysisReport { name: self.name(), summary, files, failure: None })
    }
}

/// Analyses selectable by name.
pub struct AnalysisRegistry {
    entries: BTreeMap<&'static str, Arc<dyn Analysis>>,
}

impl Default for AnalysisRegistry {
    fn default() -> Self {
        let mut reg = Self { entries: BTreeMap::new() };
        reg.register(Arc::new(Simulate));
        reg.register(Arc::new(EigStudy));
        reg.register(Arc::new(StiffnessSweep));
        reg.register(Arc::new(CtrbCheck));
        reg.register(Arc::new(DareAccuracyAnalysis));
        reg
    }
}

impl AnalysisRegistry {
    pub fn register(&mut self, a: Arc<dyn Analysis>) {
        self.entries.insert(a.name(), a);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Analysis>> {
        self.entries
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Validation(format!("unknown analysis '{name}' (known: {:?})", self.names())))
    }

    pub fn all(&self) -> Vec<Arc<dyn Analysis>> {
        self.entries.values().cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_names() {
        let reg = AnalysisRegistry::default();
        assert_eq!(reg.names(), ["ctrb-check", "dare-accuracy", "eig-study", "simulate", "stiffness-sweep"]);
        assert!(matches!(reg.get("bogus"), Err(Error::Validation(_))));
    }

    #[test]
    fn static_analyses_write_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ScenarioConfig::default();
        for name in ["eig-study", "stiffness-sweep", "ctrb-check"] {
            let rep = AnalysisRegistry::default().get(name).unwrap().run(&cfg, dir.path()).unwrap();
            assert!(rep.failure.is_none());
            for f in &rep.files {
                assert!(std::fs::metadata(f).unwrap().len() > 0, "{}", f.display());
            }
        }
        let text = std::fs::read_to_string(dir.path().join("ctrb.txt")).unwrap();
        assert!(text.contains("verdict: controllable"), "{text}");
    }
}
