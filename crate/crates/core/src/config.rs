//! Scenario configuration: a flat JSON document in user units (degrees,
//! kilometres, seconds) with every key optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::{ControllerRegistry, Weights};
use crate::environment::{FieldRegistry, DEFAULT_DENSITY, EARTH_ROTATION_RATE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PanelSettings {
    pub half_width_m: f64,
    pub length_m: f64,
    pub deploy_angle_deg: f64,
    /// Area of one panel.
    pub area_m2: f64,
    pub drag_coefficient: f64,
    pub density_kg_m3: f64,
}

impl Default for PanelSettings {
    fn default() -> Self {
        Self {
            half_width_m: 0.05,
            length_m: 0.20,
            deploy_angle_deg: 131.0,
            area_m2: 0.02,
            drag_coefficient: 2.2,
            density_kg_m3: DEFAULT_DENSITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisturbanceSettings {
    pub magnitude_nm: f64,
    /// Body-frame direction; normalized when the scenario is built.
    pub direction: [f64; 3],
}

impl Default for DisturbanceSettings {
    fn default() -> Self {
        Self { magnitude_nm: 1e-8, direction: [1.0, 1.0, 1.0] }
    }
}

/// Everything needed to run one closed-loop scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// "lqr", "mpc" or "none".
    pub controller: String,
    /// MPC prediction horizon.
    pub horizon: usize,
    /// Roll, pitch, yaw relative to LVLH.
    pub initial_angles_deg: [f64; 3],
    /// Body rates relative to inertial space.
    pub initial_rates_deg_s: [f64; 3],
    /// Principal moments.
    pub inertia_kg_m2: [f64; 3],
    pub altitude_km: f64,
    pub inclination_deg: f64,
    pub period_s: f64,
    /// Inclination to the magnetic equator; defaults to the geographic one.
    pub magnetic_inclination_deg: Option<f64>,
    /// "tilted-dipole" or "psiaki".
    pub field_model: String,
    /// T m^3.
    pub dipole_strength: f64,
    pub dipole_tilt_deg: f64,
    pub pole_longitude_deg: f64,
    /// rad/s.
    pub earth_rotation_rate: f64,
    pub raan_deg: f64,
    pub initial_arg_latitude_deg: f64,
    pub gmst0_deg: f64,
    pub panels: Option<PanelSettings>,
    pub disturbance: Option<DisturbanceSettings>,
    pub q_diag: [f64; 6],
    pub r_diag: [f64; 3],
    /// Per-axis dipole limit, A m^2.
    pub u_max: f64,
    pub dt_control: f64,
    pub dt_integrate: f64,
    pub duration_orbits: f64,
    pub log_stride_s: f64,
    /// Reserved; the simulation is deterministic.
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let w = Weights::default();
        Self {
            controller: "lqr".into(),
            horizon: 5,
            initial_angles_deg: [-35.0, -75.0, 75.0],
            initial_rates_deg_s: [-10.0, 10.0, -10.0],
            inertia_kg_m2: [3_654_338e-9, 9_060_235e-9, 8_813_148e-9],
            altitude_km: 415.0,
            inclination_deg: 51.6,
            period_s: 5570.0,
            magnetic_inclination_deg: None,
            field_model: "tilted-dipole".into(),
            dipole_strength: 7.9e15,
            dipole_tilt_deg: 11.5,
            pole_longitude_deg: -72.6,
            earth_rotation_rate: EARTH_ROTATION_RATE,
            raan_deg: 0.0,
            initial_arg_latitude_deg: 0.0,
            gmst0_deg: 0.0,
            panels: None,
            disturbance: None,
            q_diag: w.q,
            r_diag: w.r,
            u_max: 0.1,
            dt_control: 4.0,
            dt_integrate: 0.5,
            duration_orbits: 6.0,
            log_stride_s: 4.0,
            seed: 0,
        }
    }
}

fn is_multiple(big: f64, small: f64) -> bool {
    let r = big / small;
    (r - r.round()).abs() <= 1e-9 * r.max(1.0) && r.round() >= 1.0
}

impl ScenarioConfig {
    pub fn weights(&self) -> Weights {
        Weights { q: self.q_diag, r: self.r_diag }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        if !ControllerRegistry::default().contains(&self.controller) {
            return fail(format!(
                "controller: unknown '{}' (known: {:?})",
                self.controller,
                ControllerRegistry::default().names()
            ));
        }
        if !FieldRegistry::default().names().contains(&self.field_model.as_str()) {
            return fail(format!("field_model: unknown '{}'", self.field_model));
        }
        if self.horizon == 0 {
            return fail("horizon: must be at least 1".into());
        }
        if !(self.dt_control > 0.0) || !(self.dt_integrate > 0.0) {
            return fail("dt_control, dt_integrate: must be positive".into());
        }
        if self.dt_integrate > self.dt_control {
            return fail(format!(
                "dt_integrate ({}) must not exceed dt_control ({})",
                self.dt_integrate, self.dt_control
            ));
        }
        if !is_multiple(self.dt_control, self.dt_integrate) {
            return fail("dt_control must be an integer multiple of dt_integrate".into());
        }
        if !is_multiple(self.log_stride_s, self.dt_control) {
            return fail("log_stride_s must be an integer multiple of dt_control".into());
        }
        if !(self.duration_orbits > 0.0) || !self.duration_orbits.is_finite() {
            return fail("duration_orbits: must be positive".into());
        }
        if !(self.u_max > 0.0) {
            return fail("u_max: must be positive".into());
        }
        if !(self.dipole_strength > 0.0) {
            return fail("dipole_strength: must be positive".into());
        }
        if self.initial_angles_deg.iter().chain(&self.initial_rates_deg_s).any(|v| !v.is_finite()) {
            return fail("initial state must be finite".into());
        }
        self.weights().validate()?;
        if let Some(d) = &self.disturbance {
            let norm = d.direction.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 0.0) || !d.magnitude_nm.is_finite() {
                return fail("disturbance: direction must be nonzero and magnitude finite".into());
            }
        }
        if let Some(p) = &self.panels {
            if !(90.0..=180.0).contains(&p.deploy_angle_deg) {
                return fail(format!("panels.deploy_angle_deg {} outside [90, 180]", p.deploy_angle_deg));
            }
        }
        // remaining physical checks happen when the scenario is resolved
        crate::sim::Scenario::from_config(self).map(|_| ())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Parse and validate a JSON document.
pub fn parse_config_str(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("{e} (line {}, column {})", e.line(), e.column())))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config_str(&text)
}
