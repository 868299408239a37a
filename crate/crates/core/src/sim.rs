//! Closed-loop simulation: RK4 on the nonlinear equations of motion with a
//! zero-order-hold controller.

use std::io::Write;
use std::path::Path;

use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::attitude::{
    dcm_obl, euler_rates, pointing_angle, recast_angles, wrap_angle, AttitudeState, BodyRates, EulerAngles321,
};
use crate::config::ScenarioConfig;
use crate::control::{ControlCommand, ControlContext, ControllerRegistry, ControllerSettings, Discretizer};
use crate::controllability::theorem1_check;
use crate::dynamics::{eom_rhs, DisturbanceSpec, Environment, InertiaMatrix, PanelConfig};
use crate::environment::{DipoleField, FieldModel, FieldRegistry, OrbitParams};
use crate::error::{Error, Result};
use crate::linmodel::{build_a, build_bc};

/// Largest Euler-angle increment allowed in one RK4 step; the step is
/// halved until the estimate fits. Only matters close to gimbal lock,
/// where roll and yaw rates grow like 1/cos(theta).
pub const MAX_ANGLE_INCREMENT: f64 = 0.05;
const MAX_HALVINGS: u32 = 24;

/// Pointing requirement half-angle.
pub const CONE_HALF_ANGLE: f64 = 20.0 * std::f64::consts::PI / 180.0;

/// Resolved scenario in SI units and radians.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub initial: AttitudeState,
    pub orbit: OrbitParams,
    pub dipole: DipoleField,
    /// Argument of latitude at t = 0.
    pub orbit_phase: f64,
    pub inertia: InertiaMatrix,
    pub panels: Option<PanelConfig>,
    pub disturbance: Option<DisturbanceSpec>,
    pub controller: String,
    pub settings: ControllerSettings,
    pub field_model: String,
    pub dt_control: f64,
    pub dt_integrate: f64,
    /// Seconds.
    pub duration: f64,
    pub log_stride: f64,
}

impl Scenario {
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        let [j1, j2, j3] = cfg.inertia_kg_m2;
        let inertia = InertiaMatrix::new(j1, j2, j3)?;
        let incl = cfg.inclination_deg.to_radians();
        let i_m = cfg.magnetic_inclination_deg.map(f64::to_radians).unwrap_or(incl);
        let mut orbit = OrbitParams::new(cfg.altitude_km, cfg.period_s, incl, i_m)?;
        orbit.raan = cfg.raan_deg.to_radians();
        let dipole = DipoleField {
            mu_f: cfg.dipole_strength,
            tilt: cfg.dipole_tilt_deg.to_radians(),
            earth_rotation_rate: cfg.earth_rotation_rate,
            pole_longitude: cfg.pole_longitude_deg.to_radians(),
            gmst0: cfg.gmst0_deg.to_radians(),
        };
        dipole.validate()?;
        let panels = match &cfg.panels {
            Some(p) => {
                let pc = PanelConfig {
                    r: p.half_width_m,
                    length: p.length_m,
                    delta: p.deploy_angle_deg.to_radians(),
                    area: p.area_m2,
                    c_d: p.drag_coefficient,
                    rho: p.density_kg_m3,
                    orbit_radius: orbit.a,
                };
                pc.validate()?;
                Some(pc)
            }
            None => None,
        };
        let disturbance = match &cfg.disturbance {
            Some(d) => {
                let v = Vector3::from(d.direction);
                if !(v.norm() > 0.0) {
                    return Err(Error::Validation("disturbance direction must be nonzero".into()));
                }
                let u = v.normalize();
                let spec = DisturbanceSpec { magnitude: d.magnitude_nm, direction: [u[0], u[1], u[2]] };
                spec.validate()?;
                Some(spec)
            }
            None => None,
        };
        let [a0, a1, a2] = cfg.initial_angles_deg;
        let [w0, w1, w2] = cfg.initial_rates_deg_s;
        Ok(Self {
            initial: AttitudeState::new(
                EulerAngles321::from_degrees(a0, a1, a2),
                BodyRates::new(w0.to_radians(), w1.to_radians(), w2.to_radians()),
            ),
            orbit,
            dipole,
            orbit_phase: cfg.initial_arg_latitude_deg.to_radians(),
            inertia,
            panels,
            disturbance,
            controller: cfg.controller.clone(),
            settings: ControllerSettings { weights: cfg.weights(), u_max: cfg.u_max, horizon: cfg.horizon },
            field_model: cfg.field_model.clone(),
            dt_control: cfg.dt_control,
            dt_integrate: cfg.dt_integrate,
            duration: cfg.duration_orbits * cfg.period_s,
            log_stride: cfg.log_stride_s,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.panels.map(|p| p.gamma()).unwrap_or(0.0)
    }
}

/// Classical fourth-order Runge-Kutta step for x' = f(t, x). The first
/// three components (Euler angles) are wrapped to (-pi, pi] afterwards.
pub fn rk4_step<F>(t: f64, x: &Vector6<f64>, h: f64, mut f: F) -> Result<Vector6<f64>>
where
    F: FnMut(f64, &Vector6<f64>) -> Result<Vector6<f64>>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step {h} must be positive")));
    }
    let k1 = f(t, x)?;
    let k2 = f(t + 0.5 * h, &(x + k1 * (0.5 * h)))?;
    let k3 = f(t + 0.5 * h, &(x + k2 * (0.5 * h)))?;
    let k4 = f(t + h, &(x + k3 * h))?;
    let mut out = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    for i in 0..3 {
        out[i] = wrap_angle(out[i]);
    }
    Ok(out)
}

/// One log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: f64,
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub pointing: f64,
    pub saturated: u8,
}

/// Column names of the trajectory CSV. Angles in rad, rates in rad/s,
/// u in N m, dipole in A m^2, body-frame field in T.
pub const LOG_HEADER: [&str; 18] = [
    "t", "phi", "theta", "psi", "w1", "w2", "w3", "u1", "u2", "u3", "m1", "m2", "m3", "b1", "b2", "b3", "pointing",
    "saturated",
];

impl LogRow {
    pub fn new(t: f64, x: &AttitudeState, cmd: &ControlCommand, b_body: &Vector3<f64>) -> Self {
        Self {
            t,
            phi: x.angles.phi,
            theta: x.angles.theta,
            psi: x.angles.psi,
            w1: x.rates.w1,
            w2: x.rates.w2,
            w3: x.rates.w3,
            u1: cmd.u[0],
            u2: cmd.u[1],
            u3: cmd.u[2],
            m1: cmd.m[0],
            m2: cmd.m[1],
            m3: cmd.m[2],
            b1: b_body[0],
            b2: b_body[1],
            b3: b_body[2],
            pointing: pointing_angle(&x.angles),
            saturated: cmd.saturated as u8,
        }
    }

    pub fn m(&self) -> Vector3<f64> {
        Vector3::new(self.m1, self.m2, self.m3)
    }

    pub fn b(&self) -> Vector3<f64> {
        Vector3::new(self.b1, self.b2, self.b3)
    }

    pub fn angles(&self) -> EulerAngles321 {
        EulerAngles321::new(self.phi, self.theta, self.psi)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryLog {
    pub rows: Vec<LogRow>,
}

impl TrajectoryLog {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        wr.write_record(LOG_HEADER)?;
        for r in &self.rows {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        if header != LOG_HEADER {
            return Err(Error::Parse(format!("unexpected trajectory header {header:?}")));
        }
        let rows = rd.deserialize().collect::<std::result::Result<Vec<LogRow>, _>>()?;
        Ok(Self { rows })
    }

    /// Rows with t in [t0, t1].
    pub fn window(&self, t0: f64, t1: f64) -> impl Iterator<Item = &LogRow> {
        self.rows.iter().filter(move |r| r.t >= t0 && r.t <= t1)
    }
}

/// Earliest logged time after which every logged pointing angle stays
/// within `cone`.
pub fn time_to_cone(log: &TrajectoryLog, cone: f64) -> Option<f64> {
    let last_bad = log.rows.iter().rposition(|r| !(r.pointing <= cone));
    match last_bad {
        None => log.rows.first().map(|r| r.t),
        Some(i) => log.rows.get(i + 1).map(|r| r.t),
    }
}

/// Scalar metrics of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub controller: String,
    pub duration_s: f64,
    pub time_to_cone_s: Option<f64>,
    pub time_to_cone_orbits: Option<f64>,
    /// Largest pointing angle after the first entry into the cone (deg).
    pub max_overshoot_deg: Option<f64>,
    /// Fraction of control periods with a rescaled dipole.
    pub saturation_duty: f64,
    pub final_pointing_deg: f64,
    pub mean_dare_iterations: f64,
    pub aborted: Option<String>,
}

impl RunSummary {
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>, unit: &str| v.map(|x| format!("{x:.3} {unit}")).unwrap_or_else(|| "never".into());
        let mut s = String::new();
        s += &format!("controller: {}\n", self.controller);
        s += &format!("simulated: {:.1} s\n", self.duration_s);
        s += &format!("time to 20 deg cone: {} ({})\n", opt(self.time_to_cone_s, "s"), opt(self.time_to_cone_orbits, "orbits"));
        s += &format!("max overshoot after first entry: {}\n", opt(self.max_overshoot_deg, "deg"));
        s += &format!("saturation duty cycle: {:.4}\n", self.saturation_duty);
        s += &format!("final pointing angle: {:.4} deg\n", self.final_pointing_deg);
        s += &format!("mean Riccati iterations: {:.2}\n", self.mean_dare_iterations);
        s += &format!("status: {}\n", self.aborted.as_deref().unwrap_or("completed"));
        s
    }
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub log: TrajectoryLog,
    pub summary: RunSummary,
    /// Set when the run stopped early; the log holds everything up to the
    /// failure.
    pub abort: Option<Error>,
}

fn body_field(field: &dyn FieldModel, t: f64, angles: &EulerAngles321) -> Vector3<f64> {
    dcm_obl(angles) * field.field_lvlh(t)
}

/// Advance by `h`, halving the step where the Euler-angle increment would
/// be too large for RK4 to resolve.
fn propagate<F>(t: f64, x: &Vector6<f64>, h: f64, n: f64, f: &mut F) -> Result<Vector6<f64>>
where
    F: FnMut(f64, &Vector6<f64>) -> Result<Vector6<f64>>,
{
    let state = AttitudeState::from_vector(x);
    let rates = euler_rates(&state.angles, &state.rates, n)?;
    // angle steps, and pitch steps measured against the distance to the
    // singular pitch, both kept below the limit
    let inc = (rates.amax() * h).max(rates[1].abs() * h / state.angles.theta.cos().abs());
    let mut pieces = 1u64;
    let mut halvings = 0;
    while inc / pieces as f64 > MAX_ANGLE_INCREMENT && halvings < MAX_HALVINGS {
        pieces *= 2;
        halvings += 1;
    }
    let sub = h / pieces as f64;
    let mut y = *x;
    for i in 0..pieces {
        y = rk4_step(t + i as f64 * sub, &y, sub, &mut *f)?;
        if y[1].abs() > std::f64::consts::FRAC_PI_2 {
            let a = recast_angles(&EulerAngles321::new(y[0], y[1], y[2]))?;
            y[0] = a.phi;
            y[1] = a.theta;
            y[2] = a.psi;
        }
    }
    Ok(y)
}

/// Runs the scenario. Failures after the start (singularity, solver)
/// end the run and are reported in [`SimOutcome::abort`].
pub fn run_scenario(sc: &Scenario) -> Result<SimOutcome> {
    let field = FieldRegistry::default().build(&sc.field_model, &sc.orbit, &sc.dipole, sc.orbit_phase)?;
    let mut ctrl = ControllerRegistry::default().build(&sc.controller, &sc.settings)?;
    let report = theorem1_check(&sc.inertia, sc.gamma(), &sc.orbit, &sc.dipole);
    if !report.controllable {
        log::warn!("linearized system fails the controllability check: {:?}", report.failed_conditions);
    }
    let n = sc.orbit.n;
    let disc = Discretizer::new(&build_a(&sc.inertia, n, sc.gamma()), sc.dt_control)?;
    let sub_steps = (sc.dt_control / sc.dt_integrate).round().max(1.0) as usize;
    let h = sc.dt_control / sub_steps as f64;
    let n_ctrl = (sc.duration / sc.dt_control).round() as usize;
    let log_every = (sc.log_stride / sc.dt_control).round().max(1.0) as usize;
    let env = Environment { panels: sc.panels.as_ref(), disturbance: sc.disturbance.as_ref(), large_angle_panels: true };

    let mut log = TrajectoryLog::default();
    let mut saturated_steps = 0usize;
    let mut dare_iters = 0usize;
    let mut ctrl_steps = 0usize;
    let mut abort = None;

    let start = AttitudeState::new(recast_angles(&sc.initial.angles)?, sc.initial.rates);
    let mut x = start.to_vector();
    for k in 0..=n_ctrl {
        let t = k as f64 * sc.dt_control;
        let state = AttitudeState::from_vector(&x);
        let b_body = body_field(field.as_ref(), t, &state.angles);
        let step = (|| -> Result<ControlCommand> {
            let x_dev = state.deviation(n);
            let model = if ctrl.needs_model() {
                disc.discretize(&build_bc(&sc.inertia, &b_body)?, t)
            } else {
                disc.discretize(&crate::numerics::Mat::zeros(6, 3), t)
            };
            ctrl.command(&ControlContext { t, x_dev: &x_dev, b_body: &b_body, model: &model })
        })();
        let cmd = match step {
            Ok(c) => c,
            Err(e) => {
                abort = Some(e);
                break;
            }
        };
        if k % log_every == 0 {
            log.rows.push(LogRow::new(t, &state, &cmd, &b_body));
        }
        if k == n_ctrl {
            break;
        }
        ctrl_steps += 1;
        saturated_steps += cmd.saturated as usize;
        dare_iters += ctrl.last_stats().dare_iterations;

        let m = cmd.m;
        let mut rhs = |tt: f64, xx: &Vector6<f64>| {
            let s = AttitudeState::from_vector(xx);
            let b = body_field(field.as_ref(), tt, &s.angles);
            eom_rhs(&s, &m, &b, &sc.inertia, &env, n)
        };
        let mut failed = None;
        for i in 0..sub_steps {
            match propagate(t + i as f64 * h, &x, h, n, &mut rhs) {
                Ok(y) => x = y,
                Err(e) => {
                    failed = Some(e);
                    break;
                }
            }
        }
        if let Some(e) = failed {
            log::error!("run aborted at t = {t:.1} s: {e}");
            abort = Some(e);
            break;
        }
    }

    let summary = summarize(sc, &log, saturated_steps, ctrl_steps, dare_iters, abort.as_ref());
    Ok(SimOutcome { log, summary, abort })
}

pub fn run_config(cfg: &ScenarioConfig) -> Result<SimOutcome> {
    run_scenario(&Scenario::from_config(cfg)?)
}

fn summarize(
    sc: &Scenario,
    log: &TrajectoryLog,
    saturated: usize,
    steps: usize,
    dare_iters: usize,
    abort: Option<&Error>,
) -> RunSummary {
    let ttc = if abort.is_some() { None } else { time_to_cone(log, CONE_HALF_ANGLE) };
    let first_entry = log.rows.iter().position(|r| r.pointing <= CONE_HALF_ANGLE);
    let overshoot = first_entry.map(|i| log.rows[i..].iter().map(|r| r.pointing).fold(0.0, f64::max).to_degrees());
    RunSummary {
        controller: sc.controller.clone(),
        duration_s: log.rows.last().map(|r| r.t).unwrap_or(0.0),
        time_to_cone_s: ttc,
        time_to_cone_orbits: ttc.map(|t| t / sc.orbit.period),
        max_overshoot_deg: overshoot,
        saturation_duty: if steps > 0 { saturated as f64 / steps as f64 } else { 0.0 },
        final_pointing_deg: log.rows.last().map(|r| r.pointing.to_degrees()).unwrap_or(f64::NAN),
        mean_dare_iterations: if steps > 0 { dare_iters as f64 / steps as f64 } else { 0.0 },
        aborted: abort.map(|e| e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn row(t: f64, pointing: f64) -> LogRow {
        LogRow { t, pointing, ..LogRow::new(0.0, &AttitudeState::equilibrium(0.0), &ControlCommand::zero(), &Vector3::zeros()) }
    }

    #[test]
    fn rk4_trivial_and_scalar() {
        let x = Vector6::new(0.1, 0.2, 0.3, 0.4, 0.5, 0.6);
        assert_eq!(rk4_step(0.0, &x, 0.1, |_, _| Ok(Vector6::zeros())).unwrap(), x);
        let y = rk4_step(0.0, &Vector6::new(0.0, 0.0, 0.0, 1.0, 0.0, 0.0), 0.1, |_, v| Ok(-v)).unwrap();
        let h: f64 = 0.1;
        let taylor = 1.0 - h + h * h / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0;
        assert_relative_eq!(y[3], taylor, epsilon = 1e-12);
        assert!(rk4_step(0.0, &x, 0.0, |_, _| Ok(Vector6::zeros())).is_err());
    }

    #[test]
    fn free_body_conserves_energy_and_momentum() {
        let j = InertiaMatrix::paper_default();
        let jm = j.matrix();
        let mut x = AttitudeState::new(
            EulerAngles321::new(0.1, 0.2, 0.3),
            BodyRates::new(10f64.to_radians(), -10f64.to_radians(), 10f64.to_radians()),
        )
        .to_vector();
        let w0 = Vector3::new(x[3], x[4], x[5]);
        let e0 = w0.dot(&(jm * w0));
        let h0 = (jm * w0).norm();
        let env = Environment::default();
        let h = 0.1;
        for i in 0..10_000 {
            x = rk4_step(i as f64 * h, &x, h, |_, v| {
                let s = AttitudeState::from_vector(v);
                // only the rate equations matter here; keep the angles fixed
                let mut d = eom_rhs(&AttitudeState::new(EulerAngles321::new(0.0, 0.0, 0.0), s.rates), &Vector3::zeros(), &Vector3::zeros(), &j, &env, 0.0)?;
                d[0] = 0.0;
                d[1] = 0.0;
                d[2] = 0.0;
                Ok(d)
            })
            .unwrap();
        }
        let w = Vector3::new(x[3], x[4], x[5]);
        assert!((w.dot(&(jm * w)) - e0).abs() <= 1e-8 * e0);
        assert!(((jm * w).norm() - h0).abs() <= 1e-8 * h0);
    }

    #[test]
    fn time_to_cone_examples() {
        let c = CONE_HALF_ANGLE;
        let inside = TrajectoryLog { rows: (0..5).map(|i| row(i as f64 * 4.0, 0.1)).collect() };
        assert_eq!(time_to_cone(&inside, c), Some(0.0));
        let outside = TrajectoryLog { rows: (0..5).map(|i| row(i as f64 * 4.0, 1.0)).collect() };
        assert_eq!(time_to_cone(&outside, c), None);
        let entering = TrajectoryLog {
            rows: (0..50).map(|i| row(i as f64 * 4.0, if i < 25 { 0.5 } else { 0.1 })).collect(),
        };
        assert_eq!(time_to_cone(&entering, c), Some(100.0));
    }

    #[test]
    fn csv_round_trip() {
        let log = TrajectoryLog { rows: (0..3).map(|i| row(i as f64, 0.25 * i as f64)).collect() };
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,phi,theta,psi,w1,w2,w3,u1,u2,u3,m1,m2,m3,b1,b2,b3,pointing,saturated\n"));
        assert_eq!(TrajectoryLog::read_csv(buf.as_slice()).unwrap(), log);
    }

    #[test]
    fn uncontrolled_equilibrium_holds() {
        let cfg = ScenarioConfig {
            controller: "none".into(),
            initial_angles_deg: [0.0; 3],
            initial_rates_deg_s: [0.0, -(360.0 / 5570.0), 0.0],
            duration_orbits: 0.1,
            ..Default::default()
        };
        let out = run_config(&cfg).unwrap();
        assert!(out.abort.is_none());
        assert!(out.log.rows.iter().all(|r| r.pointing < 1e-6));
        assert_eq!(out.log.rows.len(), (0.1 * 5570.0 / 4.0f64).round() as usize + 1);
    }
}
