//! Torque models and the nonlinear equations of motion.

use nalgebra::{Matrix3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::attitude::{dcm_obl, euler_rates, skew, AttitudeState, EulerAngles321};
use crate::error::{Error, Result};

/// Principal moments of inertia (kg m^2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InertiaMatrix {
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
}

impl InertiaMatrix {
    pub fn new(j1: f64, j2: f64, j3: f64) -> Result<Self> {
        let j = Self { j1, j2, j3 };
        j.validate()?;
        Ok(j)
    }

    /// The 2U cubesat, given in g mm^2.
    pub fn paper_default() -> Self {
        Self::from_g_mm2(3_654_338.0, 9_060_235.0, 8_813_148.0)
    }

    pub fn from_g_mm2(j1: f64, j2: f64, j3: f64) -> Self {
        Self { j1: j1 * 1e-9, j2: j2 * 1e-9, j3: j3 * 1e-9 }
    }

    pub fn validate(&self) -> Result<()> {
        let [a, b, c] = self.as_array();
        if !(a > 0.0 && b > 0.0 && c > 0.0) || !(a + b + c).is_finite() {
            return Err(Error::Validation(format!("principal moments {:?} must be positive", self.as_array())));
        }
        let slack = 1e-12 * (a + b + c);
        if a + b + slack < c || b + c + slack < a || a + c + slack < b {
            return Err(Error::Validation(format!(
                "principal moments {:?} violate the triangle inequality",
                self.as_array()
            )));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.j1, self.j2, self.j3]
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(self.j1, self.j2, self.j3))
    }

    pub fn j12(&self) -> f64 {
        (self.j1 - self.j2) / self.j3
    }

    pub fn j23(&self) -> f64 {
        (self.j2 - self.j3) / self.j1
    }

    pub fn j31(&self) -> f64 {
        (self.j3 - self.j1) / self.j2
    }

    pub fn j21(&self) -> f64 {
        -self.j12()
    }

    pub fn j32(&self) -> f64 {
        -self.j23()
    }

    pub fn j13(&self) -> f64 {
        -self.j31()
    }
}

/// Four drag panels hinged at the aft end of the bus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelConfig {
    /// Body half-width (m).
    pub r: f64,
    /// Panel length (m).
    pub length: f64,
    /// Deployment angle (rad), in [pi/2, pi].
    pub delta: f64,
    /// Single-panel area (m^2).
    pub area: f64,
    pub c_d: f64,
    /// Atmospheric density (kg/m^3).
    pub rho: f64,
    /// Orbital radius (m); sets the flow speed a*n.
    pub orbit_radius: f64,
}

impl PanelConfig {
    pub fn validate(&self) -> Result<()> {
        use std::f64::consts::{FRAC_PI_2, PI};
        let tol = 1e-12;
        if self.delta < FRAC_PI_2 - tol || self.delta > PI + tol || !self.delta.is_finite() {
            return Err(Error::Validation(format!(
                "deployment angle {:.3} deg outside [90, 180]",
                self.delta.to_degrees()
            )));
        }
        if !(self.area >= 0.0) {
            return Err(Error::Validation(format!("panel area {} must be >= 0", self.area)));
        }
        if !(self.r > 0.0 && self.length >= 0.0 && self.c_d >= 0.0 && self.rho >= 0.0 && self.orbit_radius > 0.0) {
            return Err(Error::Validation("panel geometry and flow parameters must be non-negative".into()));
        }
        Ok(())
    }

    pub fn w(&self) -> f64 {
        self.r - self.length * self.delta.cos()
    }

    pub fn h(&self) -> f64 {
        0.5 * self.r + self.length * self.delta.sin()
    }

    /// Dynamic-pressure factor 0.5 rho a^2 A C_D (kg m).
    pub fn f(&self) -> f64 {
        0.5 * self.rho * self.orbit_radius.powi(2) * self.area * self.c_d
    }

    /// Geometric factor cos d - 4 sin d + 3 (L/r) sin 2d.
    pub fn shape_factor(&self) -> f64 {
        let d = self.delta;
        d.cos() - 4.0 * d.sin() + 3.0 * (self.length / self.r) * (2.0 * d).sin()
    }

    /// Aerodynamic stiffness coefficient (kg m^2): the linear panel torque
    /// is n^2 Gamma [0, theta, psi].
    pub fn gamma(&self) -> f64 {
        self.r * self.f() * self.shape_factor()
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        Self { delta, ..*self }
    }

    pub fn with_area(&self, area: f64) -> Self {
        Self { area, ..*self }
    }
}

/// Constant body-frame disturbance torque.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSpec {
    /// N m.
    pub magnitude: f64,
    pub direction: [f64; 3],
}

impl Default for DisturbanceSpec {
    fn default() -> Self {
        let c = 1.0 / 3f64.sqrt();
        Self { magnitude: 1e-8, direction: [c, c, c] }
    }
}

impl DisturbanceSpec {
    pub fn validate(&self) -> Result<()> {
        let d = Vector3::from(self.direction);
        if (d.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("disturbance direction norm {} is not 1", d.norm())));
        }
        if !self.magnitude.is_finite() {
            return Err(Error::Validation("disturbance magnitude must be finite".into()));
        }
        Ok(())
    }

    pub fn torque(&self) -> Vector3<f64> {
        self.magnitude * Vector3::from(self.direction)
    }
}

/// Gravity-gradient torque for a body at Euler angles `a` in a circular
/// orbit of mean motion `n`.
pub fn gravity_gradient_torque(a: &EulerAngles321, j: &InertiaMatrix, n: f64) -> Vector3<f64> {
    let (sp, cp) = a.phi.sin_cos();
    let (st, ct) = a.theta.sin_cos();
    3.0 * n * n
        * Vector3::new(
            -(j.j2 - j.j3) * cp * sp * ct * ct,
            (j.j3 - j.j1) * cp * ct * st,
            (j.j1 - j.j2) * sp * ct * st,
        )
}

pub fn magnetic_torque(m: &Vector3<f64>, b: &Vector3<f64>) -> Vector3<f64> {
    m.cross(b)
}

/// Sum of the four per-panel drag torques (small-angle force model).
pub fn panel_torque_sum(a: &EulerAngles321, p: &PanelConfig, n: f64) -> Vector3<f64> {
    let (sd, cd) = p.delta.sin_cos();
    let (w, h) = (p.w(), p.h());
    let (th, ps) = (a.theta, a.psi);
    let arms = [
        Vector3::new(-w, 0.0, -h),
        Vector3::new(-w, 0.0, h),
        Vector3::new(-w, -h, 0.0),
        Vector3::new(-w, h, 0.0),
    ];
    let factors = [sd + cd * th, sd - cd * th, sd - cd * ps, sd + cd * ps];
    let dir = Vector3::new(-1.0, ps, -th);
    let scale = n * n * p.f();
    arms.iter().zip(factors).fold(Vector3::zeros(), |acc, (r, k)| {
        acc + r.cross(&(scale * k * dir))
    })
}

/// Unit outward normals of the four panels, matching the arms used by
/// [`panel_torque_sum`].
fn panel_normals(delta: f64) -> [Vector3<f64>; 4] {
    let (sd, cd) = delta.sin_cos();
    [
        Vector3::new(sd, 0.0, cd),
        Vector3::new(sd, 0.0, -cd),
        Vector3::new(sd, cd, 0.0),
        Vector3::new(sd, -cd, 0.0),
    ]
}

/// Drag torque for arbitrary attitude: the flow direction is the exact
/// body-frame velocity direction and a panel only loads when its normal
/// faces the flow (projected area max(0, n.v) A). Reduces to
/// [`panel_torque_sum`] to first order about the equilibrium and depends on
/// the attitude only, not on the Euler-angle branch.
pub fn panel_torque_geometric(a: &EulerAngles321, p: &PanelConfig, n: f64) -> Vector3<f64> {
    let v = dcm_obl(a).column(0).into_owned();
    let (w, h) = (p.w(), p.h());
    let arms = [
        Vector3::new(-w, 0.0, -h),
        Vector3::new(-w, 0.0, h),
        Vector3::new(-w, -h, 0.0),
        Vector3::new(-w, h, 0.0),
    ];
    let scale = n * n * p.f();
    arms.iter().zip(panel_normals(p.delta)).fold(Vector3::zeros(), |acc, (r, nrm)| {
        let k = nrm.dot(&v).max(0.0);
        acc + r.cross(&(-scale * k * v))
    })
}

pub fn panel_torque_linear(a: &EulerAngles321, p: &PanelConfig, n: f64) -> Vector3<f64> {
    n * n * p.gamma() * Vector3::new(0.0, a.theta, a.psi)
}

/// Everything acting on the body besides the commanded dipole.
#[derive(Debug, Clone, Copy, Default)]
pub struct Environment<'a> {
    pub panels: Option<&'a PanelConfig>,
    pub disturbance: Option<&'a DisturbanceSpec>,
    /// Use [`panel_torque_geometric`] instead of the small-angle sum.
    pub large_angle_panels: bool,
}

/// Time derivative of [phi, theta, psi, w1, w2, w3].
pub fn eom_rhs(
    x: &AttitudeState,
    m_dipole: &Vector3<f64>,
    b_body: &Vector3<f64>,
    j: &InertiaMatrix,
    env: &Environment<'_>,
    n: f64,
) -> Result<Vector6<f64>> {
    let q_dot = euler_rates(&x.angles, &x.rates, n)?;
    let w = x.rates.as_vector();
    let jm = j.matrix();
    let mut tau = magnetic_torque(m_dipole, b_body) + gravity_gradient_torque(&x.angles, j, n);
    if let Some(p) = env.panels {
        tau += if env.large_angle_panels {
            panel_torque_geometric(&x.angles, p, n)
        } else {
            panel_torque_sum(&x.angles, p, n)
        };
    }
    if let Some(d) = env.disturbance {
        tau += d.torque();
    }
    let rhs = tau - skew(&w) * (jm * w);
    let w_dot = Vector3::new(rhs[0] / j.j1, rhs[1] / j.j2, rhs[2] / j.j3);
    Ok(Vector6::new(q_dot[0], q_dot[1], q_dot[2], w_dot[0], w_dot[1], w_dot[2]))
}

/// Gravity-gradient torque in matrix form, 3 n^2 S[r] J r with r the
/// nadir direction in body axes.
pub fn gravity_gradient_matrix_form(a: &EulerAngles321, j: &InertiaMatrix, n: f64) -> Vector3<f64> {
    let r = dcm_obl(a) * Vector3::new(0.0, 0.0, -1.0);
    3.0 * n * n * skew(&r) * (j.matrix() * r)
}
