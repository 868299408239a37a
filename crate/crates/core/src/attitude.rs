//! 3-2-1 Euler-angle kinematics relative to the LVLH frame.
//!
//! The LVLH frame has its first axis along-track and its third axis
//! anti-radial; its angular velocity in inertial space is `[0, -n, 0]`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance from +/-pi/2 inside which the kinematics are treated as singular.
pub const SINGULARITY_GUARD: f64 = 1e-6;

/// Roll, pitch, yaw in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerAngles321 {
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
}

impl EulerAngles321 {
    pub fn new(phi: f64, theta: f64, psi: f64) -> Self {
        Self { phi, theta, psi }
    }

    pub fn from_degrees(phi: f64, theta: f64, psi: f64) -> Self {
        Self::new(phi.to_radians(), theta.to_radians(), psi.to_radians())
    }

    /// True when the pitch is inside the guard band around +/-pi/2.
    pub fn near_singularity(&self) -> bool {
        self.theta.cos().abs() < SINGULARITY_GUARD
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.phi, self.theta, self.psi)
    }

    /// Each component wrapped to (-pi, pi].
    pub fn wrapped(&self) -> Self {
        Self::new(wrap_angle(self.phi), wrap_angle(self.theta), wrap_angle(self.psi))
    }
}

/// Body-frame components of the inertial angular velocity (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BodyRates {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl BodyRates {
    pub fn new(w1: f64, w2: f64, w3: f64) -> Self {
        Self { w1, w2, w3 }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.w1, self.w2, self.w3)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

/// Full attitude state `[phi, theta, psi, w1, w2, w3]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AttitudeState {
    pub angles: EulerAngles321,
    pub rates: BodyRates,
}

impl AttitudeState {
    pub fn new(angles: EulerAngles321, rates: BodyRates) -> Self {
        Self { angles, rates }
    }

    /// LVLH-locked equilibrium `[0, 0, 0, 0, -n, 0]`.
    pub fn equilibrium(n: f64) -> Self {
        Self::new(EulerAngles321::default(), BodyRates::new(0.0, -n, 0.0))
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        let a = &self.angles;
        let w = &self.rates;
        Vector6::new(a.phi, a.theta, a.psi, w.w1, w.w2, w.w3)
    }

    pub fn from_vector(x: &Vector6<f64>) -> Self {
        Self::new(EulerAngles321::new(x[0], x[1], x[2]), BodyRates::new(x[3], x[4], x[5]))
    }

    /// Deviation from the equilibrium, the state used by the linear models.
    pub fn deviation(&self, n: f64) -> Vector6<f64> {
        let mut x = self.to_vector();
        x[4] += n;
        x
    }
}

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Cross-product matrix: `skew(v) * w == v x w`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0)
}

/// Direction cosine matrix of the body frame relative to LVLH,
/// `O1(phi) O2(theta) O3(psi)`.
pub fn dcm_obl(a: &EulerAngles321) -> Matrix3<f64> {
    let (sf, cf) = a.phi.sin_cos();
    let (st, ct) = a.theta.sin_cos();
    let (sp, cp) = a.psi.sin_cos();
    Matrix3::new(
        ct * cp,
        ct * sp,
        -st,
        sf * st * cp - cf * sp,
        sf * st * sp + cf * cp,
        sf * ct,
        cf * st * cp + sf * sp,
        cf * st * sp - sf * cp,
        cf * ct,
    )
}

/// Euler-angle rates from body rates, including the orbital-rate
/// coupling of the rotating LVLH frame.
pub fn euler_rates(a: &EulerAngles321, w: &BodyRates, n: f64) -> Result<Vector3<f64>> {
    if a.near_singularity() {
        return Err(Error::KinematicSingularity { theta: a.theta });
    }
    let (sf, cf) = a.phi.sin_cos();
    let (st, ct) = a.theta.sin_cos();
    let (sp, cp) = a.psi.sin_cos();
    // body rates relative to LVLH: w + n * (second column of O_bL)
    let rel = Vector3::new(
        w.w1 + n * ct * sp,
        w.w2 + n * (sf * st * sp + cf * cp),
        w.w3 + n * (cf * st * sp - sf * cp),
    );
    let tt = st / ct;
    Ok(Vector3::new(
        rel[0] + sf * tt * rel[1] + cf * tt * rel[2],
        cf * rel[1] - sf * rel[2],
        (sf * rel[1] + cf * rel[2]) / ct,
    ))
}

/// Re-expresses an attitude so that |theta| < pi/2.
///
/// `(phi + pi, pi - theta, psi + pi)` describes the same rotation; all
/// components are wrapped to (-pi, pi].
pub fn recast_angles(a: &EulerAngles321) -> Result<EulerAngles321> {
    let w = a.wrapped();
    let out = if w.theta.abs() < FRAC_PI_2 {
        w
    } else {
        EulerAngles321::new(w.phi + PI, PI - w.theta, w.psi + PI).wrapped()
    };
    if out.theta.cos().abs() < 1e-9 {
        return Err(Error::Degenerate);
    }
    Ok(out)
}

/// Angle between the body x axis (sensor boresight) and the orbital
/// velocity direction.
pub fn pointing_angle(a: &EulerAngles321) -> f64 {
    (a.theta.cos() * a.psi.cos()).clamp(-1.0, 1.0).acos()
}
