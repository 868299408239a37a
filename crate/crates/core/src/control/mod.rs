//! Discretization, Riccati/LQR design, dipole projection, saturation and
//! model predictive control.

mod controller;
mod dare;
mod mpc;

pub use controller::{
    ControlContext, Controller, ControllerRegistry, ControllerSettings, LqrController, MpcController,
    NoController, SolverStats,
};
pub use dare::{
    dare_residual, dare_value_iteration, is_stabilizable, solve_dare, solve_dare_with, spectral_radius,
    RiccatiSolution,
};
pub use mpc::{mpc_step, MpcSolution, QP_MAX_ITER};

use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::attitude::skew;
use crate::error::{Error, Result};
use crate::linmodel::MIN_FIELD;
use crate::numerics::{expm, inverse, lu_solve, Mat};

/// Zero-order-hold discretization of (A_c, B_c(t)) over one control period.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub ad: Mat,
    pub bd: Mat,
    pub dt: f64,
    /// Time at which the field was frozen.
    pub t: f64,
}

/// Diagonal quadratic weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub q: [f64; 6],
    pub r: [f64; 3],
}

impl Default for Weights {
    fn default() -> Self {
        Self { q: [1e-8, 1e-8, 1e-8, 1e-4, 1e-4, 1e-4], r: [1e8; 3] }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<()> {
        if self.q.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Validation("state weights must be finite and >= 0".into()));
        }
        if self.r.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Validation("input weights must be finite and > 0".into()));
        }
        Ok(())
    }

    pub fn q_mat(&self) -> Mat {
        Mat::from_diagonal(&nalgebra::DVector::from_column_slice(&self.q))
    }

    pub fn r_mat(&self) -> Mat {
        Mat::from_diagonal(&nalgebra::DVector::from_column_slice(&self.r))
    }
}

/// Precomputed ZOH operators for a fixed A_c and period: A_d = e^{A dt}
/// and Phi = int_0^dt e^{A s} ds, so that B_d = Phi B_c.
#[derive(Debug, Clone)]
pub struct Discretizer {
    pub ad: Mat,
    pub phi: Mat,
    pub dt: f64,
}

impl Discretizer {
    pub fn new(ac: &Mat, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("sample period {dt} must be positive")));
        }
        let n = ac.nrows();
        let ad = expm(&(ac * dt))?;
        let phi = match inverse(ac) {
            Ok(ainv) => &ainv * (&ad - Mat::identity(n, n)),
            Err(_) => integral_by_augmentation(ac, dt)?,
        };
        Ok(Self { ad, phi, dt })
    }

    pub fn discretize(&self, bc: &Mat, t: f64) -> DiscreteModel {
        DiscreteModel { ad: self.ad.clone(), bd: &self.phi * bc, dt: self.dt, t }
    }
}

/// int_0^dt e^{A s} ds from the exponential of [[A, I], [0, 0]] dt.
pub fn integral_by_augmentation(ac: &Mat, dt: f64) -> Result<Mat> {
    let n = ac.nrows();
    let mut aug = Mat::zeros(2 * n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(ac);
    aug.view_mut((0, n), (n, n)).fill_with_identity();
    let e = expm(&(aug * dt))?;
    Ok(e.view((0, n), (n, n)).into_owned())
}

/// One-shot ZOH: closed form when A_c is invertible, augmented exponential
/// otherwise.
pub fn zoh(ac: &Mat, bc: &Mat, dt: f64) -> Result<DiscreteModel> {
    if ac.nrows() != bc.nrows() {
        return Err(Error::Dimension(format!("A is {}x{}, B has {} rows", ac.nrows(), ac.ncols(), bc.nrows())));
    }
    Ok(Discretizer::new(ac, dt)?.discretize(bc, 0.0))
}

/// K = (R + B'PB)^{-1} B'PA.
pub fn lqr_gain(p: &Mat, ad: &Mat, bd: &Mat, r: &Mat) -> Result<Mat> {
    let btp = bd.transpose() * p;
    lu_solve(&(r + &btp * bd), &(&btp * ad))
}

pub fn lqr_step(x_dev: &Vector6<f64>, k: &Mat) -> Vector3<f64> {
    let u = -(k * nalgebra::DVector::from_column_slice(x_dev.as_slice()));
    Vector3::new(u[0], u[1], u[2])
}

/// Dipole whose torque realizes the component of `u` normal to `b`:
/// m = -S[b] u / |b|^2.
pub fn dipole_from_u(u: &Vector3<f64>, b: &Vector3<f64>) -> Result<Vector3<f64>> {
    let bn = b.norm();
    if bn < MIN_FIELD {
        return Err(Error::ZeroField(bn));
    }
    Ok(-(skew(b) * u) / (bn * bn))
}

/// Scale `m` so that its largest component equals `u_max`, keeping its
/// direction. Returns the (possibly unchanged) dipole and whether it was
/// scaled.
pub fn saturate_dipole(m: &Vector3<f64>, u_max: f64) -> (Vector3<f64>, bool) {
    let big = m.amax();
    if big <= u_max {
        (*m, false)
    } else {
        (m * (u_max / big), true)
    }
}

/// Commanded virtual torque, the dipole that realizes it and the
/// saturation flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlCommand {
    pub u: Vector3<f64>,
    pub m: Vector3<f64>,
    pub saturated: bool,
}

impl ControlCommand {
    pub fn zero() -> Self {
        Self { u: Vector3::zeros(), m: Vector3::zeros(), saturated: false }
    }

    pub fn from_u(u: Vector3<f64>, b: &Vector3<f64>, u_max: f64) -> Result<Self> {
        let (m, saturated) = saturate_dipole(&dipole_from_u(&u, b)?, u_max);
        Ok(Self { u, m, saturated })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::InertiaMatrix;
    use crate::linmodel::{build_a, build_bc};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const N: f64 = 2.0 * PI / 5570.0;

    #[test]
    fn zoh_limits() {
        let a = Mat::zeros(3, 3);
        let b = Mat::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let d = zoh(&a, &b, 0.5).unwrap();
        assert_eq!(d.ad, Mat::identity(3, 3));
        assert_relative_eq!(d.bd, &b * 0.5, epsilon = 1e-15);

        let d = zoh(&Mat::from_element(1, 1, -1.0), &Mat::from_element(1, 1, 1.0), 1.0).unwrap();
        assert_relative_eq!(d.ad[(0, 0)], (-1f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(d.bd[(0, 0)], 1.0 - (-1f64).exp(), max_relative = 1e-14);
    }

    #[test]
    fn zoh_paths_agree_and_match_quadrature() {
        let j = InertiaMatrix::paper_default();
        let ac = build_a(&j, N, 0.0);
        let bc = build_bc(&j, &nalgebra::Vector3::new(1.5e-5, -2.0e-5, 3.1e-5)).unwrap();
        let dt = 4.0;
        let d = zoh(&ac, &bc, dt).unwrap();
        let aug = integral_by_augmentation(&ac, dt).unwrap() * &bc;
        assert!((&aug - &d.bd).abs().max() <= 1e-10 * d.bd.abs().max());

        // composite Simpson, 10^4 panels
        let panels = 10_000;
        let h = dt / panels as f64;
        let mut acc = Mat::zeros(6, 6);
        for i in 0..=panels {
            let w = if i == 0 || i == panels { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += expm(&(&ac * (i as f64 * h))).unwrap() * w;
        }
        let quad = acc * (h / 3.0) * &bc;
        assert!((&quad - &d.bd).abs().max() <= 1e-8 * d.bd.abs().max());
    }

    #[test]
    fn dipole_examples() {
        let b = Vector3::new(2e-5, -1e-5, 3e-5);
        assert!(dipole_from_u(&(b * 1e3), &b).unwrap().norm() < 1e-12);
        let m = dipole_from_u(&Vector3::x(), &Vector3::new(0.0, 0.0, 3e-5)).unwrap();
        assert_relative_eq!(m, Vector3::new(0.0, -1.0 / 3e-5, 0.0), max_relative = 1e-14);
        assert!(matches!(dipole_from_u(&Vector3::x(), &Vector3::zeros()), Err(Error::ZeroField(_))));
    }

    #[test]
    fn saturation_examples() {
        assert_eq!(saturate_dipole(&Vector3::new(0.05, 0.0, 0.0), 0.1), (Vector3::new(0.05, 0.0, 0.0), false));
        let (m, s) = saturate_dipole(&Vector3::new(0.4, -0.2, 0.1), 0.1);
        assert!(s);
        assert_relative_eq!(m, Vector3::new(0.1, -0.05, 0.025), max_relative = 1e-15);
        assert_eq!(saturate_dipole(&Vector3::zeros(), 0.1), (Vector3::zeros(), false));
    }

    #[test]
    fn lqr_step_is_linear() {
        let k = Mat::from_fn(3, 6, |i, j| (i as f64 + 1.0) * 0.3 - j as f64 * 0.1);
        assert_eq!(lqr_step(&Vector6::zeros(), &k), Vector3::zeros());
        let x = Vector6::new(0.1, -0.2, 0.3, 1e-3, -2e-3, 5e-4);
        assert_eq!(lqr_step(&(2.0 * x), &k), 2.0 * lqr_step(&x, &k));
    }

    #[test]
    fn lqr_gain_zero_input() {
        let p = Mat::identity(2, 2);
        let k = lqr_gain(&p, &Mat::identity(2, 2), &Mat::zeros(2, 1), &Mat::identity(1, 1)).unwrap();
        assert_eq!(k, Mat::zeros(1, 2));
    }

    #[test]
    fn projection_maximizes_torque_along_request() {
        // Brute force over unit dipoles on a 1 degree grid.
        let b = Vector3::new(1.0e-5, -2.2e-5, 1.7e-5);
        let u = Vector3::new(0.3, 0.5, -0.2);
        let m = dipole_from_u(&u, &b).unwrap().normalize();
        // realized torque is S[b]S[b]u/|b|^2, minus the normal part of u
        let want = (skew(&b) * skew(&b) * u).normalize();
        let best_proj = m.cross(&b).dot(&want);
        let mut brute = f64::NEG_INFINITY;
        for i in 0..=180 {
            let th = (i as f64).to_radians();
            for k in 0..360 {
                let ph = (k as f64).to_radians();
                let c = Vector3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos());
                brute = brute.max(c.cross(&b).dot(&want));
            }
        }
        assert!(best_proj >= brute - 1e-12 * b.norm());
        assert!(best_proj <= brute * (1.0 + 1e-3));
    }

    proptest! {
        #[test]
        fn dipole_is_normal_to_field(u in prop::array::uniform3(-1e-5f64..1e-5), b in prop::array::uniform3(-5e-5f64..5e-5)) {
            let (u, b) = (Vector3::from(u), Vector3::from(b));
            prop_assume!(b.norm() > 1e-7);
            let m = dipole_from_u(&u, &b).unwrap();
            prop_assert!(m.dot(&b).abs() <= 1e-15 * m.norm() * b.norm() + 1e-300);
            let tau = m.cross(&b);
            let want = skew(&b) * skew(&b) * u / b.norm_squared();
            prop_assert!((tau - want).norm() <= 1e-12 * u.norm() + 1e-300);
        }

        #[test]
        fn saturation_preserves_direction(m in prop::array::uniform3(-2.0f64..2.0), u_max in 0.01f64..1.0) {
            let m = Vector3::from(m);
            prop_assume!(m.norm() > 0.0);
            let (out, flag) = saturate_dipole(&m, u_max);
            prop_assert!(out.amax() <= u_max * (1.0 + 1e-15));
            prop_assert_eq!(flag, m.amax() > u_max);
            // angle is exactly zero: the cross product of parallel vectors
            let c = out.normalize().cross(&m.normalize());
            prop_assert!(c.norm() <= 1e-15);
            prop_assert!(out.dot(&m) > 0.0);
        }
    }
}
