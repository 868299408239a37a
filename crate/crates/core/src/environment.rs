//! Circular-orbit bookkeeping, geomagnetic field models and the
//! atmosphere.
//!
//! Field vectors are returned in LVLH components: first axis along-track,
//! second axis along the negative orbit normal, third axis anti-radial.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Equatorial Earth radius (m).
pub const EARTH_RADIUS_M: f64 = 6_378_137.0;
/// Sidereal rotation rate of the Earth (rad/s).
pub const EARTH_ROTATION_RATE: f64 = 7.292_115_9e-5;

/// Circular orbit parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitParams {
    pub altitude_km: f64,
    /// Orbital radius (m).
    pub a: f64,
    /// Mean motion (rad/s).
    pub n: f64,
    /// Period (s).
    pub period: f64,
    /// Inclination to the geographic equator (rad).
    pub incl: f64,
    /// Inclination to the magnetic equator (rad), used by the periodic
    /// field approximation.
    pub i_m: f64,
    /// Right ascension of the ascending node (rad).
    pub raan: f64,
}

impl OrbitParams {
    pub fn new(altitude_km: f64, period: f64, incl: f64, i_m: f64) -> Result<Self> {
        if altitude_km <= 0.0 || !altitude_km.is_finite() {
            return Err(Error::Validation(format!("altitude {altitude_km} km must be positive")));
        }
        if period <= 0.0 || !period.is_finite() {
            return Err(Error::Validation(format!("orbital period {period} s must be positive")));
        }
        Ok(Self {
            altitude_km,
            a: EARTH_RADIUS_M + altitude_km * 1e3,
            n: 2.0 * PI / period,
            period,
            incl,
            i_m,
            raan: 0.0,
        })
    }

    /// 415 km, 51.6 deg, 5570 s; the magnetic inclination defaults to the
    /// geographic one.
    pub fn paper_default() -> Self {
        let incl = 51.6f64.to_radians();
        Self::new(415.0, 5570.0, incl, incl).expect("valid defaults")
    }

    /// Unit position and velocity directions in the inertial frame at
    /// argument of latitude `u`.
    fn inertial_directions(&self, u: f64) -> (Vector3<f64>, Vector3<f64>) {
        let (so, co) = self.raan.sin_cos();
        let (si, ci) = self.incl.sin_cos();
        let (su, cu) = u.sin_cos();
        let r = Vector3::new(co * cu - so * su * ci, so * cu + co * su * ci, su * si);
        let v = Vector3::new(-co * su - so * cu * ci, -so * su + co * cu * ci, cu * si);
        (r, v)
    }
}

/// Earth-fixed magnetic dipole.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipoleField {
    /// Dipole strength (T m^3).
    pub mu_f: f64,
    /// Angle between the dipole axis and the rotation axis (rad).
    pub tilt: f64,
    /// Earth rotation rate (rad/s).
    pub earth_rotation_rate: f64,
    /// East longitude of the northern geomagnetic pole (rad).
    pub pole_longitude: f64,
    /// Greenwich sidereal angle at t = 0 (rad); fixes the reference epoch.
    pub gmst0: f64,
}

impl Default for DipoleField {
    fn default() -> Self {
        Self {
            mu_f: 7.9e15,
            tilt: 11.5f64.to_radians(),
            earth_rotation_rate: EARTH_ROTATION_RATE,
            pole_longitude: (-72.6f64).to_radians(),
            gmst0: 0.0,
        }
    }
}

impl DipoleField {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_f > 0.0) {
            return Err(Error::Validation(format!("dipole strength {} must be positive", self.mu_f)));
        }
        Ok(())
    }

    /// Unit dipole moment direction in the inertial frame at time `t`.
    /// The moment points toward the southern geomagnetic pole.
    fn moment_direction(&self, t: f64) -> Vector3<f64> {
        let lon = self.pole_longitude + self.gmst0 + self.earth_rotation_rate * t;
        let (st, ct) = self.tilt.sin_cos();
        -Vector3::new(st * lon.cos(), st * lon.sin(), ct)
    }
}

/// Periodic field approximation for an orbit inclined by `i_m` to the
/// magnetic equator, with t = 0 at the ascending node on that equator.
pub fn psiaki_field(t: f64, orbit: &OrbitParams, dip: &DipoleField) -> Vector3<f64> {
    let k = dip.mu_f / orbit.a.powi(3);
    let (s, c) = orbit.i_m.sin_cos();
    let nt = orbit.n * t;
    k * Vector3::new(nt.cos() * s, -c, 2.0 * nt.sin() * s)
}

/// Field, first and second time derivatives of [`psiaki_field`].
pub fn psiaki_field_derivs(
    t: f64,
    orbit: &OrbitParams,
    dip: &DipoleField,
) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let k = dip.mu_f / orbit.a.powi(3);
    let (s, c) = orbit.i_m.sin_cos();
    let n = orbit.n;
    let (snt, cnt) = (n * t).sin_cos();
    let b = k * Vector3::new(cnt * s, -c, 2.0 * snt * s);
    let bd = k * n * Vector3::new(-snt * s, 0.0, 2.0 * cnt * s);
    let bdd = k * n * n * Vector3::new(-cnt * s, 0.0, -2.0 * snt * s);
    (b, bd, bdd)
}

/// Tilted, rotating dipole evaluated on the circular orbit and resolved
/// in LVLH. `orbit_phase` is the argument of latitude at t = 0.
pub fn tilted_dipole_field(
    t: f64,
    orbit: &OrbitParams,
    dip: &DipoleField,
    orbit_phase: f64,
) -> Vector3<f64> {
    let u = orbit_phase + orbit.n * t;
    let (r_hat, v_hat) = orbit.inertial_directions(u);
    let m_hat = dip.moment_direction(t);
    let b = dip.mu_f / orbit.a.powi(3) * (3.0 * m_hat.dot(&r_hat) * r_hat - m_hat);
    // LVLH axes: i = along-track, k = -r, j = k x i
    let i_l = v_hat;
    let k_l = -r_hat;
    let j_l = k_l.cross(&i_l);
    Vector3::new(b.dot(&i_l), b.dot(&j_l), b.dot(&k_l))
}

/// A geomagnetic field model: LVLH field as a function of time.
pub trait FieldModel: Send + Sync {
    fn name(&self) -> &'static str;
    fn field_lvlh(&self, t: f64) -> Vector3<f64>;
}

#[derive(Debug, Clone)]
pub struct TiltedDipoleModel {
    pub orbit: OrbitParams,
    pub dipole: DipoleField,
    pub orbit_phase: f64,
}

impl FieldModel for TiltedDipoleModel {
    fn name(&self) -> &'static str {
        "tilted-dipole"
    }

    fn field_lvlh(&self, t: f64) -> Vector3<f64> {
        tilted_dipole_field(t, &self.orbit, &self.dipole, self.orbit_phase)
    }
}

#[derive(Debug, Clone)]
pub struct PsiakiModel {
    pub orbit: OrbitParams,
    pub dipole: DipoleField,
}

impl FieldModel for PsiakiModel {
    fn name(&self) -> &'static str {
        "psiaki"
    }

    fn field_lvlh(&self, t: f64) -> Vector3<f64> {
        psiaki_field(t, &self.orbit, &self.dipole)
    }
}

type FieldCtor = fn(&OrbitParams, &DipoleField, f64) -> Arc<dyn FieldModel>;

/// Field models selectable by name.
pub struct FieldRegistry {
    ctors: BTreeMap<&'static str, FieldCtor>,
}

impl Default for FieldRegistry {
    fn default() -> Self {
        let mut reg = Self { ctors: BTreeMap::new() };
        reg.register("tilted-dipole", |o, d, phase| {
            Arc::new(TiltedDipoleModel { orbit: *o, dipole: *d, orbit_phase: phase })
        });
        reg.register("psiaki", |o, d, _| Arc::new(PsiakiModel { orbit: *o, dipole: *d }));
        reg
    }
}

impl FieldRegistry {
    pub fn register(&mut self, name: &'static str, ctor: FieldCtor) {
        self.ctors.insert(name, ctor);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.ctors.keys().copied().collect()
    }

    pub fn build(
        &self,
        name: &str,
        orbit: &OrbitParams,
        dipole: &DipoleField,
        orbit_phase: f64,
    ) -> Result<Arc<dyn FieldModel>> {
        let ctor = self.ctors.get(name).ok_or_else(|| {
            Error::Validation(format!("unknown field model '{name}' (known: {:?})", self.names()))
        })?;
        Ok(ctor(orbit, dipole, orbit_phase))
    }
}

/// Constant-density atmosphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atmosphere {
    /// Density (kg/m^3).
    pub rho0: f64,
}

/// Representative density near 415 km.
pub const DEFAULT_DENSITY: f64 = 3.0e-12;

impl Default for Atmosphere {
    fn default() -> Self {
        Self { rho0: DEFAULT_DENSITY }
    }
}

impl Atmosphere {
    pub fn density(&self, altitude_km: f64) -> Result<f64> {
        if altitude_km < 0.0 || !altitude_km.is_finite() {
            return Err(Error::InvalidArgument(format!("altitude {altitude_km} km is below the surface")));
        }
        Ok(self.rho0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn k(orbit: &OrbitParams, dip: &DipoleField) -> f64 {
        dip.mu_f / orbit.a.powi(3)
    }

    #[test]
    fn orbit_invariants() {
        let o = OrbitParams::paper_default();
        assert!(o.a > EARTH_RADIUS_M);
        assert_relative_eq!(o.n * o.period, 2.0 * PI, epsilon = 1e-12);
        assert!(OrbitParams::new(-1.0, 5570.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn psiaki_examples() {
        let dip = DipoleField::default();
        let mut o = OrbitParams::paper_default();
        let kk = k(&o, &dip);
        let (s, c) = o.i_m.sin_cos();
        let b0 = psiaki_field(0.0, &o, &dip);
        assert_relative_eq!(b0, kk * Vector3::new(s, -c, 0.0), epsilon = 1e-20);
        let bq = psiaki_field(o.period / 4.0, &o, &dip);
        assert_relative_eq!(bq, kk * Vector3::new(0.0, -c, 2.0 * s), epsilon = 1e-19);

        o.i_m = 0.0;
        for t in [0.0, 123.0, 2000.0, 5000.0] {
            assert_eq!(psiaki_field(t, &o, &dip), Vector3::new(0.0, -kk, 0.0));
        }
    }

    #[test]
    fn psiaki_is_periodic() {
        let dip = DipoleField::default();
        let o = OrbitParams::paper_default();
        for i in 0..50 {
            let t = i as f64 * 111.7;
            let d = psiaki_field(t, &o, &dip) - psiaki_field(t + o.period, &o, &dip);
            assert!(d.norm() <= 1e-15, "{}", d.norm());
        }
    }

    #[test]
    fn psiaki_derivs_at_quarter_period() {
        let dip = DipoleField::default();
        let o = OrbitParams::paper_default();
        let (b, bd, bdd) = psiaki_field_derivs(o.period / 4.0, &o, &dip);
        let p1 = k(&o, &dip) * o.i_m.sin();
        let n = o.n;
        assert!(b[0].abs() < 1e-20);
        assert_relative_eq!(bd[0], -n * p1, max_relative = 1e-12);
        assert_eq!(bd[1], 0.0);
        assert_eq!(bdd[1], 0.0);
        assert!(bd[2].abs() < 1e-12 * n * p1);
        assert!(bdd[0].abs() < 1e-12 * n * n * p1);
        // second derivative of 2 sin(nt) is -2 n^2 sin(nt)
        assert_relative_eq!(bdd[2], -2.0 * n * n * p1, max_relative = 1e-12);
    }

    #[test]
    fn psiaki_derivs_match_finite_differences() {
        let dip = DipoleField::default();
        let o = OrbitParams::paper_default();
        let h = 1e-3;
        let scale = k(&o, &dip);
        for i in 0..40 {
            let t = i as f64 * 137.0;
            let (_, bd, bdd) = psiaki_field_derivs(t, &o, &dip);
            let fp = psiaki_field(t + h, &o, &dip);
            let fm = psiaki_field(t - h, &o, &dip);
            let f0 = psiaki_field(t, &o, &dip);
            let fd1 = (fp - fm) / (2.0 * h);
            let fd2 = (fp - 2.0 * f0 + fm) / (h * h);
            for j in 0..3 {
                assert!((fd1[j] - bd[j]).abs() <= 1e-6 * scale * o.n, "first derivative {j} at {t}");
                assert!((fd2[j] - bdd[j]).abs() <= 1e-6 * scale * o.n * o.n * 10.0 + 1e-3 * bdd.norm(),
                    "second derivative {j} at {t}");
            }
        }
    }

    #[test]
    fn tilted_dipole_equatorial_untilted() {
        let dip = DipoleField { tilt: 0.0, ..Default::default() };
        let o = OrbitParams::new(415.0, 5570.0, 0.0, 0.0).unwrap();
        let kk = k(&o, &dip);
        for i in 0..30 {
            let b = tilted_dipole_field(i as f64 * 200.0, &o, &dip, 0.3);
            assert!(b[0].abs() < 1e-12 * kk && b[2].abs() < 1e-12 * kk);
            assert_relative_eq!(b[1], -kk, max_relative = 1e-12);
        }
    }

    #[test]
    fn tilted_dipole_polar_over_pole() {
        let dip = DipoleField { tilt: 0.0, ..Default::default() };
        let o = OrbitParams::new(415.0, 5570.0, PI / 2.0, PI / 2.0).unwrap();
        let b = tilted_dipole_field(0.0, &o, &dip, PI / 2.0);
        assert_relative_eq!(b[2].abs(), 2.0 * k(&o, &dip), max_relative = 1e-12);
        assert!(b[0].abs() < 1e-12 * k(&o, &dip));
    }

    #[test]
    fn tilted_dipole_magnitude_bounds() {
        let dip = DipoleField::default();
        let o = OrbitParams::paper_default();
        let kk = k(&o, &dip);
        let mags: Vec<f64> = (0..=5570)
            .step_by(5)
            .map(|t| tilted_dipole_field(t as f64, &o, &dip, 0.0).norm())
            .collect();
        let max = mags.iter().cloned().fold(0.0, f64::max);
        let min = mags.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min > 0.0 && max <= 2.0 * kk * (1.0 + 1e-12));
        let ratio = max / min;
        assert!((1.0..=2.1).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn tilted_dipole_agrees_with_psiaki_when_aligned() {
        let dip = DipoleField { tilt: 0.0, earth_rotation_rate: 0.0, ..Default::default() };
        let o = OrbitParams::paper_default();
        let kk = k(&o, &dip);
        for i in 0..=100 {
            let t = o.period * i as f64 / 100.0;
            let a = tilted_dipole_field(t, &o, &dip, 0.0);
            let b = psiaki_field(t, &o, &dip);
            assert!((a - b).norm() <= 0.05 * kk, "t = {t}");
        }
    }

    #[test]
    fn registry_builds_by_name() {
        let reg = FieldRegistry::default();
        assert_eq!(reg.names(), vec!["psiaki", "tilted-dipole"]);
        let o = OrbitParams::paper_default();
        let d = DipoleField::default();
        let m = reg.build("psiaki", &o, &d, 0.0).unwrap();
        assert_eq!(m.name(), "psiaki");
        assert_eq!(m.field_lvlh(10.0), psiaki_field(10.0, &o, &d));
        assert!(reg.build("igrf-13", &o, &d, 0.0).is_err());
    }

    #[test]
    fn density_defaults_and_guard() {
        let atm = Atmosphere::default();
        assert_eq!(atm.density(415.0).unwrap(), 3.0e-12);
        assert_eq!(Atmosphere { rho0: 1e-11 }.density(300.0).unwrap(), 1e-11);
        assert!(atm.density(-5.0).is_err());
    }
}
