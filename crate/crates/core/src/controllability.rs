//! Controllability tests: the LTI rank test, the time-varying
//! controllability-matrix analogue built from field derivatives, and the
//! closed-form inertia/field conditions.

use nalgebra::Vector3;
use serde::Serialize;

use crate::attitude::skew;
use crate::dynamics::InertiaMatrix;
use crate::environment::{psiaki_field_derivs, DipoleField, OrbitParams};
use crate::linmodel::build_a;
use crate::numerics::{rank, Lu, Mat};

pub const CTRB_RTOL: f64 = 1e-10;
pub const CONDITION_RTOL: f64 = 1e-12;

/// Rank of [B, AB, ..., A^{n-1}B].
pub fn lti_ctrb_rank(a: &Mat, b: &Mat) -> usize {
    rank(&lti_ctrb_matrix(a, b), CTRB_RTOL)
}

pub fn lti_ctrb_matrix(a: &Mat, b: &Mat) -> Mat {
    let n = a.nrows();
    let m = b.ncols();
    let mut c = Mat::zeros(n, n * m);
    let mut blk = b.clone();
    for k in 0..n {
        c.view_mut((0, k * m), (n, m)).copy_from(&blk);
        blk = a * blk;
    }
    c
}

/// Input block for a dipole input: J^{-1} (m x b) = -J^{-1} S[b] m.
fn dipole_block(j: &InertiaMatrix, b: &Vector3<f64>) -> Mat {
    let s = skew(b);
    let jinv = [1.0 / j.j1, 1.0 / j.j2, 1.0 / j.j3];
    let mut out = Mat::zeros(6, 3);
    for r in 0..3 {
        for c in 0..3 {
            out[(3 + r, c)] = -jinv[r] * s[(r, c)];
        }
    }
    out
}

/// Columns of the row-reduced analogue used for the 6x6 minor.
pub const K3_COLUMNS: [usize; 6] = [0, 1, 3, 4, 6, 7];

#[derive(Debug, Clone)]
pub struct LtvCtrb {
    /// [B, B' - AB, A^2 B - 2AB' + B''].
    pub k: Mat,
    /// `k` with the first block row, premultiplied by -Sigma_2, added to
    /// the second.
    pub k2: Mat,
    /// Determinant of the minor of `k2` on [`K3_COLUMNS`].
    pub det_k3: f64,
    pub rank: usize,
}

impl LtvCtrb {
    /// Entry (3, 8) in one-based numbering: the single nonzero in the
    /// third row of the minor's last column.
    pub fn m13(&self) -> f64 {
        self.k2[(2, 7)]
    }
}

/// Controllability analogue for the dipole-input system with field
/// derivatives `(b, b', b'')`.
pub fn ltv_ctrb_matrix(a: &Mat, derivs: &(Vector3<f64>, Vector3<f64>, Vector3<f64>), j: &InertiaMatrix) -> LtvCtrb {
    let (b, bd, bdd) = derivs;
    let b0 = dipole_block(j, b);
    let b1 = dipole_block(j, bd);
    let b2 = dipole_block(j, bdd);
    let mut k = Mat::zeros(6, 9);
    k.view_mut((0, 0), (6, 3)).copy_from(&b0);
    k.view_mut((0, 3), (6, 3)).copy_from(&(&b1 - a * &b0));
    k.view_mut((0, 6), (6, 3)).copy_from(&(a * a * &b0 - a * &b1 * 2.0 + &b2));
    let sigma2 = a.view((3, 3), (3, 3)).into_owned();
    let mut k2 = k.clone();
    let top = k.rows(0, 3).into_owned();
    let mut bottom = k2.rows_mut(3, 3);
    bottom -= sigma2 * top;
    let minor = Mat::from_fn(6, 6, |r, c| k2[(r, K3_COLUMNS[c])]);
    let det_k3 = Lu::new(&minor).map(|lu| lu.determinant()).unwrap_or(0.0);
    let rank = rank(&k, CTRB_RTOL);
    LtvCtrb { k, k2, det_k3, rank }
}

/// The three sufficient conditions for controllability over one orbit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    /// Orbit plane inclined to the magnetic equator.
    MagneticEquator,
    /// J2 != J3.
    J2NeJ3,
    /// J3 (6 (J3 - J1) + 2 Gamma) != J2 (J1 - J2 + J3 - 2 Gamma).
    InertiaInequality,
}

impl Condition {
    pub fn label(self) -> &'static str {
        match self {
            Condition::MagneticEquator => "magnetic-equator",
            Condition::J2NeJ3 => "J2!=J3",
            Condition::InertiaInequality => "inertia-inequality",
        }
    }
}

/// Left minus right side of the inertia inequality.
pub fn inertia_condition_gap(j: &InertiaMatrix, gamma: f64) -> (f64, f64) {
    let lhs = j.j3 * (6.0 * (j.j3 - j.j1) + 2.0 * gamma);
    let rhs = j.j2 * (j.j1 - j.j2 + j.j3 - 2.0 * gamma);
    let jmax = j.j1.max(j.j2).max(j.j3);
    let scale = lhs.abs().max(rhs.abs()).max(jmax * jmax);
    (lhs - rhs, scale)
}

/// The panel-free form: 6 J3 (J3 - J1) != J2 (J1 - J2 + J3).
pub fn yang_inertia_condition(j: &InertiaMatrix) -> bool {
    let lhs = 6.0 * j.j3 * (j.j3 - j.j1);
    let rhs = j.j2 * (j.j1 - j.j2 + j.j3);
    let jmax = j.j1.max(j.j2).max(j.j3);
    (lhs - rhs).abs() > CONDITION_RTOL * lhs.abs().max(rhs.abs()).max(jmax * jmax)
}

/// Conditions that fail for the given inertia, stiffness and magnetic
/// inclination.
pub fn failed_conditions(j: &InertiaMatrix, gamma: f64, i_m: f64) -> Vec<Condition> {
    let mut failed = Vec::new();
    if i_m.sin().abs() <= 1e-9 {
        failed.push(Condition::MagneticEquator);
    }
    let jmax = j.j1.max(j.j2).max(j.j3);
    if (j.j2 - j.j3).abs() <= CONDITION_RTOL * jmax {
        failed.push(Condition::J2NeJ3);
    }
    let (gap, scale) = inertia_condition_gap(j, gamma);
    if gap.abs() <= CONDITION_RTOL * scale {
        failed.push(Condition::InertiaInequality);
    }
    failed
}

#[derive(Debug, Clone, Serialize)]
pub struct CtrbReport {
    pub controllable: bool,
    pub rank: usize,
    pub failed_conditions: Vec<Condition>,
    pub t_c: f64,
    pub det_k3: f64,
    pub m13: f64,
}

impl CtrbReport {
    pub fn summary(&self) -> String {
        let verdict = if self.controllable { "controllable" } else { "not controllable" };
        let failed: Vec<&str> = self.failed_conditions.iter().map(|c| c.label()).collect();
        format!(
            "verdict: {verdict}\nrank at t_c: {}\nt_c: {:.3} s\nfailed conditions: {}\ndet(K3): {:.6e}\nm13: {:.6e}\n",
            self.rank,
            self.t_c,
            if failed.is_empty() { "none".to_string() } else { failed.join(", ") },
            self.det_k3,
            self.m13
        )
    }
}

/// Evaluates the closed-form conditions and the rank of the controllability
/// analogue at t_c = T/4.
pub fn theorem1_check(j: &InertiaMatrix, gamma: f64, orbit: &OrbitParams, dip: &DipoleField) -> CtrbReport {
    let t_c = orbit.period / 4.0;
    let a = build_a(j, orbit.n, gamma);
    let ltv = ltv_ctrb_matrix(&a, &psiaki_field_derivs(t_c, orbit, dip), j);
    let failed = failed_conditions(j, gamma, orbit.i_m);
    CtrbReport {
        controllable: failed.is_empty() && ltv.rank == 6,
        rank: ltv.rank,
        failed_conditions: failed,
        t_c,
        det_k3: ltv.det_k3,
        m13: ltv.m13(),
    }
}

/// Closed forms of the minor entries for the dipole-input system at
/// t_c = T/4, with p1 = (mu/a^3) sin i_m and p2 = (mu/a^3) cos i_m.
pub mod closed_form {
    use crate::dynamics::InertiaMatrix;

    pub fn m13(j: &InertiaMatrix, n: f64, p1: f64) -> f64 {
        -2.0 * n * p1 * (2.0 * j.j1 - j.j2 + j.j3) / (j.j1 * j.j3)
    }

    pub fn det_k3(j: &InertiaMatrix, n: f64, gamma: f64, p1: f64, p2: f64) -> f64 {
        let (a, b, c) = (j.j1, j.j2, j.j3);
        let q = 2.0 * gamma * (b - c) + 3.0 * a * b + 6.0 * a * c - 3.0 * b * b + 3.0 * b * c - 6.0 * c * c;
        -16.0 * n.powi(3) * p1.powi(5) * p2 * (2.0 * a - b + c) * q / (a * b * c).powi(3)
    }
}
