//! Linearization about the LVLH-aligned equilibrium and eigen-structure
//! studies of the panel-stiffened system.

use std::sync::Arc;

use nalgebra::Vector3;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::attitude::skew;
use crate::dynamics::{InertiaMatrix, PanelConfig};
use crate::error::{Error, Result};
use crate::numerics::{eigenvalues, Mat};

/// Smallest field magnitude (T) accepted when projecting onto the plane
/// normal to the field.
pub const MIN_FIELD: f64 = 1e-12;

/// Relative (to n) bound on |Re lambda| for an eigenvalue to count as
/// lying on the imaginary axis.
pub const IMAG_AXIS_RTOL: f64 = 1e-9;

/// Continuous-time state matrix. `gamma` is the panel stiffness
/// coefficient (zero without panels).
pub fn build_a(j: &InertiaMatrix, n: f64, gamma: f64) -> Mat {
    let mut a = Mat::zeros(6, 6);
    let n2 = n * n;
    a[(0, 2)] = n;
    a[(0, 3)] = 1.0;
    a[(1, 4)] = 1.0;
    a[(2, 0)] = -n;
    a[(2, 5)] = 1.0;
    a[(3, 0)] = -3.0 * n2 * j.j23();
    a[(3, 5)] = -n * j.j23();
    a[(4, 1)] = 3.0 * n2 * j.j31() + n2 * gamma / j.j2;
    a[(5, 2)] = n2 * gamma / j.j3;
    a[(5, 3)] = -n * j.j12();
    a
}

/// Input matrix for the virtual torque input u, whose realizable part is
/// the projection onto the plane normal to the body-frame field.
pub fn build_bc(j: &InertiaMatrix, b_body: &Vector3<f64>) -> Result<Mat> {
    let bb = b_body.norm_squared();
    if b_body.norm() < MIN_FIELD {
        return Err(Error::ZeroField(b_body.norm()));
    }
    let s = skew(b_body);
    let k = s * s / bb;
    let jinv = [1.0 / j.j1, 1.0 / j.j2, 1.0 / j.j3];
    let mut out = Mat::zeros(6, 3);
    for r in 0..3 {
        for c in 0..3 {
            out[(3 + r, c)] = jinv[r] * k[(r, c)];
        }
    }
    Ok(out)
}

pub type FieldProvider = Arc<dyn Fn(f64) -> Vector3<f64> + Send + Sync>;

/// Constant A with a time-varying input matrix driven by the body-frame
/// field.
#[derive(Clone)]
pub struct ContinuousLinearModel {
    pub a: Mat,
    pub b_provider: FieldProvider,
    pub inertia: InertiaMatrix,
    pub n: f64,
    pub gamma: f64,
}

impl ContinuousLinearModel {
    pub fn new(inertia: InertiaMatrix, n: f64, gamma: f64, b_provider: FieldProvider) -> Self {
        Self { a: build_a(&inertia, n, gamma), b_provider, inertia, n, gamma }
    }

    pub fn bc(&self, t: f64) -> Result<Mat> {
        build_bc(&self.inertia, &(self.b_provider)(t))
    }
}

impl std::fmt::Debug for ContinuousLinearModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ContinuousLinearModel")
            .field("n", &self.n)
            .field("gamma", &self.gamma)
            .finish_non_exhaustive()
    }
}

pub fn max_real_part(eigs: &[Complex64]) -> f64 {
    eigs.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

pub fn max_abs_real_part(eigs: &[Complex64]) -> f64 {
    eigs.iter().map(|z| z.re.abs()).fold(0.0, f64::max)
}

/// One row of an area sweep.
#[derive(Debug, Clone)]
pub struct AreaSpectrum {
    pub area: f64,
    pub gamma: f64,
    pub eigenvalues: Vec<Complex64>,
}

/// Spectrum of A for each panel area in `areas`, in input order.
pub fn eig_study_vs_area(
    j: &InertiaMatrix,
    n: f64,
    panels: &PanelConfig,
    areas: &[f64],
) -> Result<Vec<AreaSpectrum>> {
    areas
        .par_iter()
        .map(|&area| {
            let p = panels.with_area(area);
            let gamma = p.gamma();
            let mut eigenvalues = eigenvalues(&build_a(j, n, gamma))?;
            sort_spectrum(&mut eigenvalues);
            Ok(AreaSpectrum { area, gamma, eigenvalues })
        })
        .collect()
}

/// Smallest area in a sorted sweep beyond which every tested area keeps
/// the spectrum on the imaginary axis.
pub fn migration_threshold(study: &[AreaSpectrum], n: f64) -> Option<f64> {
    let mut threshold = None;
    for row in study.iter().rev() {
        if max_abs_real_part(&row.eigenvalues) < IMAG_AXIS_RTOL * n {
            threshold = Some(row.area);
        } else {
            break;
        }
    }
    threshold
}

fn sort_spectrum(e: &mut [Complex64]) {
    e.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

#[derive(Debug, Clone)]
pub struct StiffnessCurve {
    /// (delta in rad, sqrt of the smallest eigenvalue magnitude).
    pub points: Vec<(f64, f64)>,
    pub argmax_delta: f64,
}

impl StiffnessCurve {
    pub fn max_stiffness(&self) -> f64 {
        self.points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max)
    }

    /// True when the maximum lies strictly inside the grid.
    pub fn has_interior_max(&self) -> bool {
        let max = self.max_stiffness();
        match (self.points.first(), self.points.last()) {
            (Some(f), Some(l)) => f.1 < max && l.1 < max,
            _ => false,
        }
    }
}

/// Deployment-angle grid over [90, 180] deg with the given spacing.
pub fn delta_grid(step_deg: f64) -> Vec<f64> {
    let count = (90.0 / step_deg).round() as usize;
    (0..=count).map(|i| (90.0 + 90.0 * i as f64 / count as f64).to_radians()).collect()
}

pub fn smallest_magnitude(eigs: &[Complex64]) -> f64 {
    eigs.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min)
}

/// sqrt|lambda_min| of the panel-stiffened A over the deployment grid.
pub fn stiffness_vs_delta(
    j: &InertiaMatrix,
    n: f64,
    panels: &PanelConfig,
    deltas: &[f64],
) -> Result<StiffnessCurve> {
    let points = deltas
        .par_iter()
        .map(|&delta| {
            let gamma = panels.with_delta(delta).gamma();
            let eigs = eigenvalues(&build_a(j, n, gamma))?;
            if let Some(bad) = eigs.iter().find(|z| z.re.abs() > IMAG_AXIS_RTOL * n) {
                return Err(Error::MixedSpectrum { delta_deg: delta.to_degrees(), re: bad.re, im: bad.im });
            }
            Ok((delta, smallest_magnitude(&eigs).sqrt()))
        })
        .collect::<Result<Vec<_>>>()?;
    let argmax_delta = points
        .iter()
        .fold((f64::NAN, f64::NEG_INFINITY), |best, p| if p.1 > best.1 { *p } else { best })
        .0;
    Ok(StiffnessCurve { points, argmax_delta })
}
