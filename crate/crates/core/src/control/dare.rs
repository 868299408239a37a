//! Discrete algebraic Riccati equation via the matrix sign function of a
//! Cayley-transformed symplectic pencil.

use nalgebra::{Matrix3, Matrix6, Matrix6x3};

use super::{lqr_gain, Weights};
use crate::error::{Error, Result};
use crate::numerics::{eigenvalues, inverse, lu_solve, norm_inf, rank, Lu, Mat};

pub const SIGN_MAX_ITER: usize = 100;
pub const SIGN_RTOL: f64 = 1e-12;
/// Relative change below which a non-decreasing change counts as converged.
const STAGNATION_RTOL: f64 = 1e-9;
/// Relative change below which the iterates are no longer rescaled.
const SCALING_RTOL: f64 = 1e-2;
/// Rank threshold (relative) for the stabilizability test.
pub const STABILIZABLE_RTOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub p: Mat,
    pub k: Mat,
    pub iterations: usize,
    pub warm_started: bool,
    /// Converged 2n x 2n iterate, (H^2)^{1/2}; pass it back as the warm
    /// start for the next, slightly different, problem.
    pub sign: Mat,
}

/// A'PA + Q - A'PB K - P, the Riccati residual.
pub fn dare_residual(ad: &Mat, bd: &Mat, q: &Mat, p: &Mat, k: &Mat) -> Mat {
    ad.transpose() * p * ad + q - ad.transpose() * p * bd * k - p
}

/// PBH test on every eigenvalue of `ad` on or outside the unit circle.
pub fn is_stabilizable(ad: &Mat, bd: &Mat) -> Result<bool> {
    let n = ad.nrows();
    let m = bd.ncols();
    let scale = norm_inf(ad).max(1.0);
    for lam in eigenvalues(ad)? {
        if lam.norm() < 1.0 - 1e-12 {
            continue;
        }
        // real embedding of [lam I - A, B]
        let bscale = norm_inf(bd).max(f64::MIN_POSITIVE);
        let mut e = Mat::zeros(2 * n, 2 * (n + m));
        for i in 0..n {
            for j in 0..n {
                let re = if i == j { lam.re } else { 0.0 } - ad[(i, j)];
                let im = if i == j { lam.im } else { 0.0 };
                e[(i, j)] = re / scale;
                e[(i, n + m + j)] = -im / scale;
                e[(n + i, j)] = im / scale;
                e[(n + i, n + m + j)] = re / scale;
            }
            for j in 0..m {
                e[(i, n + j)] = bd[(i, j)] / bscale;
                e[(n + i, 2 * n + m + j)] = bd[(i, j)] / bscale;
            }
        }
        if rank(&e, STABILIZABLE_RTOL) < 2 * n {
            return Ok(false);
        }
    }
    Ok(true)
}

fn block(m: &Mat, r: usize, c: usize, n: usize) -> Mat {
    m.view((r, c), (n, n)).into_owned()
}

/// Solves A'PA - P - A'PB (R + B'PB)^{-1} B'PA + Q = 0.
///
/// With N = [[A, 0], [-Q, I]], L = [[I, B R^{-1} B'], [0, A']] and
/// H = (N + L)^{-1}(N - L), the iteration S <- (S + S^{-1} H^2)/2 from
/// S = cI converges to (H^2)^{1/2}; P is read off the first block column
/// of H - S. The iterates are formed as S = H Z with Z <- (Z + Z^{-1})/2,
/// which is algebraically the same sequence but does not square H.
/// While the iterates are far from converged each Newton step is
/// determinant-scaled, Z <- (mu Z + (mu Z)^{-1})/2 with mu = |det Z|^{-1/2n};
/// without it, closed-loop poles close to the unit circle stall the
/// iteration.
///
/// `warm` is a previous converged iterate; only its scale
/// c = |det S|^{1/2n} is reused (a full matrix from a neighbouring
/// problem does not commute with the new H^2) and the first steps are
/// left unscaled.
pub fn solve_dare(ad: &Mat, bd: &Mat, w: &Weights, warm: Option<&Mat>) -> Result<RiccatiSolution> {
    solve_dare_with(ad, bd, &w.q_mat(), &w.r_mat(), warm)
}

pub fn solve_dare_with(ad: &Mat, bd: &Mat, q: &Mat, r: &Mat, warm: Option<&Mat>) -> Result<RiccatiSolution> {
    let n = ad.nrows();
    if ad.ncols() != n || bd.nrows() != n || q.shape() != (n, n) || r.shape() != (bd.ncols(), bd.ncols()) {
        return Err(Error::Dimension("inconsistent Riccati data".into()));
    }
    if !is_stabilizable(ad, bd)? {
        let ctrb = crate::controllability::lti_ctrb_rank(ad, bd);
        return Err(Error::NotStabilizable { rank: ctrb, dim: n });
    }
    let g = bd * lu_solve(r, &bd.transpose())?;
    let mut nn = Mat::zeros(2 * n, 2 * n);
    nn.view_mut((0, 0), (n, n)).copy_from(ad);
    nn.view_mut((n, 0), (n, n)).copy_from(&(-q));
    nn.view_mut((n, n), (n, n)).fill_with_identity();
    let mut ll = Mat::zeros(2 * n, 2 * n);
    ll.view_mut((0, 0), (n, n)).fill_with_identity();
    ll.view_mut((0, n), (n, n)).copy_from(&g);
    ll.view_mut((n, n), (n, n)).copy_from(&ad.transpose());
    let h = lu_solve(&(&nn + &ll), &(&nn - &ll))?;

    let hinv = inverse(&h)?;
    let det_scale = |z: &Mat| -> f64 {
        let d = Lu::new(z).map(|lu| lu.determinant().abs()).unwrap_or(0.0);
        if d.is_finite() && d > 0.0 {
            d.powf(-1.0 / (2 * n) as f64)
        } else {
            1.0
        }
    };
    // warm: reuse the previous scale; cold: |det(c H^-1)| = 1
    let c = match warm {
        Some(s) if s.shape() == (2 * n, 2 * n) => 1.0 / det_scale(s),
        _ => det_scale(&hinv),
    };
    let mut z = hinv * c;
    let mut s = Mat::identity(2 * n, 2 * n) * c;
    let mut iterations = 0;
    let mut converged = false;
    let mut scaling = warm.is_none();
    let mut prev_change = f64::INFINITY;
    while iterations < SIGN_MAX_ITER {
        iterations += 1;
        let mu = if scaling { det_scale(&z) } else { 1.0 };
        z = (&z * mu + inverse(&z)? / mu) * 0.5;
        let s_next = &h * &z;
        let change = norm_inf(&(&s_next - &s));
        let scale = norm_inf(&s);
        s = s_next;
        // the second test catches iterates that have reached their
        // rounding floor above SIGN_RTOL (poorly separated spectra)
        if change <= SIGN_RTOL * scale || (change <= STAGNATION_RTOL * scale && change >= prev_change) {
            converged = true;
            break;
        }
        prev_change = change;
        // determinant scaling only while far from the limit
        scaling = change > SCALING_RTOL * scale;
    }
    if !converged {
        return Err(Error::NoConvergence { what: "matrix sign iteration", iterations });
    }

    let x = &h - &s;
    let x1 = block(&x, 0, 0, n);
    let x2 = block(&x, n, 0, n);
    // P = X2 X1^{-1}  <=>  X1' P' = X2'
    let p_t = Lu::new(&x1.transpose()).map_err(|_| Error::SingularX1)?.solve(&x2.transpose())?;
    let p = (&p_t + p_t.transpose()) * 0.5;
    let k = lqr_gain(&p, ad, bd, r)?;
    Ok(RiccatiSolution { p, k, iterations, warm_started: warm.is_some(), sign: s })
}

/// Fixed-point (value) iteration P <- A'PA + Q - A'PB (R + B'PB)^{-1} B'PA,
/// stopped when the relative change in max-abs norm is below `tol`.
pub fn dare_value_iteration(
    ad: &Mat,
    bd: &Mat,
    q: &Mat,
    r: &Mat,
    p0: Option<&Mat>,
    tol: f64,
    max_iter: usize,
) -> Result<(Mat, usize)> {
    if ad.shape() == (6, 6) && bd.shape() == (6, 3) && q.shape() == (6, 6) && r.shape() == (3, 3) {
        return value_iteration_6x3(ad, bd, q, r, p0, tol, max_iter);
    }
    let mut p = p0.cloned().unwrap_or_else(|| q.clone());
    for it in 1..=max_iter {
        let k = lqr_gain(&p, ad, bd, r)?;
        let next = ad.transpose() * &p * ad + q - ad.transpose() * &p * bd * &k;
        let next = (&next + next.transpose()) * 0.5;
        let change = (&next - &p).abs().max();
        let scale = next.abs().max();
        p = next;
        if change <= tol * scale {
            return Ok((p, it));
        }
    }
    Err(Error::NoConvergence { what: "Riccati value iteration", iterations: max_iter })
}

// Same iteration on stack matrices; the oracle runs it millions of times.
fn value_iteration_6x3(
    ad: &Mat,
    bd: &Mat,
    q: &Mat,
    r: &Mat,
    p0: Option<&Mat>,
    tol: f64,
    max_iter: usize,
) -> Result<(Mat, usize)> {
    let a = Matrix6::<f64>::from_iterator(ad.iter().copied());
    let b = Matrix6x3::<f64>::from_iterator(bd.iter().copied());
    let qs = Matrix6::<f64>::from_iterator(q.iter().copied());
    let rs = Matrix3::<f64>::from_iterator(r.iter().copied());
    let mut p = Matrix6::<f64>::from_iterator(p0.unwrap_or(q).iter().copied());
    let at = a.transpose();
    for it in 1..=max_iter {
        let btp = b.transpose() * p;
        let k = (rs + btp * b)
            .lu()
            .solve(&(btp * a))
            .ok_or(Error::SingularMatrix { pivot: 0.0, threshold: 0.0 })?;
        let pa = p * a;
        let next = at * pa + qs - at * (p * b) * k;
        let next = (next + next.transpose()) * 0.5;
        let change = (next - p).amax();
        let scale = next.amax();
        p = next;
        if change <= tol * scale {
            return Ok((Mat::from_iterator(6, 6, p.iter().copied()), it));
        }
    }
    Err(Error::NoConvergence { what: "Riccati value iteration", iterations: max_iter })
}

/// Spectral radius of a square matrix.
pub fn spectral_radius(a: &Mat) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{Discretizer, Weights};
    use crate::dynamics::InertiaMatrix;
    use crate::environment::{psiaki_field, DipoleField, OrbitParams};
    use crate::linmodel::{build_a, build_bc};
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    #[test]
    fn scalar_riccati() {
        // p = 0.25 p + 1 - 0.25 p^2 / (1 + p)  <=>  p^2 - 0.25 p - 1 = 0
        let p_exact = (0.25 + (0.0625f64 + 4.0).sqrt()) / 2.0;
        let sol = solve_dare_with(&scalar(0.5), &scalar(1.0), &scalar(1.0), &scalar(1.0), None).unwrap();
        assert_relative_eq!(sol.p[(0, 0)], p_exact, max_relative = 1e-12);
        let k_exact = p_exact * 0.5 / (1.0 + p_exact);
        assert_relative_eq!(sol.k[(0, 0)], k_exact, max_relative = 1e-12);
    }

    #[test]
    fn zero_input_gives_lyapunov_series() {
        let ad = Mat::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.3]);
        let q = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let sol = solve_dare_with(&ad, &Mat::zeros(2, 1), &q, &scalar(1.0), None).unwrap();
        let mut series = Mat::zeros(2, 2);
        let mut ak = Mat::identity(2, 2);
        for _ in 0..200 {
            series += ak.transpose() * &q * &ak;
            ak = &ak * &ad;
        }
        assert!((&sol.p - &series).abs().max() <= 1e-12 * series.abs().max());
        assert_eq!(sol.k, Mat::zeros(1, 2));
    }

    #[test]
    fn unstabilizable_pair_is_rejected() {
        let ad = Mat::from_row_slice(2, 2, &[1.2, 0.0, 0.0, 0.5]);
        let bd = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(matches!(
            solve_dare_with(&ad, &bd, &Mat::identity(2, 2), &scalar(1.0), None),
            Err(Error::NotStabilizable { .. })
        ));
    }

    fn paper_pair(t: f64, gamma: f64) -> (Mat, Mat) {
        let j = InertiaMatrix::paper_default();
        let o = OrbitParams::paper_default();
        let ac = build_a(&j, o.n, gamma);
        let disc = Discretizer::new(&ac, 4.0).unwrap();
        let b = psiaki_field(t, &o, &DipoleField::default());
        let bc = build_bc(&j, &b).unwrap();
        let d = disc.discretize(&bc, t);
        (d.ad, d.bd)
    }

    #[test]
    fn paper_model_residual_and_stability() {
        let w = Weights::default();
        let mut warm: Option<Mat> = None;
        for gamma in [0.0, -2.37] {
            for i in 0..20 {
                let t = i as f64 * 278.5;
                let (ad, bd) = paper_pair(t, gamma);
                let sol = solve_dare(&ad, &bd, &w, warm.as_ref()).unwrap();
                let res = dare_residual(&ad, &bd, &w.q_mat(), &sol.p, &sol.k);
                assert!(norm_inf(&res) <= 1e-8 * norm_inf(&sol.p), "t = {t}");
                assert!((&sol.p - sol.p.transpose()).abs().max() <= 1e-12 * sol.p.abs().max());
                let min_eig = sol.p.clone().symmetric_eigen().eigenvalues.min();
                assert!(min_eig > 0.0);
                let rho = spectral_radius(&(&ad - &bd * &sol.k)).unwrap();
                assert!(rho < 1.0, "closed-loop spectral radius {rho}");
                warm = Some(sol.sign);
            }
        }
    }

    #[test]
    fn matches_value_iteration() {
        let w = Weights::default();
        let (ad, bd) = paper_pair(1000.0, 0.0);
        let sol = solve_dare(&ad, &bd, &w, None).unwrap();
        let (p, _) = dare_value_iteration(&ad, &bd, &w.q_mat(), &w.r_mat(), None, 1e-14, 1_000_000).unwrap();
        let diff = crate::numerics::norm2(&(&sol.p - &p)) / crate::numerics::norm2(&p);
        assert!(diff < 1e-6, "{diff}");
    }
}
