//! Finite-horizon MPC with box-constrained inputs, solved as a condensed
//! quadratic program.

use nalgebra::{DMatrix, DVector, Vector3, Vector6};

use super::{DiscreteModel, Weights};
use crate::error::{Error, Result};
use crate::numerics::Mat;

pub const QP_MAX_ITER: usize = 10_000;
pub const QP_RTOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct MpcSolution {
    pub u0: Vector3<f64>,
    /// Full input sequence, stacked.
    pub sequence: DVector<f64>,
    pub iterations: usize,
    pub active: usize,
}

/// Condensed Hessian and linear term of
/// sum_{k<N} (x_k'Qx_k + u_k'Ru_k) + x_N'Px_N, halved.
fn condense(x0: &Vector6<f64>, model: &DiscreteModel, w: &Weights, p_term: &Mat, horizon: usize) -> (DMatrix<f64>, DVector<f64>) {
    let (nx, nu) = (model.ad.nrows(), model.bd.ncols());
    let q = w.q_mat();
    let r = w.r_mat();
    // powers A^k, k = 0..N
    let mut pows = vec![Mat::identity(nx, nx)];
    for k in 1..=horizon {
        let next = &pows[k - 1] * &model.ad;
        pows.push(next);
    }
    // x_k = A^k x0 + sum_{j<k} A^{k-1-j} B u_j, k = 1..N
    let dim = nu * horizon;
    let mut gam = DMatrix::zeros(nx * horizon, dim);
    for k in 1..=horizon {
        for j in 0..k {
            let blk = &pows[k - 1 - j] * &model.bd;
            gam.view_mut(((k - 1) * nx, j * nu), (nx, nu)).copy_from(&blk);
        }
    }
    let x0v = DVector::from_column_slice(x0.as_slice());
    let mut free = DVector::zeros(nx * horizon);
    for k in 1..=horizon {
        free.rows_mut((k - 1) * nx, nx).copy_from(&(&pows[k] * &x0v));
    }
    let mut qbar = DMatrix::zeros(nx * horizon, nx * horizon);
    for k in 0..horizon {
        let blk = if k + 1 == horizon { p_term } else { &q };
        qbar.view_mut((k * nx, k * nx), (nx, nx)).copy_from(blk);
    }
    let mut h = gam.transpose() * &qbar * &gam;
    for k in 0..horizon {
        let mut v = h.view_mut((k * nu, k * nu), (nu, nu));
        v += &r;
    }
    let h = (&h + h.transpose()) * 0.5;
    let g = gam.transpose() * (qbar * free);
    (h, g)
}

/// Box-projected gradient with the KKT sign conditions taken into account.
fn projected_gradient(u: &DVector<f64>, grad: &DVector<f64>, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_iterator(
        u.len(),
        u.iter().zip(grad.iter()).map(|(&ui, &gi)| {
            if (ui <= lo && gi > 0.0) || (ui >= hi && gi < 0.0) {
                0.0
            } else {
                gi
            }
        }),
    )
}

fn clip(v: &DVector<f64>, lo: f64, hi: f64) -> DVector<f64> {
    v.map(|x| x.clamp(lo, hi))
}

/// Solve the reduced system with the bounded variables of `u` fixed.
/// Returns the candidate when it is feasible.
fn polish(h: &DMatrix<f64>, g: &DVector<f64>, u: &DVector<f64>, lo: f64, hi: f64) -> Option<DVector<f64>> {
    let span = hi - lo;
    let tol = 1e-12 * if span.is_finite() { span } else { 1.0 };
    let free: Vec<usize> = (0..u.len()).filter(|&i| u[i] > lo + tol && u[i] < hi - tol).collect();
    let mut cand = u.clone();
    for i in 0..u.len() {
        if !free.contains(&i) {
            cand[i] = if (u[i] - lo).abs() < (u[i] - hi).abs() { lo } else { hi };
        }
    }
    if free.is_empty() {
        return Some(cand);
    }
    let nf = free.len();
    let hff = DMatrix::from_fn(nf, nf, |a, b| h[(free[a], free[b])]);
    let rhs = DVector::from_fn(nf, |a, _| {
        let i = free[a];
        let mut acc = -g[i];
        for j in 0..u.len() {
            if !free.contains(&j) {
                acc -= h[(i, j)] * cand[j];
            }
        }
        acc
    });
    let sol = hff.cholesky()?.solve(&rhs);
    for (a, &i) in free.iter().enumerate() {
        if sol[a] < lo || sol[a] > hi {
            return None;
        }
        cand[i] = sol[a];
    }
    Some(cand)
}

/// First input of the constrained finite-horizon problem, each component
/// of every u_k bounded by `u_bound` in magnitude.
pub fn mpc_step(
    x: &Vector6<f64>,
    model: &DiscreteModel,
    w: &Weights,
    p_terminal: &Mat,
    horizon: usize,
    u_bound: f64,
) -> Result<MpcSolution> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("prediction horizon must be at least 1".into()));
    }
    if !(u_bound > 0.0) {
        return Err(Error::InvalidArgument(format!("input bound {u_bound} must be positive")));
    }
    let (h, g) = condense(x, model, w, p_terminal, horizon);
    let (lo, hi) = (-u_bound, u_bound);
    let dim = g.len();
    let tol = QP_RTOL * (1.0 + g.norm());
    let done = |u: &DVector<f64>| projected_gradient(u, &(&h * u + &g), lo, hi).norm() <= tol;
    let finish = |u: DVector<f64>, iterations: usize| {
        let active = u.iter().filter(|&&v| v <= lo || v >= hi).count();
        MpcSolution { u0: Vector3::new(u[0], u[1], u[2]), sequence: u, iterations, active }
    };

    let chol = h.clone().cholesky().ok_or(Error::SingularMatrix { pivot: 0.0, threshold: 0.0 })?;
    let unconstrained = chol.solve(&(-&g));
    if unconstrained.iter().all(|&v| v >= lo && v <= hi) {
        return Ok(finish(unconstrained, 0));
    }

    // Jacobi scaling keeps the feasible set a box: v = D^{1/2} u.
    let d: DVector<f64> = h.diagonal().map(f64::sqrt);
    let hs = DMatrix::from_fn(dim, dim, |i, j| h[(i, j)] / (d[i] * d[j]));
    let gs = g.component_div(&d);
    let lo_s = DVector::from_fn(dim, |i, _| lo * d[i]);
    let hi_s = DVector::from_fn(dim, |i, _| hi * d[i]);
    let proj = |v: &DVector<f64>| DVector::from_fn(dim, |i, _| v[i].clamp(lo_s[i], hi_s[i]));
    let lip = (0..dim).map(|i| hs.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mu = {
        let rmin = w.r.iter().cloned().fold(f64::INFINITY, f64::min);
        (0..dim).map(|i| rmin / (d[i] * d[i])).fold(f64::INFINITY, f64::min).min(lip)
    };
    let q = mu / lip;
    let beta = (1.0 - q.sqrt()) / (1.0 + q.sqrt());

    let mut v = proj(&unconstrained.component_mul(&d));
    let mut y = v.clone();
    for it in 1..=QP_MAX_ITER {
        let grad = &hs * &y + &gs;
        let next = proj(&(&y - grad / lip));
        y = &next + (&next - &v) * beta;
        v = next;
        if it % 10 == 0 || it == 1 {
            let u = v.component_div(&d);
            if done(&u) {
                return Ok(finish(clip(&u, lo, hi), it));
            }
            if let Some(cand) = polish(&h, &g, &u, lo, hi) {
                if done(&cand) {
                    return Ok(finish(cand, it));
                }
            }
        }
    }
    Err(Error::QpNoConvergence(QP_MAX_ITER))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{solve_dare, solve_dare_with, lqr_step, Discretizer};
    use crate::dynamics::InertiaMatrix;
    use crate::environment::{psiaki_field, DipoleField, OrbitParams};
    use crate::linmodel::{build_a, build_bc};
    use approx::assert_relative_eq;

    fn paper_model(t: f64) -> DiscreteModel {
        let j = InertiaMatrix::paper_default();
        let o = OrbitParams::paper_default();
        let disc = Discretizer::new(&build_a(&j, o.n, 0.0), 4.0).unwrap();
        let b = psiaki_field(t, &o, &DipoleField::default());
        disc.discretize(&build_bc(&j, &b).unwrap(), t)
    }

    fn x_sample() -> Vector6<f64> {
        Vector6::new(0.3, -0.2, 0.25, 2e-3, -1e-3, 1.5e-3)
    }

    #[test]
    fn inactive_constraints_reproduce_lqr() {
        let w = Weights::default();
        let m = paper_model(700.0);
        let sol = solve_dare(&m.ad, &m.bd, &w, None).unwrap();
        for horizon in [1, 5, 12] {
            let mpc = mpc_step(&x_sample(), &m, &w, &sol.p, horizon, f64::INFINITY).unwrap();
            let lqr = lqr_step(&x_sample(), &sol.k);
            assert!((mpc.u0 - lqr).norm() <= 1e-6 * lqr.norm(), "N = {horizon}");
        }
    }

    #[test]
    fn zero_state_gives_zero_input() {
        let w = Weights::default();
        let m = paper_model(0.0);
        let sol = solve_dare(&m.ad, &m.bd, &w, None).unwrap();
        let out = mpc_step(&Vector6::zeros(), &m, &w, &sol.p, 5, 1e-6).unwrap();
        assert_eq!(out.u0, Vector3::zeros());
    }

    #[test]
    fn single_step_scalar_clamp() {
        // 1-state, 1-input problem embedded in the 6/3 layout: only the first
        // channel is coupled.
        let (ad, bd, p, r) = (0.9, 0.5, 3.0, 2.0);
        let mut a = Mat::identity(6, 6) * 0.5;
        a[(0, 0)] = ad;
        let mut b = Mat::zeros(6, 3);
        b[(0, 0)] = bd;
        let model = DiscreteModel { ad: a, bd: b, dt: 1.0, t: 0.0 };
        let w = Weights { q: [1.0; 6], r: [r; 3] };
        let pt = Mat::identity(6, 6) * p;
        let x = Vector6::new(2.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let free = -(bd * p * ad) / (r + bd * bd * p) * 2.0;
        for bound in [10.0, 0.5, 0.1] {
            let out = mpc_step(&x, &model, &w, &pt, 1, bound).unwrap();
            assert_relative_eq!(out.u0[0], free.clamp(-bound, bound), max_relative = 1e-9);
            assert!(out.u0[1].abs() < 1e-15 && out.u0[2].abs() < 1e-15);
        }
    }

    #[test]
    fn constrained_solution_satisfies_kkt() {
        let w = Weights::default();
        let m = paper_model(1500.0);
        let sol = solve_dare(&m.ad, &m.bd, &w, None).unwrap();
        let free = mpc_step(&x_sample(), &m, &w, &sol.p, 5, f64::INFINITY).unwrap();
        let bound = 0.3 * free.sequence.amax();
        let out = mpc_step(&x_sample(), &m, &w, &sol.p, 5, bound).unwrap();
        assert!(out.sequence.amax() <= bound * (1.0 + 1e-15));
        assert!(out.active > 0);
        let (h, g) = condense(&x_sample(), &m, &w, &sol.p, 5);
        let pg = projected_gradient(&out.sequence, &(&h * &out.sequence + &g), -bound, bound);
        assert!(pg.norm() <= QP_RTOL * (1.0 + g.norm()));
        let again = mpc_step(&x_sample(), &m, &w, &sol.p, 5, bound).unwrap();
        assert_eq!(again.sequence, out.sequence);
    }

    #[test]
    fn horizon_and_bound_validation() {
        let m = paper_model(0.0);
        let w = Weights::default();
        let p = solve_dare_with(&m.ad, &m.bd, &w.q_mat(), &w.r_mat(), None).unwrap().p;
        assert!(mpc_step(&x_sample(), &m, &w, &p, 0, 1.0).is_err());
        assert!(mpc_step(&x_sample(), &m, &w, &p, 3, 0.0).is_err());
    }
}
