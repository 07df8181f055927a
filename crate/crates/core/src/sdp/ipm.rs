//! Infeasible-start primal-dual path-following with the HKM search direction
//! and Mehrotra predictor-corrector steps.

use faer::linalg::solvers::Solve;
use nalgebra::DVector;

use super::cone::{self, Block, Blocks, ConicMap};

#[derive(Debug, Clone, Copy)]
pub(crate) struct EngineOptions {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum EngineStatus {
    Converged,
    EarlyStop,
    MaxIterations,
    /// The iterates stopped making progress or the primal side diverged;
    /// typical of an infeasible dual problem.
    Stalled(String),
    Failed(String),
}

#[derive(Debug, Clone)]
pub(crate) struct EngineResult {
    pub status: EngineStatus,
    pub y: DVector<f64>,
    pub iterations: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub relative_gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
}

pub(crate) type StopRule<'a> = &'a dyn Fn(&DVector<f64>, &[Block], f64) -> bool;

struct Direction {
    dy: DVector<f64>,
    dz: Blocks,
    ds: Blocks,
}

pub(crate) fn run(
    map: &dyn ConicMap,
    opts: &EngineOptions,
    start: Option<&DVector<f64>>,
    stop: Option<StopRule<'_>>,
) -> EngineResult {
    let m = map.num_vars();
    let shapes = map.shapes();
    let c = map.constant();
    let b = map.objective();
    let order = shapes.iter().map(|s| s.order()).sum::<usize>().max(1) as f64;

    let norm_c = cone::norm(&c);
    let norm_b = b.norm();
    let col = map.column_norms();
    let ratio = (0..m)
        .map(|i| (1.0 + b[i].abs()) / (1.0 + col[i]))
        .fold(0.0, f64::max);
    let big_a = col.iter().copied().fold(0.0, f64::max);
    let zeta = 10f64.max(order.sqrt()).max(order * ratio);
    let eta = 10f64.max(order.sqrt()).max(norm_c).max(big_a);

    let mut y = DVector::zeros(m);
    let mut s: Blocks = shapes.iter().map(|&sh| Block::scaled_identity(sh, eta)).collect();
    if let Some(y0) = start {
        let s0 = cone::axpy(&c, -1.0, &map.apply(y0));
        if cone::is_positive_definite(&s0) {
            y = y0.clone();
            s = s0;
        }
    }
    let mut z: Blocks = shapes.iter().map(|&sh| Block::scaled_identity(sh, zeta)).collect();
    let z0_trace = cone::trace(&z);

    let mut schur = faer::Mat::<f64>::zeros(m, m);
    let mut tiny_steps = 0usize;
    let result = |status, y: DVector<f64>, _: Blocks, _: Blocks, it, po, dobj, g, pi, di| EngineResult {
        status,
        y,
        iterations: it,
        primal_objective: po,
        dual_objective: dobj,
        relative_gap: g,
        primal_infeasibility: pi,
        dual_infeasibility: di,
    };

    let mut iteration = 0;
    loop {
        let a_star_y = map.apply(&y);
        // R_d = C - S - A*(y)
        let rd = cone::axpy(&cone::axpy(&c, -1.0, &s), -1.0, &a_star_y);
        let rp = &b - map.adjoint(&z);
        let pobj = cone::dot(&c, &z);
        let dobj = b.dot(&y);
        let comp = cone::dot(&z, &s);
        let mu = comp / order;
        let denom = 1.0 + pobj.abs() + dobj.abs();
        let gap = ((pobj - dobj).abs() / denom).max(comp / denom);
        let pinf = rp.norm() / (1.0 + norm_b);
        let dinf = cone::norm(&rd) / (1.0 + norm_c);

        log::trace!(
            "ipm it={iteration:3} pobj={pobj:+.9e} dobj={dobj:+.9e} gap={gap:.2e} pinf={pinf:.2e} dinf={dinf:.2e} mu={mu:.2e}"
        );

        if !(pobj.is_finite() && dobj.is_finite() && mu.is_finite()) {
            return result(EngineStatus::Failed("non-finite iterate".into()), y, z, s, iteration, pobj, dobj, gap, pinf, dinf);
        }
        if let Some(rule) = stop {
            if rule(&y, &s, dinf) {
                return result(EngineStatus::EarlyStop, y, z, s, iteration, pobj, dobj, gap, pinf, dinf);
            }
        }
        if gap <= opts.gap_tol && pinf <= opts.feas_tol && dinf <= opts.feas_tol {
            return result(EngineStatus::Converged, y, z, s, iteration, pobj, dobj, gap, pinf, dinf);
        }
        if iteration >= opts.max_iterations {
            return result(EngineStatus::MaxIterations, y, z, s, iteration, pobj, dobj, gap, pinf, dinf);
        }
        if cone::trace(&z) > 1e12 * (1.0 + z0_trace) {
            return result(
                EngineStatus::Stalled("primal iterate diverged".into()),
                y, z, s, iteration, pobj, dobj, gap, pinf, dinf,
            );
        }

        let Some(s_inv) = cone::inverse(&s) else {
            return result(
                EngineStatus::Failed("dual slack lost definiteness".into()),
                y, z, s, iteration, pobj, dobj, gap, pinf, dinf,
            );
        };

        map.schur(&z, &s_inv, &mut schur);
        let Some(factor) = factorize(&schur) else {
            return result(
                EngineStatus::Failed("Schur complement is not positive definite".into()),
                y, z, s, iteration, pobj, dobj, gap, pinf, dinf,
            );
        };

        // Terms of the right-hand side shared by predictor and corrector.
        let z_rd_sinv = cone::sym_product(&z, &rd, &s_inv);
        let base = &b + map.adjoint(&z_rd_sinv);
        let a_sinv = map.adjoint(&s_inv);

        let direction = |sigma_mu: f64, second: Option<&Blocks>| -> Direction {
            let mut rhs = &base - &a_sinv * sigma_mu;
            if let Some(corr) = second {
                rhs += map.adjoint(corr);
            }
            let dy = solve(&factor, &rhs);
            let ds = cone::axpy(&rd, -1.0, &map.apply(&dy));
            // dZ = sigma mu S^-1 - Z - Z dS S^-1 [- dZa dSa S^-1]
            let mut dz = cone::axpy(&cone::scale(&s_inv, sigma_mu), -1.0, &z);
            dz = cone::axpy(&dz, -1.0, &cone::sym_product(&z, &ds, &s_inv));
            if let Some(corr) = second {
                dz = cone::axpy(&dz, -1.0, corr);
            }
            Direction { dy, dz, ds }
        };

        let pred = direction(0.0, None);
        let ap = cone::max_step(&z, &pred.dz).min(1.0);
        let ad = cone::max_step(&s, &pred.ds).min(1.0);
        let z_aff = cone::axpy(&z, ap, &pred.dz);
        let s_aff = cone::axpy(&s, ad, &pred.ds);
        let mu_aff = cone::dot(&z_aff, &s_aff) / order;
        let expon = 1f64.max(3.0 * ap.min(ad).powi(2));
        let sigma = (mu_aff / mu).max(0.0).powf(expon).min(1.0);

        let second = cone::sym_product(&pred.dz, &pred.ds, &s_inv);
        let corr = direction(sigma * mu, Some(&second));

        let tau = 0.9 + 0.09 * ap.min(ad);
        let mut alpha_p = (tau * cone::max_step(&z, &corr.dz)).min(1.0);
        let mut alpha_d = (tau * cone::max_step(&s, &corr.ds)).min(1.0);

        // The eigenvalue step bound can be optimistic on badly conditioned
        // iterates; back off until the new point factors.
        let mut z_next = cone::axpy(&z, alpha_p, &corr.dz);
        while !cone::is_positive_definite(&z_next) && alpha_p > 1e-12 {
            alpha_p *= 0.8;
            z_next = cone::axpy(&z, alpha_p, &corr.dz);
        }
        let mut s_next = cone::axpy(&s, alpha_d, &corr.ds);
        if alpha_d == 1.0 {
            // A full step restores dual feasibility exactly; recompute to
            // shed accumulated rounding.
            let exact = cone::axpy(&c, -1.0, &map.apply(&(&y + &corr.dy)));
            if cone::is_positive_definite(&exact) {
                s_next = exact;
            }
        }
        while !cone::is_positive_definite(&s_next) && alpha_d > 1e-12 {
            alpha_d *= 0.8;
            s_next = cone::axpy(&s, alpha_d, &corr.ds);
        }

        if alpha_p < 1e-10 && alpha_d < 1e-10 {
            tiny_steps += 1;
        } else {
            tiny_steps = 0;
        }
        if tiny_steps >= 3 {
            return result(
                EngineStatus::Stalled("step lengths collapsed".into()),
                y, z, s, iteration, pobj, dobj, gap, pinf, dinf,
            );
        }
        if !cone::is_positive_definite(&z_next) || !cone::is_positive_definite(&s_next) {
            return result(
                EngineStatus::Failed("iterate left the cone".into()),
                y, z, s, iteration, pobj, dobj, gap, pinf, dinf,
            );
        }

        z = z_next;
        s = s_next;
        y += &corr.dy * alpha_d;
        iteration += 1;
    }
}

fn factorize(m: &faer::Mat<f64>) -> Option<faer::linalg::solvers::Llt<f64>> {
    if let Ok(f) = m.llt(faer::Side::Lower) {
        return Some(f);
    }
    let n = m.nrows();
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    for shift in [1e-14, 1e-12, 1e-10] {
        let mut reg = m.clone();
        for i in 0..n {
            reg[(i, i)] += shift * scale;
        }
        if let Ok(f) = reg.llt(faer::Side::Lower) {
            log::debug!("Schur complement regularised with shift {shift:e}");
            return Some(f);
        }
    }
    None
}

fn solve(factor: &faer::linalg::solvers::Llt<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let n = rhs.len();
    if n == 0 {
        return DVector::zeros(0);
    }
    let mut col = faer::Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
    factor.solve_in_place(col.as_mut());
    DVector::from_fn(n, |i, _| col[(i, 0)])
}
