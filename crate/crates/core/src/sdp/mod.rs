//! Semidefinite programming for the precision-minimisation LMI.
//!
//! The problem is
//!
//! ```text
//! minimise   w'p
//! subject to F(p, X, Y) < 0,   X > 0,   p > 0
//! ```
//!
//! with `F` the 4x4 block matrix
//!
//! ```text
//! [ XA + YCy + (XA + YCy)'   XBd      Cz'     Y             ]
//! [ Bd'X                     -gI      0       0             ]
//! [ Cz                       0        -gI     0             ]
//! [ Y'                       0        0       -g diag(p)    ]
//! ```
//!
//! Strict inequalities become margins: `F <= -eps_feas I`, `X >= eps_pd I`,
//! `p >= p_floor`. The constant blocks are eliminated before the
//! interior-point method sees the problem, and `Y` is minimised out in closed
//! form (see [`reduced`]); the returned point always carries a full `(p, X, Y)`
//! triple that is checked against the unreduced `F`.

mod cone;
mod dense;
mod dump;
mod ipm;
mod phase_one;
mod reduced;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use cone::ConicMap;
use ipm::{EngineOptions, EngineResult, EngineStatus};

/// Solver tolerances and limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdpSettings {
    /// Relative duality gap at which a solve is declared optimal.
    pub gap_tol: f64,
    /// Relative primal/dual residual tolerance.
    pub feas_tol: f64,
    /// `F <= -margin_feas I`
    pub margin_feas: f64,
    /// `X >= margin_pd I`
    pub margin_pd: f64,
    /// Lower bound on each precision.
    pub p_floor: f64,
    pub max_iterations: usize,
}

impl Default for SdpSettings {
    fn default() -> Self {
        SdpSettings {
            gap_tol: 1e-7,
            feas_tol: 1e-8,
            margin_feas: 1e-9,
            margin_pd: 1e-9,
            p_floor: 1e-9,
            max_iterations: 200,
        }
    }
}

impl SdpSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter { name, reason: format!("must be positive and finite, got {v}") })
            }
        };
        positive("gap_tol", self.gap_tol)?;
        positive("feas_tol", self.feas_tol)?;
        positive("margin_feas", self.margin_feas)?;
        positive("margin_pd", self.margin_pd)?;
        positive("p_floor", self.p_floor)?;
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter { name: "max_iterations", reason: "must be at least 1".into() });
        }
        Ok(())
    }

    fn engine(&self) -> EngineOptions {
        EngineOptions { gap_tol: self.gap_tol, feas_tol: self.feas_tol, max_iterations: self.max_iterations }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
    NumericalFailure,
}

impl fmt::Display for SdpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SdpStatus::Optimal => "optimal",
            SdpStatus::Infeasible => "infeasible",
            SdpStatus::MaxIterations => "max-iterations",
            SdpStatus::NumericalFailure => "numerical-failure",
        };
        f.write_str(s)
    }
}

/// Eigenvalue certificates of a candidate point. All three positive means
/// the point is strictly feasible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// Smallest eigenvalue of `-F(p, X, Y)`.
    pub min_eig_neg_f: f64,
    pub min_eig_x: f64,
    pub min_p: f64,
}

impl FeasibilityReport {
    pub fn strictly_feasible(&self) -> bool {
        self.min_eig_neg_f > 0.0 && self.min_eig_x > 0.0 && self.min_p > 0.0
    }
}

/// Decision variables of the observer LMI.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiPoint {
    pub p: DVector<f64>,
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

/// Row/column sizes of the four diagonal blocks of `F`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub states: usize,
    pub disturbances: usize,
    pub performance: usize,
    pub sensors: usize,
}

impl BlockLayout {
    pub fn dimension(&self) -> usize {
        self.states + self.disturbances + self.performance + self.sensors
    }

    /// Offsets of the four blocks.
    pub fn offsets(&self) -> [usize; 4] {
        let a = self.states;
        let b = a + self.disturbances;
        let c = b + self.performance;
        [0, a, b, c]
    }
}

/// The observer LMI for fixed plant, sensors and performance level.
#[derive(Debug, Clone)]
pub struct LmiProblem {
    pub(crate) a: DMatrix<f64>,
    pub(crate) bd: DMatrix<f64>,
    pub(crate) cz: DMatrix<f64>,
    pub(crate) cy: DMatrix<f64>,
    pub(crate) gamma: f64,
    pub(crate) weights: DVector<f64>,
}

impl LmiProblem {
    pub fn new(
        a: DMatrix<f64>,
        bd: DMatrix<f64>,
        cz: DMatrix<f64>,
        cy: DMatrix<f64>,
        gamma: f64,
        weights: DVector<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::dims(format!("A is {}x{}", n, a.ncols())));
        }
        if bd.nrows() != n {
            return Err(Error::dims(format!("Bd has {} rows, A has {n}", bd.nrows())));
        }
        if cz.ncols() != n {
            return Err(Error::dims(format!("Cz has {} columns, A has {n}", cz.ncols())));
        }
        if cy.ncols() != n {
            return Err(Error::dims(format!("Cy has {} columns, A has {n}", cy.ncols())));
        }
        if weights.len() != cy.nrows() {
            return Err(Error::dims(format!("{} weights for {} sensors", weights.len(), cy.nrows())));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidParameter { name: "gamma", reason: format!("must be positive, got {gamma}") });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidParameter { name: "weights", reason: "must be finite and nonnegative".into() });
        }
        Ok(LmiProblem { a, bd, cz, cy, gamma, weights })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn layout(&self) -> BlockLayout {
        BlockLayout {
            states: self.a.nrows(),
            disturbances: self.bd.ncols(),
            performance: self.cz.nrows(),
            sensors: self.cy.nrows(),
        }
    }

    pub fn cost(&self, p: &DVector<f64>) -> f64 {
        self.weights.dot(p)
    }

    /// The origin of the decision space, `F` there is the constant part.
    pub fn zero_point(&self) -> LmiPoint {
        let n = self.a.nrows();
        let ny = self.cy.nrows();
        LmiPoint { p: DVector::zeros(ny), x: DMatrix::zeros(n, n), y: DMatrix::zeros(n, ny) }
    }

    fn check_point(&self, point: &LmiPoint) -> Result<()> {
        let l = self.layout();
        if point.p.len() != l.sensors
            || point.x.shape() != (l.states, l.states)
            || point.y.shape() != (l.states, l.sensors)
        {
            return Err(Error::dims(format!(
                "point has p: {}, X: {:?}, Y: {:?}; problem expects {} sensors and {} states",
                point.p.len(),
                point.x.shape(),
                point.y.shape(),
                l.sensors,
                l.states
            )));
        }
        Ok(())
    }

    /// The full symmetric matrix `F(p, X, Y)`.
    pub fn evaluate(&self, point: &LmiPoint) -> Result<DMatrix<f64>> {
        self.check_point(point)?;
        let l = self.layout();
        let [_, o2, o3, o4] = l.offsets();
        let n = l.states;
        let g = self.gamma;
        let mut f = DMatrix::zeros(l.dimension(), l.dimension());

        let m11 = &point.x * &self.a + &point.y * &self.cy;
        f.view_mut((0, 0), (n, n)).copy_from(&(&m11 + m11.transpose()));
        let xb = &point.x * &self.bd;
        f.view_mut((0, o2), (n, l.disturbances)).copy_from(&xb);
        f.view_mut((o2, 0), (l.disturbances, n)).copy_from(&xb.transpose());
        f.view_mut((0, o3), (n, l.performance)).copy_from(&self.cz.transpose());
        f.view_mut((o3, 0), (l.performance, n)).copy_from(&self.cz);
        f.view_mut((0, o4), (n, l.sensors)).copy_from(&point.y);
        f.view_mut((o4, 0), (l.sensors, n)).copy_from(&point.y.transpose());
        for i in o2..o4 {
            f[(i, i)] = -g;
        }
        for i in 0..l.sensors {
            f[(o4 + i, o4 + i)] = -g * point.p[i];
        }
        Ok(f)
    }

    pub fn write_dump<W: std::io::Write>(&self, w: W) -> Result<()> {
        dump::write(self, w)
    }
}

/// Eigenvalue certificates of `point` for `problem`.
pub fn check_feasible(problem: &LmiProblem, point: &LmiPoint) -> Result<FeasibilityReport> {
    let f = problem.evaluate(point)?;
    let x = linalg::symmetric_part(&point.x);
    Ok(FeasibilityReport {
        min_eig_neg_f: -linalg::max_eigenvalue(&f),
        min_eig_x: linalg::min_eigenvalue(&x),
        min_p: point.p.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// Final point; absent when the problem was found infeasible.
    pub point: Option<LmiPoint>,
    pub cost: f64,
    pub certificates: Option<FeasibilityReport>,
    /// Relative duality gap at the returned point.
    pub gap: f64,
    pub iterations: usize,
    pub phase_one_iterations: usize,
    /// Diagnostic for non-optimal outcomes.
    pub message: Option<String>,
}

impl SdpSolution {
    fn without_point(status: SdpStatus, iterations: usize, phase_one: usize, message: impl Into<String>) -> Self {
        SdpSolution {
            status,
            point: None,
            cost: f64::INFINITY,
            certificates: None,
            gap: f64::NAN,
            iterations,
            phase_one_iterations: phase_one,
            message: Some(message.into()),
        }
    }
}

/// Minimises `w'p` subject to the observer LMI.
pub fn solve(problem: &LmiProblem, settings: &SdpSettings) -> Result<SdpSolution> {
    solve_impl(problem, settings, None)
}

/// Like [`solve`] but starts from `start` when it is strictly feasible.
pub fn solve_from(problem: &LmiProblem, settings: &SdpSettings, start: &LmiPoint) -> Result<SdpSolution> {
    problem.check_point(start)?;
    solve_impl(problem, settings, Some(start))
}

fn solve_impl(problem: &LmiProblem, settings: &SdpSettings, start: Option<&LmiPoint>) -> Result<SdpSolution> {
    settings.validate()?;
    // The margin enters through `gamma - eps`; keep it small against tiny
    // performance levels.
    let eps = settings.margin_feas.min(1e-3 * problem.gamma);
    if eps < settings.margin_feas {
        log::debug!("feasibility margin reduced to {eps:e} for gamma = {}", problem.gamma);
    }
    // The eliminated precision block needs gamma p_i > eps.
    let floor = settings.p_floor.max(2.0 * eps / problem.gamma);
    let map = reduced::ReducedObserverMap::new(problem, eps, settings.margin_pd, floor);

    let y0 = start.map(|s| map.pack(&s.x, &s.p));
    let outcome = run_with_phase_one(&map, settings, y0.as_ref());
    let (res, phase_one) = match outcome {
        Outcome::Solved(res, p1) => (res, p1),
        Outcome::Infeasible(p2, p1) => {
            return Ok(SdpSolution::without_point(
                SdpStatus::Infeasible,
                p2,
                p1,
                "no strictly feasible point exists at the configured margins",
            ))
        }
    };

    let x = map.unpack_x(&res.y);
    let p = map.unpack_p(&res.y);
    let d = DMatrix::from_diagonal(&p.map(|pi| problem.gamma * pi - eps));
    let y = -problem.cy.transpose() * d;
    let point = LmiPoint { p, x, y };
    let cert = check_feasible(problem, &point)?;
    let cost = problem.cost(&point.p);

    let (status, message) = match &res.status {
        EngineStatus::Converged | EngineStatus::EarlyStop => {
            if cert.strictly_feasible() {
                (SdpStatus::Optimal, None)
            } else {
                (
                    SdpStatus::NumericalFailure,
                    Some(format!(
                        "converged point fails strict feasibility: min eig(-F) = {:e}, min eig(X) = {:e}, min p = {:e}",
                        cert.min_eig_neg_f, cert.min_eig_x, cert.min_p
                    )),
                )
            }
        }
        EngineStatus::MaxIterations => (SdpStatus::MaxIterations, Some("iteration limit reached".into())),
        EngineStatus::Stalled(m) | EngineStatus::Failed(m) => (SdpStatus::NumericalFailure, Some(m.clone())),
    };
    if status != SdpStatus::Optimal {
        log::warn!("sdp solve ended with {status}: {}", message.as_deref().unwrap_or(""));
    }
    Ok(SdpSolution {
        status,
        point: Some(point),
        cost,
        certificates: Some(cert),
        gap: res.relative_gap,
        iterations: res.iterations,
        phase_one_iterations: phase_one,
        message,
    })
}

enum Outcome {
    /// Final engine result plus phase-one iteration count.
    Solved(EngineResult, usize),
    /// Phase-two and phase-one iteration counts.
    Infeasible(usize, usize),
}

/// Phase two from the given start; if it cannot converge, a feasibility
/// phase decides between infeasibility and a warm restart.
fn run_with_phase_one(map: &dyn ConicMap, settings: &SdpSettings, start: Option<&DVector<f64>>) -> Outcome {
    let opts = settings.engine();
    let first = ipm::run(map, &opts, start, None);
    match first.status {
        EngineStatus::Converged => return Outcome::Solved(first, 0),
        _ => log::debug!(
            "phase two ended with {:?} (objectives {:e} / {:e}, infeasibility {:e} / {:e}); running feasibility phase",
            first.status,
            first.primal_objective,
            first.dual_objective,
            first.primal_infeasibility,
            first.dual_infeasibility
        ),
    }

    let p1 = phase_one::PhaseOne::new(map, 1.0);
    let c = map.constant();
    let m = map.num_vars();
    let strictly_feasible = |y: &DVector<f64>| {
        let inner = y.rows(0, m).into_owned();
        cone::is_positive_definite(&cone::axpy(&c, -1.0, &map.apply(&inner)))
    };
    let rule = |y: &DVector<f64>, _s: &[cone::Block], _dinf: f64| y[m] < 0.0 && strictly_feasible(y);
    let feas = ipm::run(&p1, &opts, None, Some(&rule));
    let t = feas.y[m];
    match feas.status {
        EngineStatus::EarlyStop => {}
        EngineStatus::Converged if t < 0.0 && strictly_feasible(&feas.y) => {}
        EngineStatus::Converged => return Outcome::Infeasible(first.iterations, feas.iterations),
        _ => {
            log::debug!("feasibility phase ended with {:?} at t = {t:e}", feas.status);
            let mut res = first;
            if res.status == EngineStatus::MaxIterations && feas.status == EngineStatus::MaxIterations {
                return Outcome::Solved(res, feas.iterations);
            }
            if !matches!(res.status, EngineStatus::Failed(_) | EngineStatus::Stalled(_)) {
                res.status = EngineStatus::Failed(format!("feasibility phase ended with {:?}", feas.status));
            }
            return Outcome::Solved(res, feas.iterations);
        }
    }

    let y0 = feas.y.rows(0, m).into_owned();
    let second = ipm::run(map, &opts, Some(&y0), None);
    Outcome::Solved(second, feas.iterations)
}

/// A generic affine LMI in a vector variable:
///
/// ```text
/// minimise c'x   subject to   F0 + sum_i x_i F_i < 0   [and x > 0]
/// ```
#[derive(Debug, Clone)]
pub struct AffineLmi {
    pub constant: DMatrix<f64>,
    pub coefficients: Vec<DMatrix<f64>>,
    pub cost: DVector<f64>,
    /// Require every variable to be positive.
    pub positive: bool,
}

impl AffineLmi {
    pub fn new(constant: DMatrix<f64>, coefficients: Vec<DMatrix<f64>>, cost: DVector<f64>, positive: bool) -> Result<Self> {
        let d = constant.nrows();
        if constant.ncols() != d {
            return Err(Error::dims("constant term must be square"));
        }
        if coefficients.len() != cost.len() {
            return Err(Error::dims(format!("{} coefficients, {} costs", coefficients.len(), cost.len())));
        }
        for (i, f) in coefficients.iter().enumerate() {
            if f.shape() != (d, d) {
                return Err(Error::dims(format!("coefficient {i} is {:?}, expected {d}x{d}", f.shape())));
            }
        }
        let sym = |m: &DMatrix<f64>| (m - m.transpose()).amax() <= 1e-12 * (1.0 + m.amax());
        if !sym(&constant) || !coefficients.iter().all(sym) {
            return Err(Error::InvalidParameter { name: "coefficients", reason: "must be symmetric".into() });
        }
        Ok(AffineLmi { constant, coefficients, cost, positive })
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut f = self.constant.clone();
        for (fi, xi) in self.coefficients.iter().zip(x.iter()) {
            f += fi * *xi;
        }
        f
    }
}

#[derive(Debug, Clone)]
pub struct AffineSolution {
    pub status: SdpStatus,
    pub x: Option<DVector<f64>>,
    pub cost: f64,
    /// Largest eigenvalue of `F(x)`; negative at a strictly feasible point.
    pub max_eig: f64,
    pub gap: f64,
    pub iterations: usize,
}

pub fn solve_affine(problem: &AffineLmi, settings: &SdpSettings) -> Result<AffineSolution> {
    settings.validate()?;
    let map = dense::DenseMap::new(problem, settings.margin_feas, settings.p_floor);
    match run_with_phase_one(&map, settings, None) {
        Outcome::Infeasible(it, p1) => Ok(AffineSolution {
            status: SdpStatus::Infeasible,
            x: None,
            cost: f64::INFINITY,
            max_eig: f64::NAN,
            gap: f64::NAN,
            iterations: it + p1,
        }),
        Outcome::Solved(res, p1) => {
            let max_eig = linalg::max_eigenvalue(&problem.evaluate(&res.y));
            let positive_ok = !problem.positive || res.y.iter().all(|&v| v > 0.0);
            let status = match res.status {
                EngineStatus::Converged | EngineStatus::EarlyStop if max_eig < 0.0 && positive_ok => SdpStatus::Optimal,
                EngineStatus::MaxIterations => SdpStatus::MaxIterations,
                _ => SdpStatus::NumericalFailure,
            };
            Ok(AffineSolution {
                status,
                cost: problem.cost.dot(&res.y),
                x: Some(res.y),
                max_eig,
                gap: res.relative_gap,
                iterations: res.iterations + p1,
            })
        }
    }
}
