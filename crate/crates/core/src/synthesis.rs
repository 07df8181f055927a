//! Precision-minimising H-infinity observer synthesis.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hinf;
use crate::model::{SensorSelection, ThermalModel};
use crate::sdp::{self, FeasibilityReport, LmiProblem, SdpSettings, SdpStatus};

/// Slack allowed on the independently verified norm.
pub const VERIFICATION_SLACK: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct SynthesisSpec<'a> {
    pub model: &'a ThermalModel,
    pub sensors: &'a SensorSelection,
    pub gamma: f64,
    /// Per-sensor cost weights; all ones when `None`.
    pub weights: Option<DVector<f64>>,
}

impl<'a> SynthesisSpec<'a> {
    pub fn new(model: &'a ThermalModel, sensors: &'a SensorSelection, gamma: f64) -> Self {
        SynthesisSpec { model, sensors, gamma, weights: None }
    }

    pub fn with_weights(mut self, weights: DVector<f64>) -> Self {
        self.weights = Some(weights);
        self
    }

    fn weights(&self) -> DVector<f64> {
        self.weights.clone().unwrap_or_else(|| DVector::from_element(self.sensors.len(), 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisSettings {
    pub sdp: SdpSettings,
    /// Recompute the norm of the realised error system after each solve.
    pub verify: bool,
    /// Relative tolerance of that norm computation.
    pub hinf_tol: f64,
}

impl Default for SynthesisSettings {
    fn default() -> Self {
        SynthesisSettings { sdp: SdpSettings::default(), verify: true, hinf_tol: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub sensors: Vec<usize>,
    pub gamma: f64,
    pub p: DVector<f64>,
    pub sigma: DVector<f64>,
    pub l: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub cost: f64,
    /// Upper bound on the H-infinity norm of the realised error system.
    pub verified_norm: Option<f64>,
    pub certificates: FeasibilityReport,
    pub closed_loop_abscissa: f64,
    pub gap: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub enum SynthesisOutcome {
    Optimal(Box<SynthesisResult>),
    /// No strictly feasible point: the level `gamma` cannot be met with
    /// these sensors.
    Infeasible,
    /// The solver or the verification did not produce a trustworthy result.
    Failed { status: SdpStatus, message: String },
}

impl SynthesisOutcome {
    pub fn optimal(&self) -> Option<&SynthesisResult> {
        match self {
            SynthesisOutcome::Optimal(r) => Some(r),
            _ => None,
        }
    }

    pub fn cost(&self) -> f64 {
        self.optimal().map_or(f64::INFINITY, |r| r.cost)
    }
}

fn check_spec(spec: &SynthesisSpec<'_>) -> Result<()> {
    if spec.sensors.states() != spec.model.states() {
        return Err(Error::dims(format!(
            "sensor matrix has {} columns, model has {} states",
            spec.sensors.states(),
            spec.model.states()
        )));
    }
    if let Some(w) = &spec.weights {
        if w.len() != spec.sensors.len() {
            return Err(Error::dims(format!("{} weights for {} sensors", w.len(), spec.sensors.len())));
        }
    }
    Ok(())
}

/// The precision-minimisation LMI for `spec`. Its full dimension is
/// `2M + 1 + rows(Cz) + Ny`.
pub fn assemble_lmi(spec: &SynthesisSpec<'_>) -> Result<LmiProblem> {
    check_spec(spec)?;
    LmiProblem::new(
        spec.model.a().clone(),
        spec.model.bd().clone(),
        spec.model.cz().clone(),
        spec.sensors.cy().clone(),
        spec.gamma,
        spec.weights(),
    )
}

/// Solves `X L = Y`, refusing numerically singular `X`.
pub fn recover_gain(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !x.is_square() || x.nrows() != y.nrows() {
        return Err(Error::dims(format!("X {:?}, Y {:?}", x.shape(), y.shape())));
    }
    let lu = x.clone().lu();
    let mut l = match x.clone().cholesky() {
        Some(c) => c.solve(y),
        None => lu.solve(y).ok_or_else(|| Error::Singular("X in X L = Y".into()))?,
    };
    // One step of iterative refinement.
    let r = y - x * &l;
    if let Some(d) = lu.solve(&r) {
        l += d;
    }
    let residual = (x * &l - y).norm();
    if !residual.is_finite() || residual > 1e-9 * y.norm() {
        return Err(Error::Singular(format!("X L = Y residual {residual:e} against |Y| = {:e}", y.norm())));
    }
    Ok(l)
}

pub fn synthesize(spec: &SynthesisSpec<'_>, settings: &SynthesisSettings) -> Result<SynthesisOutcome> {
    let problem = assemble_lmi(spec)?;
    let sol = sdp::solve(&problem, &settings.sdp)?;
    finish(spec, settings, sol)
}

/// Like [`synthesize`], starting the solver from an earlier point.
pub fn synthesize_from(
    spec: &SynthesisSpec<'_>,
    settings: &SynthesisSettings,
    start: &sdp::LmiPoint,
) -> Result<SynthesisOutcome> {
    let problem = assemble_lmi(spec)?;
    let sol = sdp::solve_from(&problem, &settings.sdp, start)?;
    finish(spec, settings, sol)
}

fn finish(spec: &SynthesisSpec<'_>, settings: &SynthesisSettings, sol: sdp::SdpSolution) -> Result<SynthesisOutcome> {
    let fail = |status, message: String| Ok(SynthesisOutcome::Failed { status, message });
    match sol.status {
        SdpStatus::Optimal => {}
        SdpStatus::Infeasible => return Ok(SynthesisOutcome::Infeasible),
        s => return fail(s, sol.message.unwrap_or_default()),
    }
    let point = sol.point.expect("optimal solutions carry a point");
    let l = match recover_gain(&point.x, &point.y) {
        Ok(l) => l,
        Err(e) => return fail(SdpStatus::NumericalFailure, e.to_string()),
    };
    let sigma = point.p.map(|p| p.powf(-0.5));
    let closed = spec.model.a() + &l * spec.sensors.cy();
    let (stable, abscissa) = hinf::is_hurwitz(&closed);
    if !stable {
        return fail(
            SdpStatus::NumericalFailure,
            format!("recovered gain leaves A + L Cy unstable (abscissa {abscissa:e})"),
        );
    }

    let mut verified_norm = None;
    if settings.verify {
        let sys = hinf::build_error_system(spec.model, spec.sensors, &l, &sigma)?;
        // The bisection tolerance is relative; keep it well inside the
        // absolute slack.
        let tol = settings.hinf_tol.min(0.01 * VERIFICATION_SLACK / spec.gamma);
        let norm = match hinf::hinf_norm(&sys, tol) {
            Ok(n) => n.upper,
            Err(e) => return fail(SdpStatus::NumericalFailure, e.to_string()),
        };
        if norm >= spec.gamma + VERIFICATION_SLACK {
            return fail(
                SdpStatus::NumericalFailure,
                format!("verified norm {norm:.9} exceeds gamma {} beyond the slack", spec.gamma),
            );
        }
        verified_norm = Some(norm);
    }

    Ok(SynthesisOutcome::Optimal(Box::new(SynthesisResult {
        sensors: spec.sensors.indices().to_vec(),
        gamma: spec.gamma,
        cost: sol.cost,
        sigma,
        p: point.p,
        l,
        x: point.x,
        y: point.y,
        verified_norm,
        certificates: sol.certificates.expect("optimal solutions carry certificates"),
        closed_loop_abscissa: abscissa,
        gap: sol.gap,
        iterations: sol.iterations + sol.phase_one_iterations,
    })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CellParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lmi_dimensions() {
        for (m, expect) in [(10, 51), (40, 201)] {
            let model = ThermalModel::build(&CellParams::default(), m).unwrap();
            let all: Vec<usize> = (1..=m).collect();
            let s = SensorSelection::new(&model, &all).unwrap();
            let lmi = assemble_lmi(&SynthesisSpec::new(&model, &s, 1.0)).unwrap();
            assert_eq!(lmi.layout().dimension(), expect);
        }
    }

    #[test]
    fn constant_part_has_only_constant_blocks() {
        let model = ThermalModel::build(&CellParams::default(), 3).unwrap();
        let s = SensorSelection::new(&model, &[2]).unwrap();
        let lmi = assemble_lmi(&SynthesisSpec::new(&model, &s, 2.0)).unwrap();
        let f0 = lmi.evaluate(&lmi.zero_point()).unwrap();
        // Layout 6 | 1 | 6 | 1
        assert!(f0.view((0, 0), (6, 6)).amax() == 0.0);
        assert!(f0.view((0, 6), (6, 1)).amax() == 0.0);
        assert_eq!(f0.view((0, 7), (6, 6)), DMatrix::identity(6, 6));
        assert!(f0.view((0, 13), (6, 1)).amax() == 0.0);
        assert_eq!(f0[(6, 6)], -2.0);
        assert_eq!(f0.view((7, 7), (6, 6)), DMatrix::identity(6, 6) * -2.0);
        assert_eq!(f0[(13, 13)], 0.0);
    }

    #[test]
    fn weight_length_is_checked() {
        let model = ThermalModel::build(&CellParams::default(), 3).unwrap();
        let s = SensorSelection::new(&model, &[2]).unwrap();
        let spec = SynthesisSpec::new(&model, &s, 1.0).with_weights(DVector::from_vec(vec![1.0, 1.0]));
        assert!(assemble_lmi(&spec).is_err());
    }

    #[test]
    fn identity_x_gives_back_y() {
        let y = DMatrix::from_fn(4, 2, |i, j| (i * 2 + j) as f64 - 3.0);
        let l = recover_gain(&DMatrix::identity(4, 4), &y).unwrap();
        assert!((l - &y).amax() < 1e-15);
    }

    #[test]
    fn recovered_gain_solves_the_linear_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [3, 8, 20] {
            let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let x = &g * g.transpose() + DMatrix::identity(n, n) * 0.1;
            let y = DMatrix::from_fn(n, 3, |_, _| rng.random_range(-5.0..5.0));
            let l = recover_gain(&x, &y).unwrap();
            assert!((&x * &l - &y).norm() <= 1e-9 * y.norm());
        }
    }

    #[test]
    fn singular_x_is_rejected() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let y = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        assert!(recover_gain(&x, &y).is_err());
    }
}
