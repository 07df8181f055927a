//! Sensor placement: greedy elimination from the full set, and exhaustive
//! search as a small-scale reference.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{SensorSelection, ThermalModel};
use crate::synthesis::{synthesize, SynthesisOutcome, SynthesisResult, SynthesisSettings, SynthesisSpec};

/// Default limit on the number of subsets an exhaustive search may visit.
pub const DEFAULT_EXHAUSTIVE_CAP: u128 = 100_000;
/// Exhaustive searches above this many subsets log a runtime warning.
pub const EXHAUSTIVE_WARN: u128 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacementSettings {
    pub synthesis: SynthesisSettings,
    /// Costs within this relative distance of the minimum are ties; the
    /// lowest cell index wins.
    pub tie_tol: f64,
    /// Worker threads for candidate evaluation; `None` uses every core.
    pub jobs: Option<usize>,
}

impl Default for PlacementSettings {
    fn default() -> Self {
        PlacementSettings { synthesis: SynthesisSettings::default(), tie_tol: 1e-7, jobs: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", content = "message", rename_all = "kebab-case")]
pub enum CandidateStatus {
    Optimal,
    Infeasible,
    /// Solver or verification failure; treated as infinite cost but not as
    /// proof of infeasibility.
    Failed(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateRecord {
    /// Cell removed from the surviving set for this candidate.
    pub removed: usize,
    pub cost: f64,
    pub status: CandidateStatus,
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Surviving set before the elimination.
    pub survivors: Vec<usize>,
    pub candidates: Vec<CandidateRecord>,
    pub eliminated: usize,
    /// Optimal precisions of the set left after the elimination.
    pub p: DVector<f64>,
    pub cost: f64,
}

impl IterationRecord {
    pub fn remaining(&self) -> Vec<usize> {
        self.survivors.iter().copied().filter(|&c| c != self.eliminated).collect()
    }
}

#[derive(Debug, Clone)]
pub struct PlacementRun {
    pub cells: usize,
    pub target: usize,
    pub gamma: f64,
    pub iterations: Vec<IterationRecord>,
    /// `None` when every candidate of some iteration was infeasible.
    pub selection: Option<Vec<usize>>,
    pub result: Option<SynthesisResult>,
    /// Candidate syntheses performed.
    pub solves: usize,
    /// Syntheses outside the candidate loop (only when no elimination is
    /// needed).
    pub auxiliary_solves: usize,
    /// Candidates whose solve failed numerically.
    pub failures: usize,
}

/// Candidate solve count of a run that never meets infeasibility.
pub fn expected_solves(cells: usize, target: usize) -> usize {
    cells * (cells + 1) / 2 - target * (target + 1) / 2
}

fn cell_weights(model: &ThermalModel, weights: Option<&DVector<f64>>) -> Result<DVector<f64>> {
    match weights {
        None => Ok(DVector::from_element(model.cells(), 1.0)),
        Some(w) if w.len() == model.cells() => Ok(w.clone()),
        Some(w) => Err(Error::dims(format!("{} weights for {} cells", w.len(), model.cells()))),
    }
}

fn evaluate(
    model: &ThermalModel,
    gamma: f64,
    weights: &DVector<f64>,
    cells: &[usize],
    settings: &SynthesisSettings,
) -> Result<SynthesisOutcome> {
    let sensors = SensorSelection::new(model, cells)?;
    let w = DVector::from_iterator(cells.len(), cells.iter().map(|&c| weights[c - 1]));
    synthesize(&SynthesisSpec::new(model, &sensors, gamma).with_weights(w), settings)
}

fn status_of(outcome: &SynthesisOutcome) -> CandidateStatus {
    match outcome {
        SynthesisOutcome::Optimal(_) => CandidateStatus::Optimal,
        SynthesisOutcome::Infeasible => CandidateStatus::Infeasible,
        SynthesisOutcome::Failed { status, message } => CandidateStatus::Failed(format!("{status}: {message}")),
    }
}

/// Index of the minimum finite cost; near-ties go to the earliest entry.
fn pick(costs: &[f64], tie_tol: f64) -> Option<usize> {
    let best = costs.iter().copied().filter(|c| c.is_finite()).fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return None;
    }
    let scale = best.abs().max(f64::MIN_POSITIVE);
    costs.iter().position(|&c| c.is_finite() && (c - best) / scale <= tie_tol)
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Greedy elimination down to `target` sensors. `progress` is called after
/// every iteration.
pub fn greedy_select(
    model: &ThermalModel,
    gamma: f64,
    target: usize,
    weights: Option<&DVector<f64>>,
    settings: &PlacementSettings,
    progress: Option<&(dyn Fn(&IterationRecord) + Sync)>,
) -> Result<PlacementRun> {
    let cells = model.cells();
    if target == 0 || target > cells {
        return Err(Error::InvalidParameter {
            name: "sensors",
            reason: format!("target count must be in 1..={cells}, got {target}"),
        });
    }
    let weights = cell_weights(model, weights)?;
    let mut run = PlacementRun {
        cells,
        target,
        gamma,
        iterations: Vec::new(),
        selection: None,
        result: None,
        solves: 0,
        auxiliary_solves: 0,
        failures: 0,
    };
    let mut survivors: Vec<usize> = (1..=cells).collect();
    let mut last: Option<SynthesisResult> = None;

    while survivors.len() > target {
        let subsets: Vec<Vec<usize>> = survivors
            .iter()
            .map(|&drop| survivors.iter().copied().filter(|&c| c != drop).collect())
            .collect();
        let outcomes: Vec<Result<SynthesisOutcome>> = with_pool(settings.jobs, || {
            subsets
                .par_iter()
                .map(|cells| evaluate(model, gamma, &weights, cells, &settings.synthesis))
                .collect()
        })?;
        run.solves += subsets.len();

        let mut candidates = Vec::with_capacity(survivors.len());
        let mut results = Vec::with_capacity(survivors.len());
        for (&drop, outcome) in survivors.iter().zip(outcomes) {
            let outcome = outcome?;
            let status = status_of(&outcome);
            if let CandidateStatus::Failed(msg) = &status {
                log::warn!("candidate without cell {drop} failed: {msg}");
                run.failures += 1;
            }
            candidates.push(CandidateRecord { removed: drop, cost: outcome.cost(), status });
            results.push(outcome);
        }
        let costs: Vec<f64> = candidates.iter().map(|c| c.cost).collect();
        let Some(k) = pick(&costs, settings.tie_tol) else {
            log::warn!("every candidate is infeasible with {} sensors left", survivors.len());
            run.iterations.push(IterationRecord {
                iteration: run.iterations.len() + 1,
                survivors: survivors.clone(),
                candidates,
                eliminated: 0,
                p: DVector::zeros(0),
                cost: f64::INFINITY,
            });
            return Ok(run);
        };
        let winner = match results.swap_remove(k) {
            SynthesisOutcome::Optimal(r) => *r,
            _ => unreachable!("picked candidates have finite cost"),
        };
        let record = IterationRecord {
            iteration: run.iterations.len() + 1,
            survivors: survivors.clone(),
            candidates,
            eliminated: survivors[k],
            p: winner.p.clone(),
            cost: winner.cost,
        };
        log::info!(
            "iteration {}: eliminated cell {}, {} left, cost {:.9}",
            record.iteration,
            record.eliminated,
            survivors.len() - 1,
            record.cost
        );
        if let Some(cb) = progress {
            cb(&record);
        }
        survivors.remove(k);
        run.iterations.push(record);
        last = Some(winner);
    }

    if last.is_none() {
        // Nothing to eliminate; synthesise the full set for the report.
        run.auxiliary_solves += 1;
        match evaluate(model, gamma, &weights, &survivors, &settings.synthesis)? {
            SynthesisOutcome::Optimal(r) => last = Some(*r),
            other => {
                log::warn!("full sensor set did not synthesise: {:?}", status_of(&other));
                return Ok(run);
            }
        }
    }
    run.selection = Some(survivors);
    run.result = last;
    Ok(run)
}

#[derive(Debug, Clone, Serialize)]
pub struct SubsetRecord {
    pub cells: Vec<usize>,
    pub cost: f64,
    pub status: CandidateStatus,
}

#[derive(Debug, Clone)]
pub struct ExhaustiveRun {
    pub table: Vec<SubsetRecord>,
    pub best: Option<(Vec<usize>, SynthesisResult)>,
}

/// `n choose k`, exact.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Next k-combination of 1..=n in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - (k - 1 - i) {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Solves the LMI for every `target`-subset and returns the cheapest; ties
/// go to the lexicographically first subset.
pub fn exhaustive_select(
    model: &ThermalModel,
    gamma: f64,
    target: usize,
    weights: Option<&DVector<f64>>,
    settings: &PlacementSettings,
    cap: u128,
) -> Result<ExhaustiveRun> {
    let cells = model.cells();
    if target == 0 || target > cells {
        return Err(Error::InvalidParameter {
            name: "sensors",
            reason: format!("target count must be in 1..={cells}, got {target}"),
        });
    }
    let count = binomial(cells, target);
    if count > cap {
        return Err(Error::CapExceeded { count, cap });
    }
    if count > EXHAUSTIVE_WARN {
        log::warn!("exhaustive search will run {count} syntheses");
    }
    let weights = cell_weights(model, weights)?;

    let mut table = Vec::with_capacity(count as usize);
    let mut best: Option<(Vec<usize>, SynthesisResult)> = None;
    let mut current: Vec<usize> = (1..=target).collect();
    let mut more = true;
    const CHUNK: usize = 256;
    while more {
        let mut chunk = Vec::with_capacity(CHUNK);
        while more && chunk.len() < CHUNK {
            chunk.push(current.clone());
            more = next_combination(&mut current, cells);
        }
        let outcomes: Vec<Result<SynthesisOutcome>> = with_pool(settings.jobs, || {
            chunk
                .par_iter()
                .map(|s| evaluate(model, gamma, &weights, s, &settings.synthesis))
                .collect()
        })?;
        for (subset, outcome) in chunk.into_iter().zip(outcomes) {
            let outcome = outcome?;
            let status = status_of(&outcome);
            let cost = outcome.cost();
            table.push(SubsetRecord { cells: subset.clone(), cost, status });
            if let SynthesisOutcome::Optimal(r) = outcome {
                let better = match &best {
                    None => true,
                    Some((_, b)) => (cost - b.cost) / b.cost.abs().max(f64::MIN_POSITIVE) < -settings.tie_tol,
                };
                if better {
                    best = Some((subset, *r));
                }
            }
        }
    }
    Ok(ExhaustiveRun { table, best })
}
