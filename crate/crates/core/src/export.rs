//! CSV and JSON artifacts: model matrices, observer bundles, placement logs
//! and simulation traces.
//!
//! Matrices are written with 17 significant digits so a write/read cycle
//! reproduces every entry bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hinf;
use crate::model::{CellParams, ThermalModel};
use crate::placement::{CandidateStatus, ExhaustiveRun, PlacementRun};
use crate::sdp::FeasibilityReport;
use crate::sim::SimTrace;
use crate::synthesis::SynthesisResult;

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|&v| fmt(v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Config(format!("{}: row {}: {e}", path.display(), line + 1)))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::dims(format!(
                    "{}: row {} has {} entries, expected {}",
                    path.display(),
                    line + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::dims(format!("{}: empty matrix", path.display())));
    }
    let cols = rows[0].len();
    Ok(DMatrix::from_row_iterator(rows.len(), cols, rows.into_iter().flatten()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSummary {
    pub cells: usize,
    pub states: usize,
    pub hurwitz: bool,
    pub spectral_abscissa: f64,
    /// `max |A x* + Bu u*|` at the uniform equilibrium.
    pub equilibrium_residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<CellParams>,
    pub warnings: Vec<String>,
}

impl ModelSummary {
    pub fn new(model: &ThermalModel, params: Option<&CellParams>) -> Self {
        let (hurwitz, spectral_abscissa) = hinf::is_hurwitz(model.a());
        ModelSummary {
            cells: model.cells(),
            states: model.states(),
            hurwitz,
            spectral_abscissa,
            equilibrium_residual: model.equilibrium_residual().amax(),
            params: params.copied(),
            warnings: params.map(|p| p.warnings()).unwrap_or_default(),
        }
    }
}

/// Writes `A.csv`, `Bu.csv`, `Bd.csv`, `Cz.csv` and `model.json` into `dir`.
pub fn write_model(dir: &Path, model: &ThermalModel, params: Option<&CellParams>) -> Result<ModelSummary> {
    fs::create_dir_all(dir)?;
    write_matrix_csv(&dir.join("A.csv"), model.a())?;
    write_matrix_csv(&dir.join("Bu.csv"), model.bu())?;
    write_matrix_csv(&dir.join("Bd.csv"), model.bd())?;
    write_matrix_csv(&dir.join("Cz.csv"), model.cz())?;
    let summary = ModelSummary::new(model, params);
    write_json(&dir.join("model.json"), &summary)?;
    Ok(summary)
}

/// Reads a model written by [`write_model`]. `Cz.csv` is optional.
pub fn read_model(dir: &Path) -> Result<ThermalModel> {
    let a = read_matrix_csv(&dir.join("A.csv"))?;
    let bu = read_matrix_csv(&dir.join("Bu.csv"))?;
    let bd = read_matrix_csv(&dir.join("Bd.csv"))?;
    let cz_path = dir.join("Cz.csv");
    let cz = if cz_path.exists() { Some(read_matrix_csv(&cz_path)?) } else { None };
    ThermalModel::from_matrices(a, bu, bd, cz)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisBundle {
    pub sensors: Vec<usize>,
    pub gamma: f64,
    pub cost: f64,
    pub p: Vec<f64>,
    pub sigma: Vec<f64>,
    pub verified_norm: Option<f64>,
    pub closed_loop_abscissa: f64,
    pub gap: f64,
    pub iterations: usize,
    pub certificates: FeasibilityReport,
}

impl From<&SynthesisResult> for SynthesisBundle {
    fn from(r: &SynthesisResult) -> Self {
        SynthesisBundle {
            sensors: r.sensors.clone(),
            gamma: r.gamma,
            cost: r.cost,
            p: r.p.iter().copied().collect(),
            sigma: r.sigma.iter().copied().collect(),
            verified_norm: r.verified_norm,
            closed_loop_abscissa: r.closed_loop_abscissa,
            gap: r.gap,
            iterations: r.iterations,
            certificates: r.certificates,
        }
    }
}

/// Writes `synthesis.json` plus the gain and multipliers as `L.csv`,
/// `X.csv` and `Y.csv`.
pub fn write_synthesis(dir: &Path, result: &SynthesisResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("synthesis.json"), &SynthesisBundle::from(result))?;
    write_matrix_csv(&dir.join("L.csv"), &result.l)?;
    write_matrix_csv(&dir.join("X.csv"), &result.x)?;
    write_matrix_csv(&dir.join("Y.csv"), &result.y)?;
    Ok(())
}

/// Observer gain and sensor noise scales re-read from a bundle directory.
pub fn read_synthesis(dir: &Path) -> Result<(SynthesisBundle, DMatrix<f64>)> {
    let text = fs::read_to_string(dir.join("synthesis.json"))?;
    let bundle: SynthesisBundle = serde_json::from_str(&text)?;
    let l = read_matrix_csv(&dir.join("L.csv"))?;
    if l.ncols() != bundle.sensors.len() {
        return Err(Error::dims(format!("L has {} columns for {} sensors", l.ncols(), bundle.sensors.len())));
    }
    Ok((bundle, l))
}

impl SynthesisBundle {
    pub fn sigma_vector(&self) -> DVector<f64> {
        DVector::from_vec(self.sigma.clone())
    }
}

fn status_fields(s: &CandidateStatus) -> (&'static str, String) {
    match s {
        CandidateStatus::Optimal => ("optimal", String::new()),
        CandidateStatus::Infeasible => ("infeasible", String::new()),
        CandidateStatus::Failed(m) => ("failed", m.clone()),
    }
}

#[derive(Debug, Clone, Serialize)]
struct PlacementSummary<'a> {
    cells: usize,
    target: usize,
    gamma: f64,
    selection: &'a Option<Vec<usize>>,
    cost: Option<f64>,
    verified_norm: Option<f64>,
    solves: usize,
    auxiliary_solves: usize,
    failures: usize,
    path: Vec<f64>,
}

/// Writes `placement.csv` (one row per candidate solve), `survivors.csv`
/// (precisions of the set left after each elimination) and `placement.json`.
pub fn write_placement(dir: &Path, run: &PlacementRun) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("placement.csv"))?;
    w.write_record(["iteration", "removed", "cost", "status", "message"])?;
    for it in &run.iterations {
        for c in &it.candidates {
            let (status, msg) = status_fields(&c.status);
            w.write_record([it.iteration.to_string(), c.removed.to_string(), fmt(c.cost), status.into(), msg])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("survivors.csv"))?;
    w.write_record(["iteration", "cell", "p", "cost"])?;
    for it in &run.iterations {
        for (cell, p) in it.remaining().iter().zip(it.p.iter()) {
            w.write_record([it.iteration.to_string(), cell.to_string(), fmt(*p), fmt(it.cost)])?;
        }
    }
    w.flush()?;

    let summary = PlacementSummary {
        cells: run.cells,
        target: run.target,
        gamma: run.gamma,
        selection: &run.selection,
        cost: run.result.as_ref().map(|r| r.cost),
        verified_norm: run.result.as_ref().and_then(|r| r.verified_norm),
        solves: run.solves,
        auxiliary_solves: run.auxiliary_solves,
        failures: run.failures,
        path: run.iterations.iter().map(|i| i.cost).collect(),
    };
    write_json(&dir.join("placement.json"), &summary)?;
    if let Some(r) = &run.result {
        write_synthesis(&dir.join("observer"), r)?;
    }
    Ok(())
}

/// Writes `exhaustive.csv` with one row per subset.
pub fn write_exhaustive(dir: &Path, run: &ExhaustiveRun) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("exhaustive.csv"))?;
    w.write_record(["cells", "cost", "status", "message"])?;
    for rec in &run.table {
        let cells: Vec<String> = rec.cells.iter().map(|c| c.to_string()).collect();
        let (status, msg) = status_fields(&rec.status);
        w.write_record([cells.join(" "), fmt(rec.cost), status.into(), msg])?;
    }
    w.flush()?;
    if let Some((_, r)) = &run.best {
        write_synthesis(&dir.join("observer"), r)?;
    }
    Ok(())
}

/// Writes a trace as CSV: `t`, then each error state, then each performance
/// output.
pub fn write_trace(path: &Path, trace: &SimTrace) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=trace.errors.ncols()).map(|i| format!("e{i}")));
    header.extend((1..=trace.outputs.ncols()).map(|i| format!("z{i}")));
    w.write_record(&header)?;
    for k in 0..trace.len() {
        let mut row = vec![fmt(trace.time[k])];
        row.extend(trace.errors.row(k).iter().map(|&v| fmt(v)));
        row.extend(trace.outputs.row(k).iter().map(|&v| fmt(v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Path of a file inside the output directory, creating the directory.
pub fn output_file(dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    Ok(dir.join(name))
}
