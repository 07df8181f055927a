//! Lumped two-state thermal model of a string of identical cells.
//!
//! Each cell carries a core temperature `Tc` and a surface temperature `Ts`.
//! The coolant flows past the cells in order; its temperature at cell `i` is a
//! static function of the inlet temperature and of the surface temperatures of
//! the cells upstream. Eliminating that chain leaves a linear time-invariant
//! model
//!
//! ```text
//! x' = A x + Bu u + Bd d,    x = [Tc1, Ts1, Tc2, Ts2, ..., TcM, TsM]
//!                            u = [I^2, Tf_in]
//! ```
//!
//! with a dense lower triangle in the surface rows of `A`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical constants of one cell and of the coolant stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellParams {
    /// Core heat capacity [J/K].
    pub cc: f64,
    /// Surface heat capacity [J/K].
    pub cs: f64,
    /// Coolant heat-capacity rate [J/(K s)].
    pub cf: f64,
    /// Electrical resistance [Ohm].
    pub re: f64,
    /// Core to surface conduction resistance [K/W].
    pub rc: f64,
    /// Surface to coolant convection resistance [K/W].
    pub ru: f64,
    /// Cell to cell conduction resistance [K/W].
    pub rcc: f64,
    /// Disturbance normalisation on the inlet coolant channel [K].
    pub sd: f64,
}

impl Default for CellParams {
    /// A123 26650 LiFePO4 cells with a disturbance scale of 10 K.
    fn default() -> Self {
        CellParams {
            cc: 67.0,
            cs: 4.5,
            cf: 2.6,
            re: 0.01,
            rc: 1.83,
            ru: 5.0,
            rcc: 0.2,
            sd: 10.0,
        }
    }
}

impl CellParams {
    pub fn validate(&self) -> Result<()> {
        let fields: [(&'static str, f64); 8] = [
            ("cc", self.cc),
            ("cs", self.cs),
            ("cf", self.cf),
            ("re", self.re),
            ("rc", self.rc),
            ("ru", self.ru),
            ("rcc", self.rcc),
            ("sd", self.sd),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite and strictly positive, got {value}"),
                });
            }
        }
        Ok(())
    }

    /// Fraction of the coolant-to-surface temperature gap that survives one
    /// cell, `1 - 1/(Cf Ru)`.
    pub fn coolant_retention(&self) -> f64 {
        1.0 - 1.0 / (self.cf * self.ru)
    }

    /// Model-sanity warnings that do not make the parameters invalid.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.cf * self.ru <= 1.0 {
            out.push(format!(
                "Cf*Ru = {:.4} <= 1: coolant retention factor {:.4} is non-positive",
                self.cf * self.ru,
                self.coolant_retention()
            ));
        }
        out
    }
}

#[inline]
pub(crate) fn core_index(cell: usize) -> usize {
    2 * cell
}

#[inline]
pub(crate) fn surface_index(cell: usize) -> usize {
    2 * cell + 1
}

/// Continuous-time LTI thermal model of an `M`-cell string.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalModel {
    cells: usize,
    a: DMatrix<f64>,
    bu: DMatrix<f64>,
    bd: DMatrix<f64>,
    cz: DMatrix<f64>,
}

impl ThermalModel {
    /// Assembles `A`, `Bu` and `Bd` from the core and surface heat balances.
    pub fn build(params: &CellParams, cells: usize) -> Result<Self> {
        params.validate()?;
        if cells < 2 {
            return Err(Error::TooFewCells(cells));
        }
        for w in params.warnings() {
            log::warn!("{w}");
        }

        let n = 2 * cells;
        let mut a = DMatrix::zeros(n, n);
        let mut bu = DMatrix::zeros(n, 2);

        // Coolant temperature at each cell as a linear form over the surface
        // temperatures (indexed by cell) and the inlet temperature.
        let through = 1.0 / (params.cf * params.ru);
        let mut coolant_surface = vec![0.0; cells];
        let mut coolant_inlet = 1.0;

        for i in 0..cells {
            let c = core_index(i);
            let s = surface_index(i);

            // Cc Tc' = I^2 Re + (Ts - Tc)/Rc
            let g = 1.0 / (params.cc * params.rc);
            a[(c, c)] -= g;
            a[(c, s)] += g;
            bu[(c, 0)] = params.re / params.cc;

            // Cs Ts' = (Tf - Ts)/Ru - (Ts - Tc)/Rc + Qcc
            let conv = 1.0 / (params.cs * params.ru);
            for (j, &w) in coolant_surface.iter().enumerate() {
                a[(s, surface_index(j))] += conv * w;
            }
            bu[(s, 1)] = conv * coolant_inlet;
            a[(s, s)] -= conv;

            let cond = 1.0 / (params.cs * params.rc);
            a[(s, s)] -= cond;
            a[(s, c)] += cond;

            let link = 1.0 / (params.cs * params.rcc);
            let neighbours = [i.checked_sub(1), (i + 1 < cells).then_some(i + 1)];
            for j in neighbours.into_iter().flatten() {
                a[(s, surface_index(j))] += link;
                a[(s, s)] -= link;
            }

            // Tf_{i+1} = Tf_i + (Ts_i - Tf_i)/(Cf Ru)
            for w in coolant_surface.iter_mut() {
                *w *= 1.0 - through;
            }
            coolant_surface[i] += through;
            coolant_inlet *= 1.0 - through;
        }

        let bd = &bu * DMatrix::from_column_slice(2, 1, &[0.0, params.sd]);
        Ok(ThermalModel {
            cells,
            a,
            bu,
            bd,
            cz: DMatrix::identity(n, n),
        })
    }

    /// Wraps externally supplied matrices (for example re-read from CSV).
    pub fn from_matrices(
        a: DMatrix<f64>,
        bu: DMatrix<f64>,
        bd: DMatrix<f64>,
        cz: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = a.nrows();
        if n < 4 || n % 2 != 0 || a.ncols() != n {
            return Err(Error::dims(format!(
                "A must be square with an even order of at least 4, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if bu.nrows() != n || bu.ncols() != 2 {
            return Err(Error::dims(format!("Bu must be {n}x2, got {}x{}", bu.nrows(), bu.ncols())));
        }
        if bd.nrows() != n || bd.ncols() == 0 {
            return Err(Error::dims(format!("Bd must have {n} rows, got {}x{}", bd.nrows(), bd.ncols())));
        }
        let model = ThermalModel {
            cells: n / 2,
            a,
            bu,
            bd,
            cz: DMatrix::identity(n, n),
        };
        match cz {
            Some(cz) => model.with_performance_output(cz),
            None => Ok(model),
        }
    }

    /// Replaces the performance output `Cz` (identity by default).
    pub fn with_performance_output(mut self, cz: DMatrix<f64>) -> Result<Self> {
        let n = self.states();
        if cz.ncols() != n || cz.nrows() == 0 || cz.nrows() > n {
            return Err(Error::dims(format!(
                "Cz must have {n} columns and between 1 and {n} rows, got {}x{}",
                cz.nrows(),
                cz.ncols()
            )));
        }
        let rank = cz.clone().svd(false, false).rank(1e-10 * cz.norm().max(1.0));
        if rank < cz.nrows() {
            return Err(Error::InvalidParameter {
                name: "cz",
                reason: format!("must have full row rank, rank {rank} < {} rows", cz.nrows()),
            });
        }
        self.cz = cz;
        Ok(self)
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn states(&self) -> usize {
        2 * self.cells
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn bu(&self) -> &DMatrix<f64> {
        &self.bu
    }

    pub fn bd(&self) -> &DMatrix<f64> {
        &self.bd
    }

    pub fn cz(&self) -> &DMatrix<f64> {
        &self.cz
    }

    /// `A 1 + Bu [0, 1]^T`: zero when a uniform temperature (inlet included)
    /// is an equilibrium at zero current.
    pub fn equilibrium_residual(&self) -> DVector<f64> {
        let ones = DVector::from_element(self.states(), 1.0);
        &self.a * ones + self.bu.column(1)
    }
}

/// An ordered subset of cells carrying a surface-temperature sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSelection {
    indices: Vec<usize>,
    cy: DMatrix<f64>,
}

impl SensorSelection {
    /// Builds `Cy` for 1-based cell indices; the rows follow ascending cell
    /// order regardless of the input order.
    pub fn new(model: &ThermalModel, cells: &[usize]) -> Result<Self> {
        let total = model.cells();
        let mut indices = cells.to_vec();
        indices.sort_unstable();
        for w in indices.windows(2) {
            if w[0] == w[1] {
                return Err(Error::DuplicateSensor(w[0]));
            }
        }
        if let Some(&bad) = indices.iter().find(|&&i| i == 0 || i > total) {
            return Err(Error::SensorOutOfRange { index: bad, cells: total });
        }
        let mut cy = DMatrix::zeros(indices.len(), model.states());
        for (row, &cell) in indices.iter().enumerate() {
            cy[(row, surface_index(cell - 1))] = 1.0;
        }
        Ok(SensorSelection { indices, cy })
    }

    /// No sensors at all (open-loop analysis).
    pub fn empty(model: &ThermalModel) -> Self {
        SensorSelection {
            indices: Vec::new(),
            cy: DMatrix::zeros(0, model.states()),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn cy(&self) -> &DMatrix<f64> {
        &self.cy
    }

    pub fn states(&self) -> usize {
        self.cy.ncols()
    }
}
