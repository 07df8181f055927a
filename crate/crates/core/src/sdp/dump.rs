//! Plain-text dump of an observer LMI for cross-checking with other solvers.
//!
//! ```text
//! # lmi states=<n> disturbances=<k> performance=<q> sensors=<ny> gamma=<g>
//! [A]
//! <n rows of comma-separated values>
//! [Bd]
//! ...
//! [Cz]
//! ...
//! [Cy]
//! ...
//! [weights]
//! <one row>
//! ```
//!
//! The constraint is `F(p, X, Y) < 0` with `F` as documented on
//! [`super::LmiProblem`]; values are written with 17 significant digits.

use std::io::Write;

use nalgebra::DMatrix;

use super::LmiProblem;
use crate::error::Result;

pub(crate) fn write<W: Write>(problem: &LmiProblem, mut w: W) -> Result<()> {
    let l = problem.layout();
    writeln!(
        w,
        "# lmi states={} disturbances={} performance={} sensors={} gamma={:.16e}",
        l.states, l.disturbances, l.performance, l.sensors, problem.gamma
    )?;
    section(&mut w, "A", &problem.a)?;
    section(&mut w, "Bd", &problem.bd)?;
    section(&mut w, "Cz", &problem.cz)?;
    section(&mut w, "Cy", &problem.cy)?;
    section(&mut w, "weights", &DMatrix::from_row_slice(1, problem.weights.len(), problem.weights.as_slice()))?;
    Ok(())
}

fn section<W: Write>(w: &mut W, name: &str, m: &DMatrix<f64>) -> Result<()> {
    writeln!(w, "[{name}]")?;
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}
