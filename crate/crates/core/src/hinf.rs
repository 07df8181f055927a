//! Observer error system and its H-infinity norm.
//!
//! The error `e = x - x_hat` obeys `e' = Ae e + Be w`, `eps = Ce e` with
//! `Ae = A + L Cy`, `Be = [Bd, L diag(sigma)]` and `Ce = Cz`; the input is
//! `w = [d; n]` with the sensor noises in ascending cell order.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{SensorSelection, ThermalModel};

/// Lowest and highest frequencies [rad/s] of the initial sweep.
pub const SWEEP_RANGE: (f64, f64) = (1e-6, 1e3);
const SWEEP_POINTS: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSystem {
    pub ae: DMatrix<f64>,
    pub be: DMatrix<f64>,
    pub ce: DMatrix<f64>,
}

impl ErrorSystem {
    pub fn new(ae: DMatrix<f64>, be: DMatrix<f64>, ce: DMatrix<f64>) -> Result<Self> {
        let n = ae.nrows();
        if ae.ncols() != n || be.nrows() != n || ce.ncols() != n {
            return Err(Error::dims(format!(
                "Ae {:?}, Be {:?}, Ce {:?}",
                ae.shape(),
                be.shape(),
                ce.shape()
            )));
        }
        Ok(ErrorSystem { ae, be, ce })
    }

    pub fn states(&self) -> usize {
        self.ae.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.be.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.ce.nrows()
    }

    /// `Ce (jw I - Ae)^-1 Be` by dense complex LU.
    pub fn frequency_response(&self, omega: f64) -> Result<DMatrix<Complex<f64>>> {
        let n = self.states();
        let mut m = self.ae.map(|v| Complex::new(-v, 0.0));
        for i in 0..n {
            m[(i, i)] += Complex::new(0.0, omega);
        }
        let rhs = self.be.map(|v| Complex::new(v, 0.0));
        let x = m
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular(format!("jwI - Ae at w = {omega:e}")))?;
        Ok(self.ce.map(|v| Complex::new(v, 0.0)) * x)
    }
}

/// The observer error system for gain `l` and noise scalings `sigma`.
///
/// With no sensors, `l` and `sigma` must be empty and the result is the
/// open-loop map from `d` to `Cz x`.
pub fn build_error_system(
    model: &ThermalModel,
    sensors: &SensorSelection,
    l: &DMatrix<f64>,
    sigma: &DVector<f64>,
) -> Result<ErrorSystem> {
    let n = model.states();
    let ny = sensors.len();
    if sensors.states() != n {
        return Err(Error::dims(format!("sensor matrix has {} columns, model has {n} states", sensors.states())));
    }
    if l.shape() != (n, ny) {
        return Err(Error::dims(format!("gain is {:?}, expected ({n}, {ny})", l.shape())));
    }
    if sigma.len() != ny {
        return Err(Error::dims(format!("{} noise scalings for {ny} sensors", sigma.len())));
    }
    if sigma.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidParameter { name: "sigma", reason: "noise scalings must be positive".into() });
    }
    let ae = model.a() + l * sensors.cy();
    let k = model.bd().ncols();
    let mut be = DMatrix::zeros(n, k + ny);
    be.view_mut((0, 0), (n, k)).copy_from(model.bd());
    be.view_mut((0, k), (n, ny)).copy_from(&(l * DMatrix::from_diagonal(sigma)));
    ErrorSystem::new(ae, be, model.cz().clone())
}

/// Hurwitz test; returns the verdict and the spectral abscissa.
pub fn is_hurwitz(m: &DMatrix<f64>) -> (bool, f64) {
    let a = linalg::spectral_abscissa(m);
    (a < 0.0, a)
}

/// Result of [`hinf_norm`]. `lower` is attained by some frequency, `upper` is
/// certified by the Hamiltonian test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HinfNorm {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    /// Frequency [rad/s] at which `lower` is attained.
    pub peak_frequency: f64,
    pub bisections: usize,
}

/// Largest singular value of the frequency response at `omega`.
pub fn gain_at(sys: &ErrorSystem, omega: f64) -> Result<f64> {
    Ok(max_singular_value(&sys.frequency_response(omega)?))
}

fn max_singular_value(g: &DMatrix<Complex<f64>>) -> f64 {
    if g.is_empty() {
        return 0.0;
    }
    g.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Evaluates `G(jw)` repeatedly through a Hessenberg form of `Ae`, so each
/// frequency costs O(n^2) per input instead of a fresh factorisation.
struct FastResponse<'a> {
    sys: &'a ErrorSystem,
    h: DMatrix<f64>,
    qt_b: DMatrix<f64>,
    c_q: DMatrix<f64>,
}

impl<'a> FastResponse<'a> {
    fn new(sys: &'a ErrorSystem) -> Self {
        let (q, h) = sys.ae.clone().hessenberg().unpack();
        FastResponse { sys, qt_b: q.transpose() * &sys.be, c_q: &sys.ce * &q, h }
    }

    fn gain(&self, omega: f64) -> Result<f64> {
        let n = self.h.nrows();
        let mut m = self.h.map(|v| Complex::new(-v, 0.0));
        for i in 0..n {
            m[(i, i)] += Complex::new(0.0, omega);
        }
        let mut x = self.qt_b.map(|v| Complex::new(v, 0.0));
        if !solve_hessenberg(&mut m, &mut x) {
            // Fall back to the dense route.
            return gain_at(self.sys, omega);
        }
        Ok(max_singular_value(&(self.c_q.map(|v| Complex::new(v, 0.0)) * x)))
    }
}

/// Solves `m x = b` in place for upper Hessenberg `m` by Gaussian elimination
/// with partial pivoting between adjacent rows. Returns false when singular.
fn solve_hessenberg(m: &mut DMatrix<Complex<f64>>, b: &mut DMatrix<Complex<f64>>) -> bool {
    let n = m.nrows();
    let r = b.ncols();
    for k in 0..n.saturating_sub(1) {
        if m[(k + 1, k)].norm() > m[(k, k)].norm() {
            for j in k..n {
                m.swap((k, j), (k + 1, j));
            }
            for j in 0..r {
                b.swap((k, j), (k + 1, j));
            }
        }
        let pivot = m[(k, k)];
        if pivot.norm() == 0.0 {
            return false;
        }
        let f = m[(k + 1, k)] / pivot;
        if f.norm() != 0.0 {
            for j in k..n {
                let v = m[(k, j)];
                m[(k + 1, j)] -= f * v;
            }
            for j in 0..r {
                let v = b[(k, j)];
                b[(k + 1, j)] -= f * v;
            }
        }
    }
    for k in (0..n).rev() {
        let pivot = m[(k, k)];
        if pivot.norm() == 0.0 {
            return false;
        }
        for j in 0..r {
            let mut s = b[(k, j)];
            for i in k + 1..n {
                s -= m[(k, i)] * b[(i, j)];
            }
            b[(k, j)] = s / pivot;
        }
    }
    true
}

/// Frequencies `w >= 0` at which the Hamiltonian for level `gamma` has
/// eigenvalues on the imaginary axis. Empty means `||G|| < gamma`.
pub fn imaginary_axis_frequencies(sys: &ErrorSystem, gamma: f64) -> Vec<f64> {
    let n = sys.states();
    let a = &sys.ae;
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(&sys.be * sys.be.transpose() / gamma));
    h.view_mut((n, 0), (n, n)).copy_from(&(-(sys.ce.transpose() * &sys.ce) / gamma));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    let threshold = 1e-8 * h.norm();
    let mut freqs: Vec<f64> = linalg::eigenvalues(&h)
        .into_iter()
        .filter(|l| l.re.abs() <= threshold && l.im >= -threshold)
        .map(|l| l.im.abs())
        .collect();
    freqs.sort_by(f64::total_cmp);
    freqs.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
    freqs
}

fn log_grid(lo: f64, hi: f64, points: usize) -> impl Iterator<Item = f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..points).map(move |i| 10f64.powf(a + (b - a) * i as f64 / (points - 1) as f64))
}

/// H-infinity norm by bisection on the Hamiltonian imaginary-eigenvalue
/// test, to relative tolerance `tol`.
pub fn hinf_norm(sys: &ErrorSystem, tol: f64) -> Result<HinfNorm> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter { name: "tol", reason: format!("must be positive, got {tol}") });
    }
    let (stable, abscissa) = is_hurwitz(&sys.ae);
    if !stable {
        return Err(Error::NotHurwitz(abscissa));
    }
    if sys.inputs() == 0 || sys.outputs() == 0 || sys.be.amax() == 0.0 || sys.ce.amax() == 0.0 {
        return Ok(HinfNorm { value: 0.0, lower: 0.0, upper: 0.0, peak_frequency: 0.0, bisections: 0 });
    }

    let fast = FastResponse::new(sys);
    let mut lo = 0.0;
    let mut peak = 0.0;
    let probe = |w: f64, lo: &mut f64, peak: &mut f64| -> Result<()> {
        let g = fast.gain(w)?;
        if g > *lo {
            *lo = g;
            *peak = w;
        }
        Ok(())
    };

    // Lower bound from a sweep, the DC gain and the modal frequencies.
    probe(0.0, &mut lo, &mut peak)?;
    for w in log_grid(SWEEP_RANGE.0, SWEEP_RANGE.1, SWEEP_POINTS) {
        probe(w, &mut lo, &mut peak)?;
    }
    for l in linalg::eigenvalues(&sys.ae) {
        if l.im > 0.0 {
            probe(l.im, &mut lo, &mut peak)?;
        }
    }
    let mut top = SWEEP_RANGE.1;
    while peak >= top && top < 1e12 {
        for w in log_grid(top, top * 10.0, 20) {
            probe(w, &mut lo, &mut peak)?;
        }
        top *= 10.0;
    }
    if lo == 0.0 {
        return Ok(HinfNorm { value: 0.0, lower: 0.0, upper: 0.0, peak_frequency: 0.0, bisections: 0 });
    }

    // Raises the lower bound using the crossing frequencies at level `g`.
    let refine = |freqs: &[f64], lo: &mut f64, peak: &mut f64| -> Result<()> {
        for (i, &w) in freqs.iter().enumerate() {
            probe(w, lo, peak)?;
            if let Some(&next) = freqs.get(i + 1) {
                probe(0.5 * (w + next), lo, peak)?;
            }
        }
        Ok(())
    };

    let mut hi = 2.0 * lo;
    let mut doublings = 0;
    loop {
        let freqs = imaginary_axis_frequencies(sys, hi);
        if freqs.is_empty() {
            break;
        }
        refine(&freqs, &mut lo, &mut peak)?;
        hi = 2.0 * hi.max(lo);
        doublings += 1;
        if doublings > 60 {
            return Err(Error::Numerical("no finite upper bound on the H-infinity norm".into()));
        }
    }

    let mut bisections = 0;
    while hi / lo - 1.0 > tol {
        let mid = (lo * hi).sqrt();
        let freqs = imaginary_axis_frequencies(sys, mid);
        if freqs.is_empty() {
            hi = mid;
        } else {
            refine(&freqs, &mut lo, &mut peak)?;
            lo = lo.max(mid);
        }
        bisections += 1;
        if bisections > 500 {
            return Err(Error::Numerical("H-infinity bisection did not terminate".into()));
        }
    }
    Ok(HinfNorm { value: (lo * hi).sqrt(), lower: lo, upper: hi, peak_frequency: peak, bisections })
}

/// Largest singular value of the response at each frequency.
pub fn sweep(sys: &ErrorSystem, frequencies: &[f64]) -> Result<Vec<f64>> {
    let fast = FastResponse::new(sys);
    frequencies.iter().map(|&w| fast.gain(w)).collect()
}
