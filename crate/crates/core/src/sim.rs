//! Time-domain simulation of the observer error dynamics and the power
//! measures used to check the H-infinity bound.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hinf::ErrorSystem;
use crate::linalg;
use crate::model::{SensorSelection, ThermalModel};

/// Largest `|lambda| h` accepted for the fixed-step integrator. The RK4
/// stability region reaches about 2.78 on the negative real axis.
pub const STABILITY_LIMIT: f64 = 2.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseKind {
    Zero,
    /// Frequency in Hz, phase in radians.
    Sinusoid { frequency: f64, phase: f64 },
    /// Sum of sinusoids with random frequencies in `[low, high]` Hz and
    /// random phases.
    BandLimited { low: f64, high: f64, components: usize },
}

impl Default for NoiseKind {
    fn default() -> Self {
        NoiseKind::BandLimited { low: DEFAULT_BAND.0, high: DEFAULT_BAND.1, components: 64 }
    }
}

/// Band [Hz] of the default pseudo-random noise.
pub const DEFAULT_BAND: (f64, f64) = (0.01, 0.5);

/// Plant inputs: squared current and coolant inlet temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputProfile {
    pub current_squared: f64,
    pub inlet_temperature: f64,
}

impl Default for InputProfile {
    fn default() -> Self {
        InputProfile { current_squared: 100.0, inlet_temperature: 25.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub duration: f64,
    pub step: f64,
    pub initial_error: DVector<f64>,
    /// One entry per input channel of the error system (`d` first), or a
    /// single entry applied to every channel.
    pub noise: Vec<NoiseKind>,
    pub seed: u64,
    pub input: InputProfile,
}

impl SimConfig {
    pub fn new(initial_error: DVector<f64>) -> Self {
        SimConfig {
            duration: 3000.0,
            step: 0.1,
            initial_error,
            noise: vec![NoiseKind::default()],
            seed: 0,
            input: InputProfile::default(),
        }
    }

    pub fn with_noise(mut self, noise: NoiseKind) -> Self {
        self.noise = vec![noise];
        self
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.step + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidParameter { name: "step", reason: format!("must be positive, got {}", self.step) });
        }
        if !(self.duration >= self.step && self.duration.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "duration",
                reason: format!("must be at least one step, got {}", self.duration),
            });
        }
        for n in &self.noise {
            match *n {
                NoiseKind::Zero => {}
                NoiseKind::Sinusoid { frequency, phase } => {
                    if !(frequency > 0.0 && frequency.is_finite() && phase.is_finite()) {
                        return Err(Error::InvalidParameter { name: "noise", reason: "sinusoid needs a positive frequency".into() });
                    }
                }
                NoiseKind::BandLimited { low, high, components } => {
                    if !(low > 0.0 && high > low && high.is_finite() && components > 0) {
                        return Err(Error::InvalidParameter {
                            name: "noise",
                            reason: format!("band-limited noise needs 0 < low < high and components > 0, got [{low}, {high}], {components}"),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// A scalar noise signal defined for all t, scaled to unit power on the
/// simulation grid.
#[derive(Debug, Clone)]
struct Realization {
    /// (amplitude, angular frequency, phase)
    terms: Vec<(f64, f64, f64)>,
}

impl Realization {
    fn new(kind: &NoiseKind, rng: &mut ChaCha8Rng, step: f64, steps: usize) -> Self {
        use std::f64::consts::TAU;
        let terms = match *kind {
            NoiseKind::Zero => Vec::new(),
            NoiseKind::Sinusoid { frequency, phase } => vec![(2f64.sqrt(), TAU * frequency, phase)],
            NoiseKind::BandLimited { low, high, components } => (0..components)
                .map(|_| (1.0, TAU * rng.random_range(low..high), rng.random_range(0.0..TAU)))
                .collect(),
        };
        let mut r = Realization { terms };
        if !r.terms.is_empty() {
            // Unit power on the grid the integrator actually samples.
            let half = step / 2.0;
            let samples: Vec<f64> = (0..=2 * steps).map(|k| r.at(k as f64 * half)).collect();
            let p = signal_power(&samples, half).unwrap_or(0.0);
            if p > 0.0 {
                for t in &mut r.terms {
                    t.0 /= p;
                }
            }
        }
        r
    }

    fn at(&self, t: f64) -> f64 {
        self.terms.iter().map(|&(a, w, ph)| a * (w * t + ph).sin()).sum()
    }
}

#[derive(Debug, Clone)]
pub struct SimTrace {
    pub time: Vec<f64>,
    /// Error state per time step, one row per sample.
    pub errors: DMatrix<f64>,
    /// Performance output `Ce e`, one row per sample.
    pub outputs: DMatrix<f64>,
    /// Input realisation per sample, one row per sample.
    pub inputs: DMatrix<f64>,
    pub step: f64,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// First sample index of the trailing `fraction` of the run.
    pub fn tail_start(&self, fraction: f64) -> usize {
        let n = self.len();
        let k = ((1.0 - fraction.clamp(0.0, 1.0)) * (n - 1) as f64).round() as usize;
        k.min(n.saturating_sub(2))
    }

    /// Largest absolute error over the tail window.
    pub fn tail_max_abs(&self, fraction: f64) -> f64 {
        let k = self.tail_start(fraction);
        self.errors.rows(k, self.len() - k).amax()
    }

    /// Root-mean-square of the vector output over samples `from..`.
    pub fn output_power(&self, from: usize) -> f64 {
        vector_power(&self.outputs.rows(from, self.len() - from).into_owned(), self.step)
    }

    pub fn input_power(&self, from: usize) -> f64 {
        vector_power(&self.inputs.rows(from, self.len() - from).into_owned(), self.step)
    }
}

fn check_step(ae: &DMatrix<f64>, step: f64) -> Result<()> {
    let rho = linalg::eigenvalues(ae).iter().map(|l| l.norm()).fold(0.0, f64::max);
    if rho * step >= STABILITY_LIMIT {
        return Err(Error::UnstableStep { step, product: rho * step });
    }
    Ok(())
}

fn realizations(cfg: &SimConfig, channels: usize) -> Result<Vec<Realization>> {
    let kinds: Vec<&NoiseKind> = match cfg.noise.len() {
        1 => vec![&cfg.noise[0]; channels],
        n if n == channels => cfg.noise.iter().collect(),
        n => return Err(Error::dims(format!("{n} noise specifications for {channels} input channels"))),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(kinds.into_iter().map(|k| Realization::new(k, &mut rng, cfg.step, cfg.steps())).collect())
}

/// Integrates `e' = Ae e + Be w` with classical fourth-order Runge-Kutta.
pub fn simulate_error(sys: &ErrorSystem, cfg: &SimConfig) -> Result<SimTrace> {
    cfg.validate()?;
    let n = sys.states();
    if cfg.initial_error.len() != n {
        return Err(Error::dims(format!("initial error has {} entries, system has {n} states", cfg.initial_error.len())));
    }
    check_step(&sys.ae, cfg.step)?;
    let noise = realizations(cfg, sys.inputs())?;
    let w_at = |t: f64| DVector::from_iterator(noise.len(), noise.iter().map(|r| r.at(t)));

    let steps = cfg.steps();
    let h = cfg.step;
    let mut errors = DMatrix::zeros(steps + 1, n);
    let mut inputs = DMatrix::zeros(steps + 1, sys.inputs());
    let mut time = Vec::with_capacity(steps + 1);
    let mut e = cfg.initial_error.clone();
    let f = |e: &DVector<f64>, w: &DVector<f64>| &sys.ae * e + &sys.be * w;
    for k in 0..=steps {
        let t = k as f64 * h;
        let w0 = w_at(t);
        time.push(t);
        errors.row_mut(k).copy_from(&e.transpose());
        inputs.row_mut(k).copy_from(&w0.transpose());
        if k == steps {
            break;
        }
        let wm = w_at(t + h / 2.0);
        let w1 = w_at(t + h);
        let k1 = f(&e, &w0);
        let k2 = f(&(&e + &k1 * (h / 2.0)), &wm);
        let k3 = f(&(&e + &k2 * (h / 2.0)), &wm);
        let k4 = f(&(&e + &k3 * h), &w1);
        e += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if !e.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical(format!("simulation diverged at t = {t}")));
        }
    }
    let outputs = &errors * sys.ce.transpose();
    Ok(SimTrace { time, errors, outputs, inputs, step: h })
}

/// Plant and observer trajectories simulated side by side.
#[derive(Debug, Clone)]
pub struct EstimatorTrace {
    pub time: Vec<f64>,
    pub states: DMatrix<f64>,
    pub estimates: DMatrix<f64>,
}

impl EstimatorTrace {
    pub fn errors(&self) -> DMatrix<f64> {
        &self.states - &self.estimates
    }
}

/// Simulates the plant `x' = A x + Bu u + Bd d` and the observer
/// `xh' = A xh + Bu u - L (y - Cy xh)` with `y = Cy x + diag(sigma) n`, under
/// the configured input profile and noise (channel order `[d; n]`).
pub fn simulate_estimator(
    model: &ThermalModel,
    sensors: &SensorSelection,
    l: &DMatrix<f64>,
    sigma: &DVector<f64>,
    x0: &DVector<f64>,
    xhat0: &DVector<f64>,
    cfg: &SimConfig,
) -> Result<EstimatorTrace> {
    cfg.validate()?;
    let n = model.states();
    let ny = sensors.len();
    if x0.len() != n || xhat0.len() != n || l.shape() != (n, ny) || sigma.len() != ny {
        return Err(Error::dims("estimator simulation inputs do not match the model"));
    }
    let a = model.a();
    let cy = sensors.cy();
    let mut big = DMatrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(a);
    big.view_mut((n, 0), (n, n)).copy_from(&(-(l * cy)));
    big.view_mut((n, n), (n, n)).copy_from(&(a + l * cy));
    check_step(&big, cfg.step)?;
    let noise = realizations(cfg, 1 + ny)?;
    let u = DVector::from_vec(vec![cfg.input.current_squared, cfg.input.inlet_temperature]);
    let bu_u = model.bu() * u;
    let l_sigma = l * DMatrix::from_diagonal(sigma);
    let bd = model.bd().column(0).into_owned();

    let deriv = |z: &DVector<f64>, t: f64| -> DVector<f64> {
        let d = noise[0].at(t);
        let nv = DVector::from_iterator(ny, noise[1..].iter().map(|r| r.at(t)));
        let mut out = &big * z;
        let mut top = out.rows_mut(0, n);
        top += &bu_u + &bd * d;
        let mut bottom = out.rows_mut(n, n);
        bottom += &bu_u - &l_sigma * nv;
        out
    };

    let steps = cfg.steps();
    let h = cfg.step;
    let mut z = DVector::zeros(2 * n);
    z.rows_mut(0, n).copy_from(x0);
    z.rows_mut(n, n).copy_from(xhat0);
    let mut states = DMatrix::zeros(steps + 1, n);
    let mut estimates = DMatrix::zeros(steps + 1, n);
    let mut time = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = k as f64 * h;
        time.push(t);
        states.row_mut(k).copy_from(&z.rows(0, n).transpose());
        estimates.row_mut(k).copy_from(&z.rows(n, n).transpose());
        if k == steps {
            break;
        }
        let k1 = deriv(&z, t);
        let k2 = deriv(&(&z + &k1 * (h / 2.0)), t + h / 2.0);
        let k3 = deriv(&(&z + &k2 * (h / 2.0)), t + h / 2.0);
        let k4 = deriv(&(&z + &k3 * h), t + h);
        z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    Ok(EstimatorTrace { time, states, estimates })
}

/// Root-mean-square of uniformly sampled values, with the mean taken by the
/// trapezoid rule over the sampled interval.
pub fn signal_power(samples: &[f64], step: f64) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InvalidParameter { name: "samples", reason: "need at least two samples".into() });
    }
    if !(step > 0.0) {
        return Err(Error::InvalidParameter { name: "step", reason: format!("must be positive, got {step}") });
    }
    let n = samples.len();
    let inner: f64 = samples[1..n - 1].iter().map(|x| x * x).sum();
    let ends = 0.5 * (samples[0].powi(2) + samples[n - 1].powi(2));
    let span = (n - 1) as f64;
    Ok(((inner + ends) / span).sqrt())
}

/// Power of a vector signal (rows are samples): `sqrt(mean |x(t)|^2)`.
pub fn vector_power(rows: &DMatrix<f64>, step: f64) -> f64 {
    if rows.nrows() < 2 {
        return 0.0;
    }
    let sq: Vec<f64> = rows.row_iter().map(|r| r.norm()).collect();
    signal_power(&sq, step).unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    /// `pow(eps)` over the tail window.
    pub error_power: f64,
    /// `norm * pow(w)`.
    pub bound: f64,
    pub input_power: f64,
    pub norm: f64,
    /// Power bound holds with the sampling slack.
    pub holds: bool,
    /// The two halves of the tail window have similar power.
    pub stationary: bool,
}

/// Relative sampling slack allowed on the power bound.
pub const POWER_SLACK: f64 = 0.05;

/// Checks `pow(eps) <= norm * pow(w)` over the trailing `fraction` of the
/// trace. `w_power` defaults to the measured power of the recorded input.
pub fn error_bound_check(trace: &SimTrace, norm: f64, w_power: Option<f64>, fraction: f64) -> BoundReport {
    let start = trace.tail_start(fraction);
    let error_power = trace.output_power(start);
    let input_power = w_power.unwrap_or_else(|| trace.input_power(start));
    let bound = norm * input_power;
    let mid = start + (trace.len() - start) / 2;
    let first = vector_power(&trace.outputs.rows(start, mid - start + 1).into_owned(), trace.step);
    let second = trace.output_power(mid);
    let stationary = (first - second).abs() <= 0.1 * first.max(second) + 1e-9;
    BoundReport {
        error_power,
        bound,
        input_power,
        norm,
        holds: error_power <= bound * (1.0 + POWER_SLACK),
        stationary,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn scalar_system(a: f64) -> ErrorSystem {
        let m = |v| DMatrix::from_element(1, 1, v);
        ErrorSystem::new(m(-a), m(1.0), m(1.0)).unwrap()
    }

    #[test]
    fn constant_signal_power() {
        let p = signal_power(&[3.0; 50], 0.1).unwrap();
        assert!((p - 3.0).abs() < 1e-14);
        assert!(signal_power(&[1.0], 0.1).is_err());
        assert!(signal_power(&[], 0.1).is_err());
    }

    #[test]
    fn sine_power_over_whole_periods() {
        let h = 1e-3;
        let s: Vec<f64> = (0..=10_000).map(|k| (2.0 * PI * k as f64 * h).sin()).collect();
        let p = signal_power(&s, h).unwrap();
        assert!((p - 0.5f64.sqrt()).abs() < 1e-12, "{p}");
    }

    #[test]
    fn scaled_noise_has_scaled_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = Realization::new(&NoiseKind::default(), &mut rng, 0.1, 2000);
        let s: Vec<f64> = (0..=4000).map(|k| r.at(k as f64 * 0.05)).collect();
        assert!((signal_power(&s, 0.05).unwrap() - 1.0).abs() < 1e-12);
        let scaled: Vec<f64> = s.iter().map(|v| 0.22 * v).collect();
        assert!((signal_power(&scaled, 0.05).unwrap() - 0.22).abs() < 1e-12);
    }

    #[test]
    fn exponential_decay_matches_closed_form() {
        let sys = scalar_system(0.5);
        let mut cfg = SimConfig::new(DVector::from_element(1, 2.0)).with_noise(NoiseKind::Zero);
        cfg.duration = 10.0;
        let tr = simulate_error(&sys, &cfg).unwrap();
        assert_eq!(tr.len(), 101);
        let exact = 2.0 * (-0.5f64 * 10.0).exp();
        assert!((tr.errors[(100, 0)] - exact).abs() < 1e-8);
    }

    #[test]
    fn stiff_step_is_refused() {
        let sys = scalar_system(100.0);
        let cfg = SimConfig::new(DVector::from_element(1, 1.0));
        assert!(matches!(simulate_error(&sys, &cfg), Err(Error::UnstableStep { .. })));
    }

    #[test]
    fn trace_length_rule() {
        let mut cfg = SimConfig::new(DVector::zeros(1));
        cfg.duration = 1.05;
        cfg.step = 0.1;
        assert_eq!(cfg.steps(), 10);
        cfg.duration = 1.0;
        assert_eq!(cfg.steps(), 10);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SimConfig::new(DVector::zeros(1));
        cfg.step = 0.0;
        assert!(cfg.validate().is_err());
        let cfg = SimConfig::new(DVector::zeros(1)).with_noise(NoiseKind::BandLimited { low: 1.0, high: 0.5, components: 3 });
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_noise_bound_is_trivial() {
        let sys = scalar_system(1.0);
        let mut cfg = SimConfig::new(DVector::from_element(1, 1.0)).with_noise(NoiseKind::Zero);
        cfg.duration = 100.0;
        let tr = simulate_error(&sys, &cfg).unwrap();
        let r = error_bound_check(&tr, 1.0, Some(1.0), 0.5);
        assert!(r.holds);
        assert!(r.error_power < 1e-10);
    }
}
