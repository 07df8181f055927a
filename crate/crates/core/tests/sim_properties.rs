use cellsense::hinf::{self, ErrorSystem};
use cellsense::sim::{self, NoiseKind, SimConfig};
use cellsense::synthesis::{synthesize, SynthesisOutcome, SynthesisResult, SynthesisSettings, SynthesisSpec};
use cellsense::{CellParams, SensorSelection, ThermalModel};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

struct Case1 {
    model: ThermalModel,
    sel: SensorSelection,
    obs: SynthesisResult,
}

fn case1() -> Case1 {
    let model = ThermalModel::build(&CellParams::default(), 10).unwrap();
    let sel = SensorSelection::new(&model, &[3]).unwrap();
    let obs = match synthesize(&SynthesisSpec::new(&model, &sel, 1.0), &SynthesisSettings::default()).unwrap() {
        SynthesisOutcome::Optimal(r) => *r,
        other => panic!("{other:?}"),
    };
    Case1 { model, sel, obs }
}

fn error_system(c: &Case1) -> ErrorSystem {
    hinf::build_error_system(&c.model, &c.sel, &c.obs.l, &c.obs.sigma).unwrap()
}

fn short(e0: DVector<f64>, noise: NoiseKind, step: f64) -> SimConfig {
    SimConfig { duration: 200.0, step, ..SimConfig::new(e0).with_noise(noise) }
}

fn band() -> NoiseKind {
    NoiseKind::BandLimited { low: 0.01, high: 0.5, components: 32 }
}

#[test]
fn doubling_the_initial_error_doubles_the_trace() {
    let c = case1();
    let sys = error_system(&c);
    let e0 = DVector::from_fn(20, |i, _| 1.0 + i as f64 * 0.3);
    let a = sim::simulate_error(&sys, &short(e0.clone(), NoiseKind::Zero, 0.1)).unwrap();
    let b = sim::simulate_error(&sys, &short(e0 * 2.0, NoiseKind::Zero, 0.1)).unwrap();
    assert!((b.errors - a.errors * 2.0).amax() <= 1e-12 * 20.0);
}

#[test]
fn responses_superpose() {
    let c = case1();
    let sys = error_system(&c);
    let e0 = DVector::from_element(20, 10.0);
    let both = sim::simulate_error(&sys, &short(e0.clone(), band(), 0.1)).unwrap();
    let free = sim::simulate_error(&sys, &short(e0, NoiseKind::Zero, 0.1)).unwrap();
    let forced = sim::simulate_error(&sys, &short(DVector::zeros(20), band(), 0.1)).unwrap();
    assert!((both.errors - (free.errors + forced.errors)).amax() <= 1e-10);
}

#[test]
fn integrator_is_fourth_order() {
    let c = case1();
    let sys = error_system(&c);
    let e0 = DVector::from_element(20, 10.0);
    let noise = NoiseKind::Sinusoid { frequency: 0.05, phase: 0.3 };
    let end = |h: f64| {
        let t = sim::simulate_error(&sys, &short(e0.clone(), noise.clone(), h)).unwrap();
        t.errors.row(t.len() - 1).transpose()
    };
    let reference = end(0.025);
    let coarse = (end(0.4) - &reference).norm();
    let fine = (end(0.2) - &reference).norm();
    let ratio = coarse / fine;
    assert!((10.0..24.0).contains(&ratio), "error ratio {ratio} ({coarse:e} / {fine:e})");
}

#[test]
fn default_step_is_converged() {
    let c = case1();
    let sys = error_system(&c);
    let e0 = DVector::from_element(20, 10.0);
    let run = |h| {
        let t = sim::simulate_error(&sys, &short(e0.clone(), band(), h)).unwrap();
        t.errors.row(t.len() - 1).transpose()
    };
    let full = run(0.1);
    let half = run(0.05);
    assert!((&full - &half).norm() <= 1e-3 * half.norm());
}

#[test]
fn zero_noise_matches_the_matrix_exponential() {
    let c = case1();
    let sys = error_system(&c);
    let e0 = DVector::from_fn(20, |i, _| 10.0 - i as f64 * 0.5);
    let t = sim::simulate_error(&sys, &short(e0.clone(), NoiseKind::Zero, 0.1)).unwrap();
    let exact = (&sys.ae * 200.0).exp() * &e0;
    let got = t.errors.row(t.len() - 1).transpose();
    assert!((&got - &exact).amax() <= 1e-8 * e0.amax(), "{:e}", (&got - &exact).amax());
}

#[test]
fn plant_and_observer_reproduce_the_error_system() {
    let c = case1();
    let sys = error_system(&c);
    let x0 = DVector::from_element(20, 35.0);
    let xhat0 = DVector::from_element(20, 25.0);
    let cfg = short(&x0 - &xhat0, band(), 0.1);
    let est = sim::simulate_estimator(&c.model, &c.sel, &c.obs.l, &c.obs.sigma, &x0, &xhat0, &cfg).unwrap();
    let err = sim::simulate_error(&sys, &cfg).unwrap();
    let diff = (est.errors() - &err.errors).amax();
    assert!(diff <= 1e-9, "{diff:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn noise_realisations_have_unit_power(seed in any::<u64>(), lo in 0.001f64..0.2, width in 0.05f64..1.0) {
        let sys = ErrorSystem::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        ).unwrap();
        let noise = NoiseKind::BandLimited { low: lo, high: lo + width, components: 16 };
        let cfg = SimConfig { seed, duration: 500.0, ..SimConfig::new(DVector::zeros(1)).with_noise(noise) };
        let t = sim::simulate_error(&sys, &cfg).unwrap();
        let w: Vec<f64> = t.inputs.column(0).iter().copied().collect();
        let p = sim::signal_power(&w, t.step).unwrap();
        prop_assert!((p - 1.0).abs() <= 0.01, "power {p}");
    }
}

#[test]
fn power_bound_holds_for_synthesised_observers() {
    let model = ThermalModel::build(&CellParams::default(), 6).unwrap();
    for (cells, gamma) in [(vec![2], 1.0), (vec![1, 5], 0.8), (vec![3, 4, 6], 2.0)] {
        let sel = SensorSelection::new(&model, &cells).unwrap();
        let r = match synthesize(&SynthesisSpec::new(&model, &sel, gamma), &SynthesisSettings::default()).unwrap() {
            SynthesisOutcome::Optimal(r) => r,
            other => panic!("{other:?}"),
        };
        let sys = hinf::build_error_system(&model, &sel, &r.l, &r.sigma).unwrap();
        let cfg = SimConfig::new(DVector::from_element(12, 10.0));
        let t = sim::simulate_error(&sys, &cfg).unwrap();
        let rep = sim::error_bound_check(&t, gamma, None, 0.5);
        assert!(rep.holds, "{cells:?}: {rep:?}");
        assert!(rep.stationary, "{cells:?}: {rep:?}");
    }
}

#[test]
fn open_loop_errors_decay_slowly() {
    let model = ThermalModel::build(&CellParams::default(), 10).unwrap();
    let sel = SensorSelection::empty(&model);
    let sys = hinf::build_error_system(&model, &sel, &DMatrix::zeros(20, 0), &DVector::zeros(0)).unwrap();
    let cfg = SimConfig::new(DVector::from_element(20, 10.0)).with_noise(NoiseKind::Zero);
    let open = sim::simulate_error(&sys, &cfg).unwrap();
    let c = case1();
    let closed = sim::simulate_error(&error_system(&c), &cfg).unwrap();
    let k = open.len() / 3;
    assert!(open.errors.row(k).amax() > 10.0 * closed.errors.row(k).amax());
}
