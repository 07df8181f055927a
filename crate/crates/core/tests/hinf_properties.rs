mod common;

use cellsense::hinf::{self, ErrorSystem};
use cellsense::synthesis::{synthesize, SynthesisOutcome, SynthesisSettings, SynthesisSpec};
use cellsense::{CellParams, SensorSelection, ThermalModel};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-6;

/// A random system with `A` shifted left past its spectral abscissa.
fn random_stable(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize) -> ErrorSystem {
    let s = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let shift = s.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let a = s - DMatrix::identity(n, n) * (shift + rng.random_range(0.05..1.0));
    let b = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
    let c = DMatrix::from_fn(p, n, |_, _| rng.random_range(-1.0..1.0));
    ErrorSystem::new(a, b, c).unwrap()
}

fn case1_observer() -> (ThermalModel, SensorSelection, DMatrix<f64>, DVector<f64>) {
    let model = ThermalModel::build(&CellParams::default(), 10).unwrap();
    let sel = SensorSelection::new(&model, &[3]).unwrap();
    let r = match synthesize(&SynthesisSpec::new(&model, &sel, 1.0), &SynthesisSettings::default()).unwrap() {
        SynthesisOutcome::Optimal(r) => r,
        other => panic!("{other:?}"),
    };
    (model, sel, r.l.clone(), r.sigma.clone())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bisection_agrees_with_the_dense_sweep(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=8);
        let (m, p) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let sys = random_stable(&mut rng, n, m, p);
        let norm = hinf::hinf_norm(&sys, TOL).unwrap();
        let sweep = common::sweep_norm(&sys);
        prop_assert!((norm.value - sweep).abs() <= 2.0 * TOL * sweep, "bisection {} sweep {sweep}", norm.value);
        prop_assert!(sweep <= norm.upper * (1.0 + 1e-12));
    }

    #[test]
    fn scaling_the_input_matrix_scales_the_norm(seed in any::<u64>(), k in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_stable(&mut rng, 5, 2, 2);
        let scaled = ErrorSystem::new(sys.ae.clone(), &sys.be * k, sys.ce.clone()).unwrap();
        let a = hinf::hinf_norm(&sys, TOL).unwrap().value;
        let b = hinf::hinf_norm(&scaled, TOL).unwrap().value;
        prop_assert!((b - k * a).abs() <= 2.0 * TOL * k * a);
    }
}

#[test]
fn bisection_brackets_are_certified_by_the_hamiltonian() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..10 {
        let sys = random_stable(&mut rng, 6, 2, 2);
        let norm = hinf::hinf_norm(&sys, TOL).unwrap();
        assert!(norm.upper / norm.lower - 1.0 <= TOL);
        assert!(hinf::imaginary_axis_frequencies(&sys, norm.upper).is_empty());
        // Just below the attained gain the level set is nonempty.
        assert!(!hinf::imaginary_axis_frequencies(&sys, norm.lower * (1.0 - 1e-9)).is_empty());
    }
}

#[test]
fn open_loop_norm_is_the_dc_gain() {
    let model = ThermalModel::build(&CellParams::default(), 10).unwrap();
    let sel = SensorSelection::empty(&model);
    let sys = hinf::build_error_system(&model, &sel, &DMatrix::zeros(20, 0), &DVector::zeros(0)).unwrap();
    let norm = hinf::hinf_norm(&sys, TOL).unwrap();
    let expect = 10.0 * 20f64.sqrt();
    assert!((norm.value - expect).abs() <= 2.0 * TOL * expect, "{}", norm.value);
    assert!((common::sweep_norm(&sys) - norm.value).abs() <= 2.0 * TOL * expect);
}

#[test]
fn larger_sensor_noise_never_lowers_the_norm() {
    let (model, sel, l, sigma) = case1_observer();
    let mut last = 0.0;
    for f in [0.25, 0.5, 1.0, 2.0, 8.0] {
        let sys = hinf::build_error_system(&model, &sel, &l, &(&sigma * f)).unwrap();
        let v = hinf::hinf_norm(&sys, TOL).unwrap().value;
        assert!(v >= last * (1.0 - 2.0 * TOL), "factor {f}: {v} < {last}");
        last = v;
    }
}

#[test]
fn case1_observer_norm_matches_the_sweep() {
    let (model, sel, l, sigma) = case1_observer();
    let sys = hinf::build_error_system(&model, &sel, &l, &sigma).unwrap();
    let norm = hinf::hinf_norm(&sys, TOL).unwrap();
    let sweep = common::sweep_norm(&sys);
    assert!((norm.value - sweep).abs() <= 2.0 * TOL * sweep);
    assert!(norm.upper < 1.0 + 1e-6);
}
