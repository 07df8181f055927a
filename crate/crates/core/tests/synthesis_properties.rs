mod common;

use cellsense::hinf;
use cellsense::sdp::{self, LmiPoint, SdpSettings};
use cellsense::synthesis::{
    assemble_lmi, synthesize, SynthesisOutcome, SynthesisResult, SynthesisSettings, SynthesisSpec, VERIFICATION_SLACK,
};
use cellsense::{CellParams, SensorSelection, ThermalModel};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn optimal(spec: &SynthesisSpec<'_>) -> SynthesisResult {
    match synthesize(spec, &SynthesisSettings::default()).unwrap() {
        SynthesisOutcome::Optimal(r) => *r,
        other => panic!("expected an optimum, got {other:?}"),
    }
}

/// The three independent checks every optimum must pass.
fn check_triplet(spec: &SynthesisSpec<'_>, r: &SynthesisResult) {
    let problem = assemble_lmi(spec).unwrap();
    let point = LmiPoint { p: r.p.clone(), x: r.x.clone(), y: r.y.clone() };
    let cert = sdp::check_feasible(&problem, &point).unwrap();
    assert!(cert.strictly_feasible(), "{cert:?}");
    let closed = spec.model.a() + &r.l * spec.sensors.cy();
    assert!(closed.complex_eigenvalues().iter().all(|z| z.re < 0.0));
    let sys = hinf::build_error_system(spec.model, spec.sensors, &r.l, &r.sigma).unwrap();
    let norm = common::sweep_norm(&sys);
    assert!(norm < spec.gamma + VERIFICATION_SLACK, "sweep norm {norm} against gamma {}", spec.gamma);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn every_optimum_passes_the_independent_checks(seed in any::<u64>(), gi in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells = rng.random_range(2..=12);
        let params = common::random_params(&mut rng);
        let model = ThermalModel::build(&params, cells).unwrap();
        let k = rng.random_range(1..=cells.min(3));
        let chosen: Vec<usize> = sample(&mut rng, cells, k).iter().map(|i| i + 1).collect();
        let sel = SensorSelection::new(&model, &chosen).unwrap();
        let gamma = [0.5, 1.0, 2.0, 5.0][gi];
        let spec = SynthesisSpec::new(&model, &sel, gamma);
        if let SynthesisOutcome::Optimal(r) = synthesize(&spec, &SynthesisSettings::default()).unwrap() {
            check_triplet(&spec, &r);
        }
    }
}

#[test]
fn scaling_the_weights_keeps_the_argmin() {
    let model = ThermalModel::build(&CellParams::default(), 8).unwrap();
    let sel = SensorSelection::new(&model, &[2, 5, 8]).unwrap();
    let w = DVector::from_vec(vec![1.0, 2.0, 0.5]);
    let base = optimal(&SynthesisSpec::new(&model, &sel, 1.0).with_weights(w.clone()));
    for c in [0.1, 3.0, 40.0] {
        let scaled = optimal(&SynthesisSpec::new(&model, &sel, 1.0).with_weights(&w * c));
        assert!((scaled.cost - c * base.cost).abs() <= 1e-5 * c * base.cost);
        let dp = (&scaled.p - &base.p).amax() / base.p.amax();
        assert!(dp <= 1e-3, "p moved by {dp:e}: {} vs {}", scaled.p, base.p);
    }
}

#[test]
fn unit_weights_equal_the_plain_sum() {
    let model = ThermalModel::build(&CellParams::default(), 6).unwrap();
    let sel = SensorSelection::new(&model, &[1, 4]).unwrap();
    let plain = optimal(&SynthesisSpec::new(&model, &sel, 1.0));
    let unit = optimal(&SynthesisSpec::new(&model, &sel, 1.0).with_weights(DVector::from_element(2, 1.0)));
    assert_eq!(plain.cost, unit.cost);
    assert!((plain.cost - plain.p.sum()).abs() <= 1e-12 * plain.cost);
}

#[test]
fn larger_gamma_never_costs_more() {
    let model = ThermalModel::build(&CellParams::default(), 10).unwrap();
    let sel = SensorSelection::new(&model, &[3, 9]).unwrap();
    let mut last = f64::INFINITY;
    for gamma in [0.6, 0.8, 1.0, 1.5, 2.0, 4.0, 10.0] {
        let r = optimal(&SynthesisSpec::new(&model, &sel, gamma));
        assert!(r.cost <= last * (1.0 + 1e-6), "gamma {gamma}: {} after {last}", r.cost);
        last = r.cost;
    }
}

#[test]
fn very_loose_gamma_drives_precision_to_the_floor() {
    // The open-loop norm is about 44.7, so gamma = 1e6 needs no sensing.
    let model = ThermalModel::build(&CellParams::default(), 10).unwrap();
    let sel = SensorSelection::new(&model, &[2, 6]).unwrap();
    let r = optimal(&SynthesisSpec::new(&model, &sel, 1e6));
    let s = SdpSettings::default();
    let floor = s.p_floor.max(2.0 * s.margin_feas / 1e6);
    assert!(r.cost <= 2.0 * floor * 1.5 + 1e-9, "cost {}", r.cost);
}

#[test]
fn case1_single_sensor_matches_the_dc_bound() {
    // With G(0) = Sd * 1 the frequency-zero constraint alone forces
    // p >= (|Cz g(0)|^2 / gamma^2 - 1) / Sd^2 = (20 * 100 - 1) / 100.
    let model = ThermalModel::build(&CellParams::default(), 10).unwrap();
    let sel = SensorSelection::new(&model, &[3]).unwrap();
    let spec = SynthesisSpec::new(&model, &sel, 1.0);
    let r = optimal(&spec);
    assert!((r.cost - 19.99).abs() < 1e-5, "{}", r.cost);
    assert!((r.sigma[0] - 19.99f64.powf(-0.5)).abs() < 1e-6);
    check_triplet(&spec, &r);
}
