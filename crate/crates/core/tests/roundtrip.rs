use cellsense::config::RunConfig;
use cellsense::export;
use cellsense::placement;
use cellsense::synthesis::{synthesize, SynthesisSettings, SynthesisSpec};
use cellsense::{SensorSelection, ThermalModel};

#[test]
fn re_read_model_gives_bit_identical_placement() {
    let cfg = RunConfig::default().with_preset("case1").unwrap();
    let model = ThermalModel::build(&cfg.params, cfg.cells).unwrap();
    let dir = tempfile::tempdir().unwrap();
    export::write_model(dir.path(), &model, Some(&cfg.params)).unwrap();
    let back = export::read_model(dir.path()).unwrap();
    assert_eq!(back.a(), model.a());

    let settings = cfg.placement_settings(Some(1));
    let a = placement::greedy_select(&model, cfg.gamma, cfg.sensors, None, &settings, None).unwrap();
    let b = placement::greedy_select(&back, cfg.gamma, cfg.sensors, None, &settings, None).unwrap();
    assert_eq!(a.selection, b.selection);
    for (x, y) in a.iterations.iter().zip(&b.iterations) {
        assert_eq!(x.eliminated, y.eliminated);
        assert_eq!(x.cost.to_bits(), y.cost.to_bits());
        assert_eq!(x.p, y.p);
    }
    let (ra, rb) = (a.result.unwrap(), b.result.unwrap());
    assert_eq!(ra.l, rb.l);
}

#[test]
fn stored_observer_reloads_exactly() {
    let cfg = RunConfig::default().with_preset("case1").unwrap();
    let model = ThermalModel::build(&cfg.params, cfg.cells).unwrap();
    let sel = SensorSelection::new(&model, &[3]).unwrap();
    let r = synthesize(&SynthesisSpec::new(&model, &sel, 1.0), &SynthesisSettings::default()).unwrap();
    let r = r.optimal().unwrap();
    let dir = tempfile::tempdir().unwrap();
    export::write_synthesis(dir.path(), r).unwrap();
    let (bundle, l) = export::read_synthesis(dir.path()).unwrap();
    assert_eq!(l, r.l);
    assert_eq!(bundle.sigma_vector(), r.sigma);
    assert_eq!(bundle.cost.to_bits(), r.cost.to_bits());
    assert_eq!(export::read_matrix_csv(&dir.path().join("X.csv")).unwrap(), r.x);
}
