use nalgebra::DMatrix;
use relaxbench::builder::{carleman, demo, triangular_target};
use relaxbench::validator::{
    check_petrowski, check_symmetrizer, recheck, validate_all, CheckKind, ParabolicSource, ParabolicityMode, SampleSet,
    StateBox,
};
use relaxbench::{SpatialGrid, Symmetrizer};

fn samples(dim: usize, state_box: StateBox) -> SampleSet {
    let grid = SpatialGrid::unit(dim, 32).unwrap();
    SampleSet::for_grid(&grid, state_box).unwrap()
}

#[test]
fn carleman_passes_everything_with_unit_dissipation() {
    let grid = SpatialGrid::unit(1, 32).unwrap();
    let d = demo("carleman", &grid).unwrap();
    let set = samples(1, d.state_box.clone());
    let report = validate_all(&d.system, d.target.as_ref(), None, &set).unwrap();
    assert!(report.passed(), "{}", report.to_csv());
    assert!(report.entries.len() >= 6);
    let lambda0 = report.entry(CheckKind::Dissipativity).unwrap().margin;
    assert!((lambda0 - 1.0).abs() < 1e-12);
}

#[test]
fn heat_demos_pass_everything() {
    for (name, dim) in [
        ("heat1d", 1),
        ("heat2d", 2),
        ("aniso2d", 2),
        ("quasilinear-bu2", 1),
        ("sqrt-heat", 1),
    ] {
        let grid = SpatialGrid::unit(dim, 32).unwrap();
        let d = demo(name, &grid).unwrap();
        let report = validate_all(&d.system, d.target.as_ref(), None, &samples(dim, d.state_box.clone())).unwrap();
        assert!(report.passed(), "{name}: {}", report.to_csv());
    }
}

#[test]
fn anisotropic_generator_certifies_smallest_weight_eigenvalue() {
    let grid = SpatialGrid::unit(2, 32).unwrap();
    let d = demo("aniso2d", &grid).unwrap();
    let e = check_petrowski(
        ParabolicSource::Limit(&d.system),
        &samples(2, d.state_box.clone()),
        ParabolicityMode::Petrowski,
    );
    let expected = 1.5 - 0.34f64.sqrt();
    assert!((e.margin - expected).abs() < 1e-3, "alpha0 = {}", e.margin);
    assert!((e.margin - 0.9169).abs() < 1e-4);
}

#[test]
fn null_limit_fails_only_the_conserved_block() {
    let grid = SpatialGrid::unit(1, 32).unwrap();
    let d = demo("null-limit", &grid).unwrap();
    let report = validate_all(&d.system, None, None, &samples(1, d.state_box.clone())).unwrap();
    assert_eq!(report.failing(), vec![CheckKind::ConservedBlock], "{}", report.to_csv());
    let entry = report.entry(CheckKind::ConservedBlock).unwrap();
    assert!(entry.note.as_deref().unwrap().contains("null"));
    assert!(report.to_csv().contains("conserved_block,false"));
}

#[test]
fn triangular_target_is_petrowski_but_not_strongly_parabolic() {
    let target = triangular_target();
    let set = samples(1, StateBox::symmetric(2, 1.0).unwrap());
    let p = check_petrowski(ParabolicSource::Target(&target), &set, ParabolicityMode::Petrowski);
    assert!(p.passed);
    assert!((p.margin - 1.0).abs() <= 1e-9);
    let s = check_petrowski(ParabolicSource::Target(&target), &set, ParabolicityMode::Strong);
    assert!(!s.passed);
    assert!(s.margin.abs() < 1e-12);
}

#[test]
fn doubled_relaxing_weight_breaks_symmetrization() {
    let grid = SpatialGrid::unit(1, 32).unwrap();
    let d = demo("heat1d", &grid).unwrap();
    let r = Symmetrizer::constant(DMatrix::identity(1, 1), DMatrix::identity(1, 1) * 2.0, 0.5);
    let e = check_symmetrizer(&d.system, &r, &samples(1, d.state_box.clone())).unwrap();
    assert!(!e.passed);
    let w = e.witness.unwrap();
    assert!(w.value > 0.0);
    let again = recheck(CheckKind::Symmetrizer, &d.system, None, Some(&r), &d.state_box, &w);
    assert_eq!(again, e.margin);
}

#[test]
fn symmetrizer_of_the_wrong_size_is_an_error() {
    let grid = SpatialGrid::unit(1, 32).unwrap();
    let d = demo("heat1d", &grid).unwrap();
    let r = Symmetrizer::identity(2, 1);
    assert!(check_symmetrizer(&d.system, &r, &samples(1, d.state_box.clone())).is_err());
}

#[test]
fn failing_witnesses_reproduce_their_margin() {
    let grid = SpatialGrid::unit(1, 32).unwrap();
    let d = demo("null-limit", &grid).unwrap();
    let report = validate_all(&d.system, None, None, &samples(1, d.state_box.clone())).unwrap();
    for entry in report.entries.iter().filter(|e| !e.passed) {
        let w = entry.witness.as_ref().expect("failing entries carry a witness");
        let slack = recheck(entry.kind, &d.system, None, None, &d.state_box, w);
        assert!(!entry.kind.passes(slack));
        assert_eq!(slack, entry.margin);
    }
}

#[test]
fn reports_are_deterministic() {
    let (_, _, sys) = carleman();
    let set = samples(1, StateBox::new(vec![0.5], vec![1.5]).unwrap());
    let a = validate_all(&sys, None, None, &set).unwrap().to_csv();
    let b = validate_all(&sys, None, None, &set).unwrap().to_csv();
    assert_eq!(a, b);
}

#[test]
fn csv_schema_is_stable() {
    let (_, _, sys) = carleman();
    let set = samples(1, StateBox::new(vec![0.5], vec![1.5]).unwrap());
    let csv = validate_all(&sys, None, None, &set).unwrap().to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("check,pass,margin,witness"));
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 4, "{line}");
        assert!(cols[1] == "true" || cols[1] == "false");
        cols[2].parse::<f64>().unwrap();
    }
}
