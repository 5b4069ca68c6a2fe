use std::f64::consts::PI;

use cellhom::bloch::{log_spaced, model_error_slopes, BlochConfig, SlopeSummary};
use cellhom::correctors::CorrectorSet;
use cellhom::effective::EffectiveModel;
use cellhom::{build_medium, CellGrid, Material, MediumSpec, SolverConfig, TrigField};

fn sweep(spec: &MediumSpec, dir: &[f64]) -> SlopeSummary {
    let grid = CellGrid::new(2, 64).unwrap();
    let medium = build_medium(spec, grid).unwrap();
    let set = CorrectorSet::compute(&medium, &SolverConfig::default()).unwrap();
    let model = EffectiveModel::assemble(&medium, &set).unwrap();
    let ks = log_spaced(0.02 * 2.0 * PI, 0.2 * 2.0 * PI, 10);
    let s = model_error_slopes(&medium, &model, dir, &ks, BlochConfig::default()).unwrap();
    for r in &s.table {
        eprintln!(
            "k={:.4} b={} bloch={:.10e} e0={:.3e} e2={:.3e} ov={:.3}",
            r.k, r.branch, r.omega2_bloch, r.err0, r.err2, r.overlap
        );
    }
    eprintln!("{:?}", s.branches);
    s
}

fn check(s: &SlopeSummary) {
    let s0 = s.slope0.expect("slope0 defined");
    let s2 = s.slope2.expect("slope2 defined");
    assert!(s0 >= 1.9, "slope0 {s0}");
    assert!(s2 >= s0 + 1.5, "slope2 {s2} vs slope0 {s0}");
    let (e0, e2) = s.errors_near(0.1 * 2.0 * PI);
    assert!(e2 * 10.0 <= e0, "errors at 0.1: {e0:e} {e2:e}");
}

#[test]
fn laminate_along_layering_axis() {
    let spec = MediumSpec::laminate(
        0,
        vec![0.5, 0.5],
        vec![Material::isotropic(0.0, 1.0, 1.0), Material::isotropic(0.0, 3.0, 1.0)],
    );
    check(&sweep(&spec, &[1.0, 0.0]));
}

#[test]
fn smooth_medium_oblique() {
    let spec = MediumSpec::smooth(
        TrigField::constant(1.0).with_term(0.4, &[1, 1], 0.5),
        TrigField::constant(2.0).with_term(0.8, &[1, 0], 0.0).with_term(0.5, &[0, 1], 1.0),
        TrigField::constant(1.0).with_term(0.3, &[1, 0], 0.2),
    );
    check(&sweep(&spec, &[0.6, 0.8]));
}
