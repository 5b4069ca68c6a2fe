use std::f64::consts::PI;

use cellhom::bloch::bloch_bands;
use cellhom::correctors::CorrectorSet;
use cellhom::effective::{dispersion_relation, EffectiveModel};
use cellhom::{build_medium, CellGrid, Material, Medium, MediumSpec, SolverConfig};

fn laminate() -> (Medium, EffectiveModel) {
    let spec = MediumSpec::laminate(
        0,
        vec![0.5, 0.5],
        vec![Material::isotropic(0.0, 1.0, 1.0), Material::isotropic(0.0, 3.0, 1.0)],
    );
    let medium = build_medium(&spec, CellGrid::new(2, 64).unwrap()).unwrap();
    let set = CorrectorSet::compute(&medium, &SolverConfig::default()).unwrap();
    let model = EffectiveModel::assemble(&medium, &set).unwrap();
    (medium, model)
}

#[test]
fn odd_tensors_vanish_on_symmetric_laminate() {
    let (_, model) = laminate();
    eprintln!("|F| = {:.3e}, |G| = {:.3e}", model.f5.max_abs(), model.g3.max_abs());
    assert!(model.f5.max_abs() <= 1e-8);
    assert!(model.g3.max_abs() <= 1e-8);
    assert!(model.d6.max_abs() > 1e-3);
}

/// `(w^2 - c2 k^2) / k^4` at two wave numbers, Richardson-extrapolated to `k = 0`.
fn quartic_coefficient(omega2: impl Fn(f64) -> f64, c2: f64) -> f64 {
    let (k1, k2) = (0.04 * 2.0 * PI, 0.02 * 2.0 * PI);
    let q = |k: f64| (omega2(k) - c2 * k * k) / k.powi(4);
    let (q1, q2) = (q(k1), q(k2));
    q2 + (q2 - q1) / ((k1 / k2).powi(2) - 1.0)
}

#[test]
fn shear_quartic_term_matches_bloch() {
    let (medium, model) = laminate();
    let c2 = model.cbar.get(0, 1, 0, 1) / model.rhobar;
    let from_model = quartic_coefficient(
        |k| dispersion_relation(&model, &[k, 0.0], 1.0).unwrap().omega2[0].re,
        c2,
    );
    let from_bloch = quartic_coefficient(|k| bloch_bands(&medium, &[k, 0.0], 1).unwrap().omega2[0], c2);
    eprintln!("quartic: model {from_model:.6e}, bloch {from_bloch:.6e}");
    assert!(from_bloch < 0.0);
    assert!((from_model - from_bloch).abs() <= 0.02 * from_bloch.abs());
}
