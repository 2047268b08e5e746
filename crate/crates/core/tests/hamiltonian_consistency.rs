use odmr_core::hamiltonian::{
    build_full_hamiltonian, effective_params, eigen_basis, hermiticity_defect, StateLabel,
};
use odmr_core::params::{default_constants, validate, NVParams};
use proptest::prelude::*;

fn at_field(bx: f64) -> NVParams {
    NVParams { bx, ..default_constants() }
}

#[test]
fn splitting_tracks_effective_strain_within_one_kilohertz() {
    for bx in [0.5e-3, 1e-3, 2e-3] {
        let p = at_field(bx);
        let basis = eigen_basis(&build_full_hamiltonian(&p).unwrap()).unwrap();
        let eff = effective_params(&p).unwrap();
        let diff = basis.bright_dark_splitting() - 2.0 * eff.ex;
        assert!(diff.abs() < 1e-3 * 1e6, "Bx = {bx}: off by {diff} Hz");
    }
}

#[test]
fn shifts_at_two_millitesla() {
    let p = at_field(2e-3);
    let eff = effective_params(&p).unwrap();
    assert!((eff.d - p.d - 1.639e6).abs() < 1e3);
    assert!((eff.ex - p.ex - 0.546e6).abs() < 1e3);
    let ratio = (eff.d - p.d) / (eff.ex - p.ex);
    assert!((ratio - 3.0).abs() < 1e-12);
}

#[test]
fn bright_state_stays_bright_at_one_millitesla() {
    let basis = eigen_basis(&build_full_hamiltonian(&at_field(1e-3)).unwrap()).unwrap();
    assert!(basis.overlap(StateLabel::Bright) > 0.99);
    assert!(basis.overlap(StateLabel::Dark) > 0.99);
}

#[test]
fn regime_checks() {
    assert!(validate(&default_constants()).unwrap().passed());
    let weak = NVParams { bx: 2e-3, ey: 1e3, ..default_constants() };
    assert!(validate(&weak).unwrap().passed());
    assert!(!validate(&at_field(0.2)).unwrap().passed());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hermitian_with_trace_two_d(bx in 0.0f64..5e-3, ey in 0.0f64..2e6, ex in 0.0f64..10e6) {
        let p = NVParams { bx, ey, ex, ..default_constants() };
        let h = build_full_hamiltonian(&p).unwrap();
        prop_assert!(hermiticity_defect(&h) == 0.0);
        let tr = h.trace();
        prop_assert!((tr.re - 2.0 * p.d).abs() < 1e-6);
        prop_assert!(tr.im.abs() < 1e-6);
        let basis = eigen_basis(&h).unwrap();
        let sum: f64 = basis.energies.iter().sum();
        prop_assert!((sum - 2.0 * p.d).abs() < 1e-4);
    }
}
