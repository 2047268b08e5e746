use num_complex::Complex64;
use odmr_core::oracle::{integrate_to_steady_with, OracleOptions};
use odmr_core::response::{steady_amplitudes, TwoModeModel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_model(rng: &mut ChaCha8Rng) -> TwoModeModel {
    TwoModeModel {
        omega_b: rng.random_range(-8e6..8e6),
        omega_d: rng.random_range(-8e6..8e6),
        j: rng.random_range(0.0..3e6),
        lambda_b: rng.random_range(0.01e6..0.5e6),
        gamma_b: rng.random_range(0.5e6..3e6),
        gamma_d: rng.random_range(0.5e6..3e6),
    }
}

fn tight(m: &TwoModeModel) -> OracleOptions {
    OracleOptions {
        t_max: 400.0 / m.gamma_b.min(m.gamma_d),
        tol: 1e-12,
        rtol: 1e-12,
    }
}

fn rel_err(a: &odmr_core::SteadyAmplitudes, b: &odmr_core::SteadyAmplitudes) -> f64 {
    let scale = (b.b.norm_sqr() + b.d.norm_sqr()).sqrt();
    ((a.b - b.b).norm_sqr() + (a.d - b.d).norm_sqr()).sqrt() / scale
}

#[test]
fn hundred_seeded_sets_agree_with_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(20240607);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let m = random_model(&mut rng);
        let exact = steady_amplitudes(&m).unwrap();
        let ode = integrate_to_steady_with(&m, &tight(&m)).unwrap();
        worst = worst.max(rel_err(&ode, &exact));
    }
    assert!(worst < 1e-9, "worst relative deviation {worst:e}");
}

#[test]
fn closed_form_zeroes_the_equations_of_motion() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let m = random_model(&mut rng);
        let s = steady_amplitudes(&m).unwrap();
        let (db, dd) = m.rhs(s.b, s.d);
        let residual = (db.norm_sqr() + dd.norm_sqr()).sqrt();
        assert!(residual < 1e-12 * m.lambda_b, "residual {residual:e} for {m:?}");
    }
}

#[test]
fn resonant_example_population() {
    let m = TwoModeModel {
        omega_b: 0.0,
        omega_d: 0.0,
        j: 1e6,
        lambda_b: 0.2e6,
        gamma_b: 2e6,
        gamma_d: 2e6,
    };
    let s = steady_amplitudes(&m).unwrap();
    assert!((s.population() - 0.008).abs() < 1e-15);
    assert!((s.p0 - 0.992).abs() < 1e-15);
    let ode = integrate_to_steady_with(&m, &tight(&m)).unwrap();
    assert!((ode.p0 - s.p0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn amplitudes_are_linear_in_probe(
        wb in -5e6f64..5e6, wd in -5e6f64..5e6, j in 0.0f64..2e6,
        lambda in 1e4f64..3e5, g in 0.5e6f64..3e6, k in 0.1f64..4.0,
    ) {
        let m = TwoModeModel { omega_b: wb, omega_d: wd, j, lambda_b: lambda, gamma_b: g, gamma_d: g };
        let scaled = TwoModeModel { lambda_b: k * lambda, ..m };
        let a = steady_amplitudes(&m).unwrap();
        let b = steady_amplitudes(&scaled).unwrap();
        let diff: Complex64 = b.b - a.b * k;
        prop_assert!(diff.norm() <= 1e-12 * b.b.norm().max(1e-300));
        prop_assert!((b.population() - k * k * a.population()).abs() <= 1e-12 * b.population());
    }
}
