//! Cross-oracle and invariance properties over randomized inputs.

use proptest::prelude::*;

use bellsim::bell::{bell_factor, correlation, munro_correlation, MeasurementSetting};
use bellsim::experiments::standard_mixture;
use bellsim::fock::{fock_correlation, fock_simulate_scheme, tms_fock};
use bellsim::scheme::parse;

const TSIRELSON: f64 = 2.0 * std::f64::consts::SQRT_2;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Flipping either measured quadrature by pi flips the sign bin, hence
    /// the correlation.
    #[test]
    fn correlation_flips_under_pi_shift(
        lambda in 0.2f64..0.7,
        theta in 0.0f64..std::f64::consts::TAU,
        phi in 0.0f64..std::f64::consts::TAU,
    ) {
        let m = standard_mixture(lambda, 0.99, 1, 1.0, 1.0, 0.0, 0.0).unwrap();
        let e = correlation(&m, theta, phi).unwrap();
        let e_flip_a = correlation(&m, theta + std::f64::consts::PI, phi).unwrap();
        let e_flip_b = correlation(&m, theta, phi + std::f64::consts::PI).unwrap();
        prop_assert!((e + e_flip_a).abs() < 1e-8);
        prop_assert!((e + e_flip_b).abs() < 1e-8);
    }

    /// No angle quadruple on the conditioned state beats the Tsirelson bound.
    #[test]
    fn bell_factor_respects_tsirelson(
        lambda in 0.2f64..0.7,
        angles in prop::array::uniform4(0.0f64..std::f64::consts::TAU),
    ) {
        let m = standard_mixture(lambda, 0.99, 1, 1.0, 1.0, 0.0, 0.0).unwrap();
        let r = bell_factor(&m, MeasurementSetting::from_array(angles)).unwrap();
        prop_assert!(r.s.abs() <= TSIRELSON + 1e-9);
    }

    /// For photon-number-correlated states the closed-form correlation
    /// depends only on the angle sum and matches quadrature over the
    /// truncated number basis.
    #[test]
    fn munro_matches_fock_quadrature(
        lambda in 0.1f64..0.5,
        theta in 0.0f64..std::f64::consts::TAU,
        phi in 0.0f64..std::f64::consts::TAU,
    ) {
        let n_max = 20usize;
        let state = tms_fock(lambda, n_max).unwrap();
        let coeffs: Vec<f64> = (0..=n_max)
            .map(|n| (1.0 - lambda * lambda).sqrt() * lambda.powi(n as i32))
            .collect();
        let e_closed = munro_correlation(&coeffs, theta + phi).unwrap();
        let e_quad = fock_correlation(&state, theta, phi);
        prop_assert!((e_closed - e_quad).abs() < 1e-6,
            "closed {e_closed} vs quadrature {e_quad}");
    }
}

/// The dense number-basis simulation of the tapped scheme with lossy click
/// detectors reproduces the phase-space pipeline: preparation probability
/// and all four canonical correlations.
#[test]
fn fock_simulation_matches_pipeline_with_lossy_clicks() {
    let lambda = 0.3f64;
    let text = format!(
        "mode A B\n\
         TMS A B s={}\n\
         TAP A T=0.99 eta=0.7\n\
         TAP B T=0.99 eta=0.7\n\
         DETECT *\n\
         measure settings=canonical\n",
        lambda.atanh()
    );
    let ir = parse(&text).unwrap();
    let outcome = fock_simulate_scheme(&ir, 12).unwrap();
    let mixture = standard_mixture(lambda, 0.99, 1, 0.7, 1.0, 0.0, 0.0).unwrap();

    let p_rel =
        (outcome.probability - mixture.success_prob()).abs() / mixture.success_prob();
    assert!(p_rel < 1e-6, "probability mismatch: relative {p_rel:.2e}");

    let c = MeasurementSetting::canonical();
    let r_gauss = bell_factor(&mixture, c).unwrap();
    let r_fock = outcome.density.bell_factor(c, outcome.probability);
    for j in 0..2 {
        for k in 0..2 {
            let d = (r_gauss.e[j][k] - r_fock.e[j][k]).abs();
            assert!(d < 1e-6, "E[{j}][{k}] mismatch: {d:.2e}");
        }
    }
}
