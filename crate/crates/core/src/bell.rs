//! Sign-binned correlation coefficients and the Bell-CHSH factor, via the
//! analytic orthant formula for signed Gaussian mixtures and via the
//! photon-number-correlated pure-state formula.

use crate::conditioning::{measured_marginal, SignedGaussianMixture};
use crate::error::{Error, Result};

/// Magnitude cap for the arctan argument near the degenerate `c^2 -> ab`
/// limit; keeps the orthant probability continuous.
const ATAN_CLAMP: f64 = 1e15;

/// Hard truncation cap for pure-state coefficient sequences.
pub const MAX_FOCK_ORDER: usize = 60;

/// The two homodyne phase choices per side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementSetting {
    pub theta1: f64,
    pub theta2: f64,
    pub phi1: f64,
    pub phi2: f64,
}

impl MeasurementSetting {
    /// The optimal choice for photon-number-correlated states:
    /// `(0, pi/2, -pi/4, pi/4)`.
    pub fn canonical() -> Self {
        MeasurementSetting {
            theta1: 0.0,
            theta2: std::f64::consts::FRAC_PI_2,
            phi1: -std::f64::consts::FRAC_PI_4,
            phi2: std::f64::consts::FRAC_PI_4,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.theta1, self.theta2, self.phi1, self.phi2]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        MeasurementSetting {
            theta1: a[0],
            theta2: a[1],
            phi1: a[2],
            phi2: a[3],
        }
    }
}

impl Default for MeasurementSetting {
    fn default() -> Self {
        Self::canonical()
    }
}

/// Correlation matrix, Bell factor and preparation probability for one
/// choice of settings.
#[derive(Debug, Clone, PartialEq)]
pub struct BellResult {
    /// `e[j][k]` is the correlation for Alice's setting `j`, Bob's `k`.
    pub e: [[f64; 2]; 2],
    pub s: f64,
    pub success_prob: f64,
    pub settings: MeasurementSetting,
}

impl BellResult {
    pub fn new(e: [[f64; 2]; 2], success_prob: f64, settings: MeasurementSetting) -> Self {
        let s = e[0][0] + e[0][1] + e[1][0] - e[1][1];
        BellResult {
            e,
            s,
            success_prob,
            settings,
        }
    }
}

/// Quadrant integral of `exp(-a x^2 - b y^2 - 2 c x y)` over `x, y >= 0`:
/// `[pi/2 - arctan(c / sqrt(ab - c^2))] / (2 sqrt(ab - c^2))`.
pub fn orthant_integral(a: f64, b: f64, c: f64) -> Result<f64> {
    let d = a * b - c * c;
    if a <= 0.0 || b <= 0.0 || d <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "orthant exponent not positive definite (a={a}, b={b}, c={c})"
        )));
    }
    let sq = d.sqrt();
    let arg = (c / sq).clamp(-ATAN_CLAMP, ATAN_CLAMP);
    Ok((std::f64::consts::FRAC_PI_2 - arg.atan()) / (2.0 * sq))
}

/// Sign-binned correlation of the two measured quadratures:
/// `E = 4 sum_j w_j G_j - 1` over the marginal mixture terms.
pub fn correlation(mixture: &SignedGaussianMixture, theta: f64, phi: f64) -> Result<f64> {
    let marg = measured_marginal(mixture, theta, phi, (0, 1))?;
    let mut acc = 0.0;
    for t in &marg.terms {
        let g = &t.gamma2;
        acc += t.weight * orthant_integral(g[(0, 0)], g[(1, 1)], g[(0, 1)])?;
    }
    let e = 4.0 * acc - 1.0;
    // a binned correlation must lie in [-1, 1]; anything beyond rounding
    // noise signals catastrophic cancellation in the mixture weights
    if e.abs() > 1.0 + 1e-6 {
        return Err(Error::NumericalFailure(format!(
            "correlation {e} outside [-1, 1]; mixture weights cancel"
        )));
    }
    Ok(e.clamp(-1.0, 1.0))
}

/// Assemble the four correlations and the Bell-CHSH factor
/// `S = E11 + E12 + E21 - E22`.
pub fn bell_factor(
    mixture: &SignedGaussianMixture,
    settings: MeasurementSetting,
) -> Result<BellResult> {
    let thetas = [settings.theta1, settings.theta2];
    let phis = [settings.phi1, settings.phi2];
    let mut e = [[0.0; 2]; 2];
    for (j, &th) in thetas.iter().enumerate() {
        for (k, &ph) in phis.iter().enumerate() {
            e[j][k] = correlation(mixture, th, ph)?;
        }
    }
    Ok(BellResult::new(e, mixture.success_prob(), settings))
}

/// Reciprocal gamma function `1/Gamma(x)` as an entire function: exact zeros
/// at the poles of `Gamma` (nonpositive integers).
pub fn recip_gamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.round() {
        return 0.0;
    }
    if x >= 0.5 {
        (-statrs::function::gamma::ln_gamma(x)).exp()
    } else {
        // reflection: 1/Gamma(x) = sin(pi x) Gamma(1 - x) / pi
        (std::f64::consts::PI * x).sin() * statrs::function::gamma::ln_gamma(1.0 - x).exp()
            / std::f64::consts::PI
    }
}

fn check_normalized(coeffs: &[f64]) -> Result<()> {
    let norm2: f64 = coeffs.iter().map(|c| c * c).sum();
    if (norm2 - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "coefficients not normalized (sum of squares {norm2})"
        )));
    }
    Ok(())
}

/// Correlation `E(phi)` for a photon-number-correlated pure state
/// `sum_n c_n |n, n>` measured at angle sum `phi = theta + phi_B`.
pub fn munro_correlation(coeffs: &[f64], phi: f64) -> Result<f64> {
    check_normalized(coeffs)?;
    let n_max = coeffs.len().saturating_sub(1);
    // ln n! table
    let mut ln_fact = vec![0.0f64; n_max + 1];
    for n in 1..=n_max {
        ln_fact[n] = ln_fact[n - 1] + (n as f64).ln();
    }
    let mut total = 0.0;
    for n in 1..=n_max {
        for m in 0..n {
            // F(n, m) - F(m, n): at most one of the two is nonzero
            let f1 = recip_gamma((1.0 - n as f64) / 2.0) * recip_gamma(-(m as f64) / 2.0);
            let f2 = recip_gamma((1.0 - m as f64) / 2.0) * recip_gamma(-(n as f64) / 2.0);
            let df = f1 - f2;
            if df == 0.0 {
                continue;
            }
            let ln_mag = ((n + m) as f64) * std::f64::consts::LN_2 - ln_fact[n] - ln_fact[m];
            let term = 8.0 * std::f64::consts::PI * ln_mag.exp() / ((n - m) * (n - m)) as f64
                * coeffs[n]
                * coeffs[m]
                * df
                * df
                * (((n - m) as f64) * phi).cos();
            total += term;
        }
    }
    Ok(total)
}

/// Bell factor for the pure-state path; `E(theta_j, phi_k)` depends only on
/// the angle sum for photon-number-correlated states.
pub fn munro_bell_factor(
    coeffs: &[f64],
    settings: MeasurementSetting,
    success_prob: f64,
) -> Result<BellResult> {
    let thetas = [settings.theta1, settings.theta2];
    let phis = [settings.phi1, settings.phi2];
    let mut e = [[0.0; 2]; 2];
    for (j, &th) in thetas.iter().enumerate() {
        for (k, &ph) in phis.iter().enumerate() {
            e[j][k] = munro_correlation(coeffs, th + ph)?;
        }
    }
    Ok(BellResult::new(e, success_prob, settings))
}

/// Photons subtracted from each arm in the idealized pure-state model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubtractionOrder {
    /// one photon per arm: coefficients proportional to `(n+1) (T lambda)^n`
    One,
    /// two photons per arm: proportional to `(n+1)(n+2) (T^2 lambda)^n`
    Two,
}

/// Idealized photon-number-resolving model: normalized Fock coefficients of
/// the conditionally prepared state plus its preparation probability.
///
/// Truncation is adaptive: the sum stops once the tail bound on the
/// remaining coefficient mass drops below 1e-14 (hard cap at
/// [`MAX_FOCK_ORDER`]).
pub fn pure_state_model(
    order: SubtractionOrder,
    t: f64,
    lambda: f64,
) -> Result<(Vec<f64>, f64)> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "transmittance {t} outside (0, 1]"
        )));
    }
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!(
            "squeezing parameter {lambda} outside [0, 1)"
        )));
    }
    let x = match order {
        SubtractionOrder::One => t * lambda,
        SubtractionOrder::Two => t * t * lambda,
    };
    if x >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "effective squeezing {x} >= 1 diverges"
        )));
    }
    if lambda == 0.0 {
        return Ok((Vec::new(), 0.0));
    }
    let mut coeffs = Vec::new();
    for n in 0..=MAX_FOCK_ORDER {
        let base = match order {
            SubtractionOrder::One => (n + 1) as f64,
            SubtractionOrder::Two => ((n + 1) * (n + 2)) as f64,
        };
        let c = base * x.powi(n as i32);
        coeffs.push(c);
        let tail = (base + 2.0) * (base + 2.0) * x.powi(2 * (n as i32 + 1));
        if tail < 1e-14 {
            break;
        }
    }
    let norm: f64 = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
    for c in &mut coeffs {
        *c /= norm;
    }
    let l2 = lambda * lambda;
    let prob = match order {
        SubtractionOrder::One => {
            let tl2 = x * x;
            (1.0 - t) * (1.0 - t) * l2 * (1.0 - l2) * (1.0 + tl2) / (1.0 - tl2).powi(3)
        }
        SubtractionOrder::Two => {
            let t4l2 = t.powi(4) * l2;
            2.0 * t * t
                * (1.0 - t).powi(4)
                * l2
                * l2
                * (1.0 - l2)
                * (1.0 + 10.0 * t4l2 + t4l2 * t4l2)
                / (1.0 - t4l2).powi(5)
        }
    };
    Ok((coeffs, prob))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::{subtract_photons, Tap};
    use crate::gaussian::GaussianState;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn orthant_integral_known_values() {
        assert_abs_diff_eq!(orthant_integral(1.0, 1.0, 0.0).unwrap(), PI / 4.0, epsilon = 1e-15);
        // frozen from 2D adaptive quadrature of the integrand: pi / (3 sqrt(3))
        assert_abs_diff_eq!(
            orthant_integral(1.0, 1.0, 0.5).unwrap(),
            PI / (3.0 * 3.0f64.sqrt()),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(orthant_integral(4.0, 1.0, 0.0).unwrap(), PI / 8.0, epsilon = 1e-15);
        assert!(orthant_integral(1.0, 1.0, 1.0).is_err());
        assert!(orthant_integral(-1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn recip_gamma_zeros_and_values() {
        assert_eq!(recip_gamma(0.0), 0.0);
        assert_eq!(recip_gamma(-1.0), 0.0);
        assert_eq!(recip_gamma(-30.0), 0.0);
        assert_abs_diff_eq!(recip_gamma(1.0), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(recip_gamma(0.5), 1.0 / PI.sqrt(), epsilon = 1e-14);
        // 1/Gamma(-0.5) = -1 / (2 sqrt(pi))
        assert_abs_diff_eq!(
            recip_gamma(-0.5),
            -1.0 / (2.0 * PI.sqrt()),
            epsilon = 1e-14
        );
    }

    #[test]
    fn munro_peak_values() {
        let (c, _) = pure_state_model(SubtractionOrder::One, 1.0, 0.57).unwrap();
        let r = munro_bell_factor(&c, MeasurementSetting::canonical(), 1.0).unwrap();
        assert_abs_diff_eq!(r.s, 2.048, epsilon = 2e-3);

        let (c, _) = pure_state_model(SubtractionOrder::Two, 1.0, 0.40).unwrap();
        let r = munro_bell_factor(&c, MeasurementSetting::canonical(), 1.0).unwrap();
        assert_abs_diff_eq!(r.s, 2.064, epsilon = 2e-3);
    }

    #[test]
    fn munro_rejects_unnormalized() {
        assert!(munro_correlation(&[1.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn pure_state_model_edge_cases() {
        let (c, p) = pure_state_model(SubtractionOrder::One, 0.95, 0.0).unwrap();
        assert!(c.is_empty());
        assert_eq!(p, 0.0);

        let (c, _) = pure_state_model(SubtractionOrder::Two, 0.99, 0.5).unwrap();
        let norm2: f64 = c.iter().map(|v| v * v).sum();
        assert_abs_diff_eq!(norm2, 1.0, epsilon = 1e-12);

        // Eq-5-style probability at lambda = 0.6, T = 0.95
        let (_, p) = pure_state_model(SubtractionOrder::One, 0.95, 0.6).unwrap();
        assert_abs_diff_eq!(p, 2.480283131055425e-3, epsilon = 1e-12);

        assert!(pure_state_model(SubtractionOrder::One, 1.0, 1.0).is_err());
    }

    #[test]
    fn correlations_are_bounded() {
        let tms = GaussianState::two_mode_squeezed(0.6f64.atanh());
        let taps: Vec<Tap> = [0, 1]
            .iter()
            .map(|&m| Tap {
                signal_mode: m,
                transmittance: 0.95,
                eta_pd: 1.0,
            })
            .collect();
        let mix = subtract_photons(&tms, &taps, 1.0, 0.0, None).unwrap();
        for &(th, ph) in &[(0.0, 0.3), (1.1, -0.6), (0.5, 2.0)] {
            let e = correlation(&mix, th, ph).unwrap();
            assert!(e.abs() <= 1.0 + 1e-9, "E = {e}");
        }
        let r = bell_factor(&mix, MeasurementSetting::canonical()).unwrap();
        assert!(r.s.abs() <= 2.0 * 2.0f64.sqrt() + 1e-6);
        assert_abs_diff_eq!(
            r.s,
            r.e[0][0] + r.e[0][1] + r.e[1][0] - r.e[1][1],
            epsilon = 0.0
        );
    }

    #[test]
    fn angle_sum_invariance_pure_state_path() {
        let (c, _) = pure_state_model(SubtractionOrder::One, 1.0, 0.5).unwrap();
        let a = munro_correlation(&c, 0.3 + 0.9).unwrap();
        let b = munro_correlation(&c, 1.0 + 0.2).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-15);
    }

    #[test]
    fn electronic_noise_equivalence_identity() {
        // S(eta, N_el) == S(eta / (1 + N_el), 0): sign binning is
        // scale-invariant so the identity is exact
        let tms = GaussianState::two_mode_squeezed(0.55f64.atanh());
        let taps: Vec<Tap> = [0, 1]
            .iter()
            .map(|&m| Tap {
                signal_mode: m,
                transmittance: 0.95,
                eta_pd: 0.4,
            })
            .collect();
        let (eta, nel) = (0.92, 0.15);
        let a = bell_factor(
            &subtract_photons(&tms, &taps, eta, nel, None).unwrap(),
            MeasurementSetting::canonical(),
        )
        .unwrap();
        let b = bell_factor(
            &subtract_photons(&tms, &taps, eta / (1.0 + nel), 0.0, None).unwrap(),
            MeasurementSetting::canonical(),
        )
        .unwrap();
        assert_abs_diff_eq!(a.s, b.s, epsilon = 1e-9);
    }
}
