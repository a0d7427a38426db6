//! Conditional non-Gaussian state preparation.
//!
//! A click of a single-photon-sensitive detector projects onto the complement
//! of the vacuum. In the Wigner picture each conditioning detector contributes
//! a factor `(1 - 2 exp(-x^2 - p^2))`, so conditioning a Gaussian state on `k`
//! clicks yields a signed sum of `2^k` Gaussian terms, indexed by detector
//! subsets with coefficient `(-2)^{|subset|}`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{GaussianChannel, GaussianState, SymplecticOp};

const COND_LIMIT: f64 = 1e12;

/// One photon-subtraction tap: a weakly reflecting beam splitter on a signal
/// mode, its reflected port sent to a click detector of efficiency `eta_pd`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub signal_mode: usize,
    pub transmittance: f64,
    pub eta_pd: f64,
}

/// One Gaussian term of a signed mixture: `weight * exp(-r^T precision r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureTerm {
    /// Fully folded weight: the mixture Wigner function is the plain sum
    /// `sum_j weight_j exp(-r^T P_j r)`.
    pub weight: f64,
    pub precision: DMatrix<f64>,
    /// Inclusion-exclusion coefficient of the term, `(-2)^{|subset|}`.
    pub povm_coeff: f64,
}

/// The conditionally prepared non-Gaussian state as a signed Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedGaussianMixture {
    n_modes: usize,
    terms: Vec<MixtureTerm>,
    success_prob: f64,
}

fn cholesky_of(
    m: &DMatrix<f64>,
    what: &str,
) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    m.clone()
        .cholesky()
        .ok_or_else(|| Error::SingularMatrix(format!("{what} not positive definite")))
}

fn check_condition(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let eig = m.clone().symmetric_eigen().eigenvalues;
    let max_e = eig.amax();
    let min_e = eig.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if min_e <= 0.0 || max_e / min_e > COND_LIMIT {
        return Err(Error::SingularMatrix(format!(
            "{what} condition number beyond {COND_LIMIT:e}"
        )));
    }
    Ok(())
}

impl SignedGaussianMixture {
    /// Wrap a Gaussian state as a trivial single-term mixture (`P_G = 1`).
    pub fn from_gaussian(state: &GaussianState) -> Result<Self> {
        check_condition(state.cov(), "covariance")?;
        let chol = cholesky_of(state.cov(), "covariance")?;
        let det: f64 = chol.l_dirty().diagonal().iter().map(|d| d * d).product();
        let precision = chol.inverse();
        let n = state.n_modes();
        let weight = 1.0 / (std::f64::consts::PI.powi(n as i32) * det.sqrt());
        Ok(SignedGaussianMixture {
            n_modes: n,
            terms: vec![MixtureTerm {
                weight,
                precision,
                povm_coeff: 1.0,
            }],
            success_prob: 1.0,
        })
    }

    /// Condition a Gaussian state (first `n_signal` modes signal, the rest
    /// ancillas already carrying all losses) on clicks of the detectors
    /// watching the ancilla modes listed in `detected` (ancilla-local
    /// indices). Undetected ancilla modes are traced out.
    pub fn condition_on_clicks(
        gamma_out: &GaussianState,
        n_signal: usize,
        detected: &[usize],
    ) -> Result<Self> {
        let n_total = gamma_out.n_modes();
        if n_signal == 0 || n_signal > n_total {
            return Err(Error::DimensionMismatch(format!(
                "{n_signal} signal modes of {n_total}"
            )));
        }
        let k = n_total - n_signal;
        for &d in detected {
            if d >= k {
                return Err(Error::DimensionMismatch(format!(
                    "detector index {d} out of range for {k} ancillas"
                )));
            }
        }
        let cov = gamma_out.cov();
        check_condition(cov, "output covariance")?;
        let chol = cholesky_of(cov, "output covariance")?;
        let det_gamma: f64 = chol.l_dirty().diagonal().iter().map(|d| d * d).product();
        let gamma = chol.inverse();

        let (ns2, k2) = (2 * n_signal, 2 * k);
        let g_ab = gamma.view((0, 0), (ns2, ns2)).into_owned();
        let sigma = gamma.view((0, ns2), (ns2, k2)).into_owned();
        let g_cd = gamma.view((ns2, ns2), (k2, k2)).into_owned();

        let pi_n = std::f64::consts::PI.powi(n_signal as i32);
        let mut raw: Vec<(f64, f64, DMatrix<f64>)> = Vec::with_capacity(1 << detected.len());
        let mut p_g = 0.0;
        let mut abs_sum = 0.0;
        for mask in 0u32..(1u32 << detected.len()) {
            let mut g_s_cd = g_cd.clone();
            let mut q = 1.0f64;
            for (bit, &d) in detected.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    g_s_cd[(2 * d, 2 * d)] += 1.0;
                    g_s_cd[(2 * d + 1, 2 * d + 1)] += 1.0;
                    q *= -2.0;
                }
            }
            let (det_cd, g_s_ab) = if k > 0 {
                check_condition(&g_s_cd, "conditioned ancilla block")?;
                let chol_cd = cholesky_of(&g_s_cd, "conditioned ancilla block")?;
                let det_cd: f64 = chol_cd
                    .l_dirty()
                    .diagonal()
                    .iter()
                    .map(|d| d * d)
                    .product();
                let g_s_ab = &g_ab - &sigma * chol_cd.inverse() * sigma.transpose();
                (det_cd, g_s_ab)
            } else {
                (1.0, g_ab.clone())
            };
            let det_ab: f64 = cholesky_of(&g_s_ab, "signal precision")?
                .l_dirty()
                .diagonal()
                .iter()
                .map(|d| d * d)
                .product();
            let contrib = q / (det_ab * det_cd).sqrt() / det_gamma.sqrt();
            p_g += contrib;
            abs_sum += contrib.abs();
            raw.push((q, q / det_cd.sqrt(), g_s_ab));
        }
        if p_g <= 0.0 {
            return Err(Error::NumericalFailure(format!(
                "nonpositive success probability {p_g}"
            )));
        }
        // Inclusion-exclusion terms of magnitude abs_sum cancel down to p_g;
        // past ~1e13 of cancellation fewer than three significant digits
        // survive and the conditional state is numerically meaningless.
        // (Legitimate four-photon schemes at high transmittance sit near
        // 1e11-1e12, so the cutoff must stay well above that.)
        if abs_sum / p_g > 1e13 {
            return Err(Error::NumericalFailure(format!(
                "success probability {p_g} lost to cancellation \
                 (terms of magnitude {abs_sum})"
            )));
        }
        let terms = raw
            .into_iter()
            .map(|(q, r, precision)| MixtureTerm {
                weight: r / (pi_n * p_g * det_gamma.sqrt()),
                precision,
                povm_coeff: q,
            })
            .collect();
        Ok(SignedGaussianMixture {
            n_modes: n_signal,
            terms,
            success_prob: p_g,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn terms(&self) -> &[MixtureTerm] {
        &self.terms
    }

    /// Probability that all conditioning detectors clicked.
    pub fn success_prob(&self) -> f64 {
        self.success_prob
    }

    /// Total Wigner integral; equals 1 for a well-formed mixture.
    pub fn normalization(&self) -> f64 {
        let pi_n = std::f64::consts::PI.powi(self.n_modes as i32);
        self.terms
            .iter()
            .map(|t| t.weight * pi_n / t.precision.determinant().sqrt())
            .sum()
    }

    /// Evaluate the Wigner function of the mixture at a phase-space point.
    pub fn wigner(&self, r: &[f64]) -> Result<f64> {
        if r.len() != 2 * self.n_modes {
            return Err(Error::DimensionMismatch(format!(
                "point length {} vs dimension {}",
                r.len(),
                2 * self.n_modes
            )));
        }
        let v = DVector::from_column_slice(r);
        Ok(self
            .terms
            .iter()
            .map(|t| t.weight * (-(v.transpose() * &t.precision * &v)[(0, 0)]).exp())
            .sum())
    }

    /// Apply a symplectic transformation to the mixture:
    /// each precision matrix maps as `P -> S^{-T} P S^{-1}`.
    pub fn apply_symplectic(&self, op: &SymplecticOp) -> Result<SignedGaussianMixture> {
        let s = op.embedded(self.n_modes)?;
        let s_inv = s
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::SingularMatrix("symplectic matrix".into()))?;
        let terms = self
            .terms
            .iter()
            .map(|t| MixtureTerm {
                weight: t.weight,
                precision: s_inv.transpose() * &t.precision * &s_inv,
                povm_coeff: t.povm_coeff,
            })
            .collect();
        Ok(SignedGaussianMixture {
            n_modes: self.n_modes,
            terms,
            success_prob: self.success_prob,
        })
    }
}

/// Attach one vacuum ancilla per tap, mix each signal/ancilla pair on the
/// tap's beam splitter, apply all detection losses and electronic noise,
/// optionally mix the ancilla modes, and condition on clicks at every tap.
pub fn subtract_photons(
    state: &GaussianState,
    taps: &[Tap],
    eta_bhd: f64,
    n_el: f64,
    ancilla_mixer: Option<&SymplecticOp>,
) -> Result<SignedGaussianMixture> {
    let n = state.n_modes();
    let k = taps.len();
    let mut full = if k > 0 {
        state.tensor(&GaussianState::vacuum(k))
    } else {
        state.clone()
    };
    for (i, tap) in taps.iter().enumerate() {
        if tap.signal_mode >= n {
            return Err(Error::DimensionMismatch(format!(
                "tap on mode {} of {n}",
                tap.signal_mode
            )));
        }
        let bs = SymplecticOp::beam_splitter(tap.transmittance, tap.signal_mode, n + i)?;
        full = full.apply_symplectic(&bs)?;
    }
    let eta_pd: Vec<f64> = taps.iter().map(|t| t.eta_pd).collect();
    let channel = GaussianChannel::detection_noise(eta_bhd, n_el, n, &eta_pd)?;
    full = full.apply_channel(&channel)?;
    if let Some(mixer) = ancilla_mixer {
        if !mixer.is_passive() {
            return Err(Error::InvalidParameter(
                "ancilla mixer must be passive".into(),
            ));
        }
        let shifted = SymplecticOp::from_matrix(
            mixer.matrix().clone(),
            mixer.targets().iter().map(|&m| n + m).collect(),
        )?;
        full = full.apply_symplectic(&shifted)?;
    }
    let detected: Vec<usize> = (0..k).collect();
    SignedGaussianMixture::condition_on_clicks(&full, n, &detected)
}

/// One term of a bivariate signed mixture over the measured quadrature pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BivariateTerm {
    pub weight: f64,
    /// 2x2 exponent matrix; entries `[[a, c], [c, b]]`.
    pub gamma2: DMatrix<f64>,
}

/// Joint distribution of the two measured quadratures as a signed mixture of
/// bivariate Gaussians; `density` integrates to 1 over the plane.
#[derive(Debug, Clone, PartialEq)]
pub struct BivariateSignedMixture {
    pub terms: Vec<BivariateTerm>,
}

impl BivariateSignedMixture {
    pub fn density(&self, x: f64, y: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let g = &t.gamma2;
                t.weight
                    * (-(g[(0, 0)] * x * x + 2.0 * g[(0, 1)] * x * y + g[(1, 1)] * y * y)).exp()
            })
            .sum()
    }
}

/// Marginal joint distribution of quadratures `x_theta` on `modes.0` and
/// `x_phi` on `modes.1`: local phase shifts map the measured quadratures onto
/// the x axes, then every other phase-space coordinate is integrated out.
pub fn measured_marginal(
    mixture: &SignedGaussianMixture,
    theta: f64,
    phi: f64,
    modes: (usize, usize),
) -> Result<BivariateSignedMixture> {
    let n = mixture.n_modes();
    if n < 2 {
        return Err(Error::DimensionMismatch(
            "marginal requires at least two modes".into(),
        ));
    }
    let (ma, mb) = modes;
    if ma >= n || mb >= n || ma == mb {
        return Err(Error::DimensionMismatch(format!(
            "marginal modes ({ma}, {mb}) invalid for {n} modes"
        )));
    }
    // rotate the measured quadratures onto x
    let sh = SymplecticOp::phase_shift(theta, ma).embedded(n)?
        * SymplecticOp::phase_shift(phi, mb).embedded(n)?;
    // reorder: (x_a, x_b) first, all remaining coordinates after
    let dim = 2 * n;
    let mut order = vec![2 * ma, 2 * mb];
    order.extend((0..dim).filter(|i| *i != 2 * ma && *i != 2 * mb));
    let mut perm = DMatrix::zeros(dim, dim);
    for (row, &col) in order.iter().enumerate() {
        perm[(row, col)] = 1.0;
    }
    let m = perm * sh;

    let pi_rest = std::f64::consts::PI.powi(n as i32 - 1);
    let mut terms = Vec::with_capacity(mixture.terms().len());
    for t in mixture.terms() {
        let gp = &m * &t.precision * m.transpose();
        let a = gp.view((0, 0), (2, 2)).into_owned();
        let c = gp.view((0, 2), (2, dim - 2)).into_owned();
        let b = gp.view((2, 2), (dim - 2, dim - 2)).into_owned();
        let chol_b = cholesky_of(&b, "momentum block")?;
        let det_b: f64 = chol_b.l_dirty().diagonal().iter().map(|d| d * d).product();
        let gamma2 = &a - &c * chol_b.inverse() * c.transpose();
        terms.push(BivariateTerm {
            weight: t.weight * pi_rest / det_b.sqrt(),
            gamma2,
        });
    }
    Ok(BivariateSignedMixture { terms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ideal_taps(t: f64) -> Vec<Tap> {
        vec![
            Tap {
                signal_mode: 0,
                transmittance: t,
                eta_pd: 1.0,
            },
            Tap {
                signal_mode: 1,
                transmittance: t,
                eta_pd: 1.0,
            },
        ]
    }

    fn main_mixture(lambda: f64, t: f64) -> SignedGaussianMixture {
        let tms = GaussianState::two_mode_squeezed(lambda.atanh());
        subtract_photons(&tms, &ideal_taps(t), 1.0, 0.0, None).unwrap()
    }

    #[test]
    fn two_detectors_give_four_terms_with_expected_coefficients() {
        let mix = main_mixture(0.6, 0.95);
        assert_eq!(mix.terms().len(), 4);
        let coeffs: Vec<f64> = mix.terms().iter().map(|t| t.povm_coeff).collect();
        assert_eq!(coeffs, vec![1.0, -2.0, -2.0, 4.0]);
        assert_abs_diff_eq!(mix.normalization(), 1.0, epsilon = 1e-9);
        assert!(mix.success_prob() > 0.0 && mix.success_prob() <= 1.0);
    }

    #[test]
    fn four_detectors_give_sixteen_terms() {
        let tms = GaussianState::two_mode_squeezed(0.4f64.atanh());
        let taps: Vec<Tap> = [0, 0, 1, 1]
            .iter()
            .map(|&m| Tap {
                signal_mode: m,
                transmittance: 0.95,
                eta_pd: 1.0,
            })
            .collect();
        let mix = subtract_photons(&tms, &taps, 1.0, 0.0, None).unwrap();
        assert_eq!(mix.terms().len(), 16);
        assert_abs_diff_eq!(mix.normalization(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_taps_degenerate_to_lossy_gaussian() {
        let tms = GaussianState::two_mode_squeezed(0.5);
        let mix = subtract_photons(&tms, &[], 0.9, 0.0, None).unwrap();
        assert_eq!(mix.terms().len(), 1);
        assert_abs_diff_eq!(mix.success_prob(), 1.0, epsilon = 1e-14);
        let lossy = tms
            .apply_channel(&GaussianChannel::lossy(0.9, 2).unwrap())
            .unwrap();
        let direct = SignedGaussianMixture::from_gaussian(&lossy).unwrap();
        let d = &mix.terms()[0].precision - &direct.terms()[0].precision;
        assert!(d.iter().all(|v| v.abs() < 1e-12));
        assert_abs_diff_eq!(mix.terms()[0].weight, direct.terms()[0].weight, epsilon = 1e-15);
    }

    #[test]
    fn wigner_cut_attains_negative_values() {
        // cut along x_B = -x_A, p = 0 (the anticorrelated direction, where
        // the photon-subtracted state dips below zero)
        let mix = main_mixture(0.6, 0.95);
        let min = (0..200)
            .map(|i| {
                let x = -4.0 + 8.0 * i as f64 / 199.0;
                mix.wigner(&[x, 0.0, -x, 0.0]).unwrap()
            })
            .fold(f64::INFINITY, f64::min);
        assert!(min < 0.0, "expected negative Wigner values, min = {min}");
    }

    #[test]
    fn small_squeezing_success_probability_limit() {
        // P_G -> (1-T)^2 lambda^2 as lambda -> 0 with ideal detectors
        let lambda = 1e-3;
        let t = 0.95;
        let mix = main_mixture(lambda, t);
        let ratio = mix.success_prob() / ((1.0 - t) * (1.0 - t) * lambda * lambda);
        assert!((ratio - 1.0).abs() < 0.01, "ratio = {ratio}");
    }

    #[test]
    fn success_probability_scales_with_detector_efficiency_squared() {
        let t = 0.99f64;
        let lambda = 0.57 / t;
        let tms = GaussianState::two_mode_squeezed(lambda.atanh());
        let p = |eta: f64| {
            let taps: Vec<Tap> = [0, 1]
                .iter()
                .map(|&m| Tap {
                    signal_mode: m,
                    transmittance: t,
                    eta_pd: eta,
                })
                .collect();
            subtract_photons(&tms, &taps, 1.0, 0.0, None)
                .unwrap()
                .success_prob()
        };
        let ratio = p(0.4) / p(1.0);
        assert!((ratio / (0.4 * 0.4) - 1.0).abs() < 0.05, "ratio = {ratio}");
    }

    #[test]
    fn marginal_of_vacuum_is_unit_precision_product() {
        let mix = SignedGaussianMixture::from_gaussian(&GaussianState::vacuum(2)).unwrap();
        let marg = measured_marginal(&mix, 0.0, 0.0, (0, 1)).unwrap();
        assert_eq!(marg.terms.len(), 1);
        let g = &marg.terms[0].gamma2;
        assert_abs_diff_eq!(g[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[(1, 1)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[(0, 1)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            marg.terms[0].weight,
            1.0 / std::f64::consts::PI,
            epsilon = 1e-12
        );
    }

    #[test]
    fn marginal_point_symmetry() {
        let mix = main_mixture(0.55, 0.97);
        let marg = measured_marginal(&mix, 0.3, 1.1, (0, 1)).unwrap();
        for &(x, y) in &[(0.4, -1.3), (2.0, 0.7), (-0.2, -0.9)] {
            assert_abs_diff_eq!(marg.density(x, y), marg.density(-x, -y), epsilon = 1e-14);
        }
    }

    #[test]
    fn marginal_normalizes_by_term_sum() {
        let mix = main_mixture(0.6, 0.99);
        let marg = measured_marginal(&mix, 0.0, std::f64::consts::FRAC_PI_4, (0, 1)).unwrap();
        let total: f64 = marg
            .terms
            .iter()
            .map(|t| t.weight * std::f64::consts::PI / t.gamma2.determinant().sqrt())
            .sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn mixer_must_be_passive() {
        let tms = GaussianState::two_mode_squeezed(0.5);
        let mixer = SymplecticOp::squeezer(0.3, 0);
        let err = subtract_photons(&tms, &ideal_taps(0.95), 1.0, 0.0, Some(&mixer));
        assert!(err.is_err());
    }
}
