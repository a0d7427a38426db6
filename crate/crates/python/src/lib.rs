//! Python extension module exposing the bellsim pipeline: conditioned
//! mixtures, Bell-CHSH evaluation, the pure-state model, angle optimization
//! and the scheme description language.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use bellsim::bell::{self, MeasurementSetting, SubtractionOrder};
use bellsim::conditioning::SignedGaussianMixture;
use bellsim::error::Error;
use bellsim::experiments::standard_mixture;
use bellsim::optimize;
use bellsim::scheme;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::InvalidParameter(_) | Error::Parse { .. } | Error::DimensionMismatch(_) => {
            PyValueError::new_err(err.to_string())
        }
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

fn setting_from(opt: Option<(f64, f64, f64, f64)>) -> MeasurementSetting {
    match opt {
        Some((t1, t2, p1, p2)) => MeasurementSetting::from_array([t1, t2, p1, p2]),
        None => MeasurementSetting::canonical(),
    }
}

/// Result of a Bell-CHSH evaluation.
#[pyclass(frozen)]
struct BellOutcome {
    /// Bell-CHSH factor S = E11 + E12 + E21 - E22.
    #[pyo3(get)]
    s: f64,
    /// 2x2 correlation table, rows Alice, columns Bob.
    #[pyo3(get)]
    e: Vec<Vec<f64>>,
    /// Preparation (click) probability of the measured state.
    #[pyo3(get)]
    success_prob: f64,
    /// Measurement angles (theta1, theta2, phi1, phi2).
    #[pyo3(get)]
    settings: (f64, f64, f64, f64),
}

impl BellOutcome {
    fn from_result(r: bell::BellResult) -> Self {
        let a = r.settings.as_array();
        BellOutcome {
            s: r.s,
            e: r.e.iter().map(|row| row.to_vec()).collect(),
            success_prob: r.success_prob,
            settings: (a[0], a[1], a[2], a[3]),
        }
    }
}

#[pymethods]
impl BellOutcome {
    fn __repr__(&self) -> String {
        format!(
            "BellOutcome(s={}, success_prob={}, settings={:?})",
            self.s, self.success_prob, self.settings
        )
    }
}

/// Signed Gaussian mixture describing a (possibly conditioned) state.
#[pyclass(frozen)]
struct Mixture {
    inner: SignedGaussianMixture,
}

#[pymethods]
impl Mixture {
    /// Two-mode squeezed vacuum (lambda = tanh of the squeezing parameter)
    /// with `k_per_arm` photon subtractions per mode through taps of
    /// transmittance `t`, imperfect detectors and preparation noise.
    /// `k_per_arm=0` returns the unconditioned Gaussian state.
    #[staticmethod]
    #[pyo3(signature = (lam, t, k_per_arm=1, eta_pd=1.0, eta_bhd=1.0, n_el=0.0, v_noise=0.0))]
    fn standard(
        lam: f64,
        t: f64,
        k_per_arm: usize,
        eta_pd: f64,
        eta_bhd: f64,
        n_el: f64,
        v_noise: f64,
    ) -> PyResult<Self> {
        let inner =
            standard_mixture(lam, t, k_per_arm, eta_pd, eta_bhd, n_el, v_noise).map_err(to_py)?;
        Ok(Mixture { inner })
    }

    fn n_modes(&self) -> usize {
        self.inner.n_modes()
    }

    fn n_terms(&self) -> usize {
        self.inner.terms().len()
    }

    fn success_prob(&self) -> f64 {
        self.inner.success_prob()
    }

    /// Wigner function at a phase-space point (x1, p1, x2, p2, ...).
    fn wigner(&self, r: Vec<f64>) -> PyResult<f64> {
        self.inner.wigner(&r).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "Mixture(n_modes={}, n_terms={}, success_prob={})",
            self.inner.n_modes(),
            self.inner.terms().len(),
            self.inner.success_prob()
        )
    }
}

/// Sign-binned correlation E(theta, phi) of the two measured quadratures.
#[pyfunction]
fn correlation(mixture: &Mixture, theta: f64, phi: f64) -> PyResult<f64> {
    bell::correlation(&mixture.inner, theta, phi).map_err(to_py)
}

/// Bell-CHSH factor at the given settings (canonical when omitted).
#[pyfunction]
#[pyo3(signature = (mixture, settings=None))]
fn bell_factor(
    mixture: &Mixture,
    settings: Option<(f64, f64, f64, f64)>,
) -> PyResult<BellOutcome> {
    bell::bell_factor(&mixture.inner, setting_from(settings))
        .map(BellOutcome::from_result)
        .map_err(to_py)
}

/// Maximize S over the four measurement angles.
#[pyfunction]
fn optimize_angles(mixture: &Mixture) -> PyResult<BellOutcome> {
    optimize::optimize_angles(&mixture.inner)
        .map(BellOutcome::from_result)
        .map_err(to_py)
}

/// Normalized number-basis coefficients and preparation probability of the
/// idealized photon-number-resolving model; `order` photons per arm (1 or 2).
#[pyfunction]
fn pure_state_model(order: usize, t: f64, lam: f64) -> PyResult<(Vec<f64>, f64)> {
    let order = match order {
        1 => SubtractionOrder::One,
        2 => SubtractionOrder::Two,
        other => {
            return Err(PyValueError::new_err(format!(
                "subtraction order {other} not supported (1 or 2)"
            )))
        }
    };
    bell::pure_state_model(order, t, lam).map_err(to_py)
}

/// Bell-CHSH factor of a photon-number-correlated pure state given by its
/// number-basis coefficients.
#[pyfunction]
#[pyo3(signature = (coeffs, success_prob=1.0, settings=None))]
fn munro_bell_factor(
    coeffs: Vec<f64>,
    success_prob: f64,
    settings: Option<(f64, f64, f64, f64)>,
) -> PyResult<BellOutcome> {
    bell::munro_bell_factor(&coeffs, setting_from(settings), success_prob)
        .map(BellOutcome::from_result)
        .map_err(to_py)
}

/// Parse and run a scheme given as text; free squeezing parameters and
/// `settings=optimize` blocks are optimized.
#[pyfunction]
fn run_scheme(text: &str) -> PyResult<BellOutcome> {
    scheme::run_text(text)
        .map(BellOutcome::from_result)
        .map_err(to_py)
}

#[pymodule]
fn bellsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Mixture>()?;
    m.add_class::<BellOutcome>()?;
    m.add_function(wrap_pyfunction!(correlation, m)?)?;
    m.add_function(wrap_pyfunction!(bell_factor, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_angles, m)?)?;
    m.add_function(wrap_pyfunction!(pure_state_model, m)?)?;
    m.add_function(wrap_pyfunction!(munro_bell_factor, m)?)?;
    m.add_function(wrap_pyfunction!(run_scheme, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
