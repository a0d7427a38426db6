//! Gaussian states as covariance matrices, symplectic transformations and
//! Gaussian CP maps.
//!
//! Conventions: quadrature ordering `(x1, p1, ..., xn, pn)`, vacuum covariance
//! equal to the identity (so `<x^2> = 1/2` and `[x, p] = i`), and the Wigner
//! function `W(r) = exp[-(r-d)^T g^{-1} (r-d)] / (pi^n sqrt(det g))`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const SYM_TOL: f64 = 1e-10;
const UNCERTAINTY_TOL: f64 = 1e-9;
const COND_LIMIT: f64 = 1e12;

/// Standard symplectic form for the `(x1, p1, ..., xn, pn)` ordering:
/// block diagonal of `[[0, 1], [-1, 0]]`.
pub fn symplectic_form(n_modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for m in 0..n_modes {
        omega[(2 * m, 2 * m + 1)] = 1.0;
        omega[(2 * m + 1, 2 * m)] = -1.0;
    }
    omega
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// A Gaussian state of `n` modes: covariance matrix plus displacement vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    n_modes: usize,
    cov: DMatrix<f64>,
    disp: DVector<f64>,
}

impl GaussianState {
    /// Vacuum state of `n` modes: identity covariance, zero displacement.
    pub fn vacuum(n: usize) -> Self {
        assert!(n >= 1, "mode count must be positive");
        GaussianState {
            n_modes: n,
            cov: DMatrix::identity(2 * n, 2 * n),
            disp: DVector::zeros(2 * n),
        }
    }

    /// Single-mode squeezed vacuum, covariance `diag(e^{2s}, e^{-2s})`.
    pub fn single_mode_squeezed(s: f64) -> Self {
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![(2.0 * s).exp(), (-2.0 * s).exp()]));
        GaussianState {
            n_modes: 1,
            cov,
            disp: DVector::zeros(2),
        }
    }

    /// Two-mode squeezed vacuum with squeezing parameter `s` (nats).
    ///
    /// `cosh(2s)` on the diagonal, `+sinh(2s)` coupling the x quadratures and
    /// `-sinh(2s)` coupling the p quadratures.
    pub fn two_mode_squeezed(s: f64) -> Self {
        let c = (2.0 * s).cosh();
        let sh = (2.0 * s).sinh();
        let cov = DMatrix::from_row_slice(
            4,
            4,
            &[
                c, 0.0, sh, 0.0, //
                0.0, c, 0.0, -sh, //
                sh, 0.0, c, 0.0, //
                0.0, -sh, 0.0, c,
            ],
        );
        GaussianState {
            n_modes: 2,
            cov,
            disp: DVector::zeros(4),
        }
    }

    /// Build a state from explicit covariance and displacement, validating
    /// symmetry and the uncertainty relation.
    pub fn from_parts(cov: DMatrix<f64>, disp: DVector<f64>) -> Result<Self> {
        let dim = cov.nrows();
        if dim == 0 || dim % 2 != 0 || cov.ncols() != dim || disp.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "covariance {}x{}, displacement {}",
                cov.nrows(),
                cov.ncols(),
                disp.len()
            )));
        }
        if max_abs(&(cov.transpose() - &cov)) > SYM_TOL {
            return Err(Error::InvalidParameter(
                "covariance matrix not symmetric".into(),
            ));
        }
        let state = GaussianState {
            n_modes: dim / 2,
            cov,
            disp,
        };
        let min_nu = state
            .symplectic_eigenvalues()
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if min_nu < 1.0 - UNCERTAINTY_TOL {
            return Err(Error::UncertaintyViolation);
        }
        Ok(state)
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn disp(&self) -> &DVector<f64> {
        &self.disp
    }

    /// Direct sum of two states (modes of `other` appended after `self`).
    pub fn tensor(&self, other: &GaussianState) -> GaussianState {
        let n = self.n_modes + other.n_modes;
        let mut cov = DMatrix::identity(2 * n, 2 * n);
        cov.view_mut((0, 0), (2 * self.n_modes, 2 * self.n_modes))
            .copy_from(&self.cov);
        cov.view_mut(
            (2 * self.n_modes, 2 * self.n_modes),
            (2 * other.n_modes, 2 * other.n_modes),
        )
        .copy_from(&other.cov);
        let mut disp = DVector::zeros(2 * n);
        disp.rows_mut(0, 2 * self.n_modes).copy_from(&self.disp);
        disp.rows_mut(2 * self.n_modes, 2 * other.n_modes)
            .copy_from(&other.disp);
        GaussianState {
            n_modes: n,
            cov,
            disp,
        }
    }

    /// Symplectic eigenvalues, i.e. moduli of the eigenvalues of `i Omega g`
    /// (each appears twice; one copy per mode is returned).
    pub fn symplectic_eigenvalues(&self) -> Vec<f64> {
        let m = symplectic_form(self.n_modes) * &self.cov;
        let eig = m.complex_eigenvalues();
        let mut nus: Vec<f64> = eig.iter().map(|z| z.norm()).collect();
        nus.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // eigenvalues come in +-i nu pairs
        nus.into_iter().skip(1).step_by(2).collect()
    }

    /// Apply a symplectic transformation: `g -> S g S^T`, `d -> S d`.
    pub fn apply_symplectic(&self, op: &SymplecticOp) -> Result<GaussianState> {
        let s = op.embedded(self.n_modes)?;
        Ok(GaussianState {
            n_modes: self.n_modes,
            cov: &s * &self.cov * s.transpose(),
            disp: &s * &self.disp,
        })
    }

    /// Apply a Gaussian CP map: `g -> A g A^T + G`, `d -> A d`.
    pub fn apply_channel(&self, ch: &GaussianChannel) -> Result<GaussianState> {
        if ch.a.nrows() != 2 * self.n_modes {
            return Err(Error::DimensionMismatch(format!(
                "channel dimension {} vs state dimension {}",
                ch.a.nrows(),
                2 * self.n_modes
            )));
        }
        Ok(GaussianState {
            n_modes: self.n_modes,
            cov: &ch.a * &self.cov * ch.a.transpose() + &ch.g,
            disp: &ch.a * &self.disp,
        })
    }

    /// Add quadrature-independent Gaussian noise of variance `v_noise`
    /// (in `<x^2>` units) to the given modes: `g -> g + 2 v_noise I` there.
    pub fn add_thermal_noise(&self, v_noise: f64, modes: &[usize]) -> Result<GaussianState> {
        if v_noise < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "negative thermal noise {v_noise}"
            )));
        }
        for &m in modes {
            if m >= self.n_modes {
                return Err(Error::DimensionMismatch(format!(
                    "mode {m} out of range for {} modes",
                    self.n_modes
                )));
            }
        }
        let mut cov = self.cov.clone();
        for &m in modes {
            cov[(2 * m, 2 * m)] += 2.0 * v_noise;
            cov[(2 * m + 1, 2 * m + 1)] += 2.0 * v_noise;
        }
        Ok(GaussianState {
            n_modes: self.n_modes,
            cov,
            disp: self.disp.clone(),
        })
    }

    /// Evaluate the Wigner function at a phase-space point.
    pub fn wigner(&self, r: &[f64]) -> Result<f64> {
        if r.len() != 2 * self.n_modes {
            return Err(Error::DimensionMismatch(format!(
                "point length {} vs dimension {}",
                r.len(),
                2 * self.n_modes
            )));
        }
        let eig = self.cov.clone().symmetric_eigen();
        let max_e = eig.eigenvalues.amax();
        let min_e = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if min_e <= 0.0 || max_e / min_e > COND_LIMIT {
            return Err(Error::SingularMatrix(format!(
                "covariance condition number beyond {COND_LIMIT:e}"
            )));
        }
        let det: f64 = eig.eigenvalues.iter().product();
        let inv = self
            .cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::SingularMatrix("covariance not positive definite".into()))?
            .inverse();
        let dr = DVector::from_column_slice(r) - &self.disp;
        let quad = (dr.transpose() * inv * &dr)[(0, 0)];
        let pi_n = std::f64::consts::PI.powi(self.n_modes as i32);
        Ok((-quad).exp() / (pi_n * det.sqrt()))
    }

    /// Plain-text row-major dump of the covariance matrix, one row per line,
    /// `%.17g` formatting.
    pub fn dump_cov(&self) -> String {
        let mut out = String::new();
        for i in 0..self.cov.nrows() {
            let row: Vec<String> = (0..self.cov.ncols())
                .map(|j| crate::fmt_g(self.cov[(i, j)], 17))
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

/// A symplectic matrix acting on a declared subset of modes.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticOp {
    matrix: DMatrix<f64>,
    targets: Vec<usize>,
}

impl SymplecticOp {
    /// Validate `S Omega S^T = Omega` and wrap the matrix.
    pub fn from_matrix(matrix: DMatrix<f64>, targets: Vec<usize>) -> Result<Self> {
        let dim = matrix.nrows();
        if dim != 2 * targets.len() || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix for {} target modes",
                matrix.nrows(),
                matrix.ncols(),
                targets.len()
            )));
        }
        let mut seen = targets.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != targets.len() {
            return Err(Error::InvalidParameter("repeated target mode".into()));
        }
        let omega = symplectic_form(targets.len());
        if max_abs(&(&matrix * &omega * matrix.transpose() - &omega)) > SYM_TOL {
            return Err(Error::NotSymplectic);
        }
        Ok(SymplecticOp { matrix, targets })
    }

    /// Beam splitter of intensity transmittance `T in (0, 1]` mixing two modes.
    pub fn beam_splitter(t: f64, m1: usize, m2: usize) -> Result<Self> {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "beam splitter transmittance {t} outside (0, 1]"
            )));
        }
        let tq = t.sqrt();
        let rq = (1.0 - t).sqrt();
        let m = DMatrix::from_row_slice(
            4,
            4,
            &[
                tq, 0.0, rq, 0.0, //
                0.0, tq, 0.0, rq, //
                -rq, 0.0, tq, 0.0, //
                0.0, -rq, 0.0, tq,
            ],
        );
        SymplecticOp::from_matrix(m, vec![m1, m2])
    }

    /// Single-mode phase shift by `theta` radians.
    pub fn phase_shift(theta: f64, mode: usize) -> Self {
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[theta.cos(), theta.sin(), -theta.sin(), theta.cos()],
        );
        SymplecticOp {
            matrix: m,
            targets: vec![mode],
        }
    }

    /// Single-mode squeezer `diag(e^s, e^{-s})`.
    pub fn squeezer(s: f64, mode: usize) -> Self {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![s.exp(), (-s).exp()]));
        SymplecticOp {
            matrix: m,
            targets: vec![mode],
        }
    }

    /// Two-mode squeezer (nondegenerate parametric amplifier).
    pub fn two_mode_squeezer(s: f64, m1: usize, m2: usize) -> Self {
        let c = s.cosh();
        let sh = s.sinh();
        let m = DMatrix::from_row_slice(
            4,
            4,
            &[
                c, 0.0, sh, 0.0, //
                0.0, c, 0.0, -sh, //
                sh, 0.0, c, 0.0, //
                0.0, -sh, 0.0, c,
            ],
        );
        SymplecticOp {
            matrix: m,
            targets: vec![m1, m2],
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    /// True for orthogonal (photon-number-preserving) transformations.
    pub fn is_passive(&self) -> bool {
        let prod = self.matrix.transpose() * &self.matrix;
        max_abs(&(prod - DMatrix::identity(self.matrix.nrows(), self.matrix.nrows()))) <= SYM_TOL
    }

    /// Embed into the full `2n x 2n` space, identity on untargeted modes.
    pub fn embedded(&self, n_modes: usize) -> Result<DMatrix<f64>> {
        for &m in &self.targets {
            if m >= n_modes {
                return Err(Error::DimensionMismatch(format!(
                    "target mode {m} out of range for {n_modes} modes"
                )));
            }
        }
        let mut full = DMatrix::identity(2 * n_modes, 2 * n_modes);
        let idx: Vec<usize> = self
            .targets
            .iter()
            .flat_map(|&m| [2 * m, 2 * m + 1])
            .collect();
        for (i, &a) in idx.iter().enumerate() {
            for (j, &b) in idx.iter().enumerate() {
                full[(a, b)] = self.matrix[(i, j)];
            }
        }
        Ok(full)
    }
}

/// A trace-preserving Gaussian CP map `g -> A g A^T + G`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianChannel {
    a: DMatrix<f64>,
    g: DMatrix<f64>,
}

impl GaussianChannel {
    /// Validate symmetry of `G` and complete positivity
    /// (`G + i Omega - i A Omega A^T >= 0`), then wrap.
    pub fn new(a: DMatrix<f64>, g: DMatrix<f64>) -> Result<Self> {
        let dim = a.nrows();
        if dim % 2 != 0 || a.ncols() != dim || g.nrows() != dim || g.ncols() != dim {
            return Err(Error::DimensionMismatch("channel matrices".into()));
        }
        if max_abs(&(g.transpose() - &g)) > SYM_TOL {
            return Err(Error::InvalidParameter("G not symmetric".into()));
        }
        let g_eigs = g.clone().symmetric_eigen().eigenvalues;
        if g_eigs.iter().any(|&e| e < -SYM_TOL) {
            return Err(Error::InvalidParameter("G not PSD".into()));
        }
        // CP condition on the Hermitian matrix G + i(Omega - A Omega A^T).
        let omega = symplectic_form(dim / 2);
        let skew = &omega - &a * &omega * a.transpose();
        let cg = DMatrix::from_fn(dim, dim, |i, j| {
            nalgebra::Complex::new(g[(i, j)], skew[(i, j)])
        });
        let eigs = cg.eigenvalues().ok_or_else(|| {
            Error::NumericalFailure("eigen decomposition failed in CP check".into())
        })?;
        if eigs.iter().any(|e| e.re < -1e-9) {
            return Err(Error::NotCompletelyPositive);
        }
        Ok(GaussianChannel { a, g })
    }

    /// Lossy channel of transmittance `eta` on `n` modes:
    /// `A = sqrt(eta) I`, `G = (1 - eta) I`.
    pub fn lossy(eta: f64, n_modes: usize) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "transmittance {eta} outside (0, 1]"
            )));
        }
        let dim = 2 * n_modes;
        Ok(GaussianChannel {
            a: DMatrix::identity(dim, dim) * eta.sqrt(),
            g: DMatrix::identity(dim, dim) * (1.0 - eta),
        })
    }

    /// Detector-noise channel: homodyne loss `eta_bhd` plus electronic noise
    /// `n_el` (shot noise units) on the first `n_signal` modes, per-ancilla
    /// photodetector loss `eta_pd[i]` on the remaining modes.
    pub fn detection_noise(
        eta_bhd: f64,
        n_el: f64,
        n_signal: usize,
        eta_pd: &[f64],
    ) -> Result<Self> {
        if !(eta_bhd > 0.0 && eta_bhd <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "homodyne efficiency {eta_bhd} outside (0, 1]"
            )));
        }
        if n_el < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "negative electronic noise {n_el}"
            )));
        }
        for &e in eta_pd {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "photodetector efficiency {e} outside (0, 1]"
                )));
            }
        }
        let n = n_signal + eta_pd.len();
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        let mut g = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..2 * n_signal {
            a[(i, i)] = eta_bhd.sqrt();
            g[(i, i)] = 1.0 - eta_bhd + n_el;
        }
        for (k, &e) in eta_pd.iter().enumerate() {
            for i in [2 * (n_signal + k), 2 * (n_signal + k) + 1] {
                a[(i, i)] = e.sqrt();
                g[(i, i)] = 1.0 - e;
            }
        }
        Ok(GaussianChannel { a, g })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }
}
