//! Truncated Fock-space brute-force engine. Independent of the phase-space
//! pipeline; used to cross-validate conditional states, click probabilities
//! and correlation coefficients at small scale.

use nalgebra::{Complex, DMatrix};
use rayon::prelude::*;

use crate::bell::{BellResult, MeasurementSetting};
use crate::error::{Error, Result};
use crate::scheme::{SchemeIR, SchemeOp, Squeeze};

type C64 = Complex<f64>;

const MAX_HERMITE: usize = 200;
/// Half-width of the quadrature integration window; Gaussian tails beyond
/// |x| = 8 are < 1e-28 for the photon numbers we handle.
const QUAD_HALF_WIDTH: f64 = 8.0;
const QUAD_POINTS: usize = 200;

fn factorials(n: usize) -> Vec<f64> {
    let mut f = vec![1.0; n + 1];
    for i in 1..=n {
        f[i] = f[i - 1] * i as f64;
    }
    f
}

/// Harmonic-oscillator eigenfunction in the vacuum-variance-1/2 convention,
/// psi_0(x) = pi^{-1/4} exp(-x^2/2). Stable normalized recurrence.
pub fn quadrature_wavefunction(n: usize, x: f64) -> f64 {
    assert!(n <= MAX_HERMITE, "quadrature_wavefunction: n > {MAX_HERMITE}");
    let psi0 = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
    if n == 0 {
        return psi0;
    }
    let mut prev = psi0;
    let mut cur = std::f64::consts::SQRT_2 * x * psi0;
    for k in 1..n {
        let next = (2.0 / (k as f64 + 1.0)).sqrt() * x * cur
            - (k as f64 / (k as f64 + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Gauss-Legendre nodes and weights on [-1, 1], Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Tricomi initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 1..n {
                let p2 = ((2 * k + 1) as f64 * x * p1 - k as f64 * p0) / (k as f64 + 1.0);
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Positive-axis quadrature rule on [0, QUAD_HALF_WIDTH].
fn half_axis_rule() -> (Vec<f64>, Vec<f64>) {
    let (gl_x, gl_w) = gauss_legendre(QUAD_POINTS);
    let half = QUAD_HALF_WIDTH / 2.0;
    let xs = gl_x.iter().map(|t| half * (t + 1.0)).collect();
    let ws = gl_w.iter().map(|w| half * w).collect();
    (xs, ws)
}

/// Dense multi-mode state vector with a uniform per-mode cutoff.
#[derive(Debug, Clone)]
pub struct FockStateVector {
    pub n_modes: usize,
    /// per-mode dimension, i.e. max photon number + 1
    pub dim: usize,
    pub amps: Vec<C64>,
}

impl FockStateVector {
    pub fn vacuum(n_modes: usize, n_max: usize) -> Self {
        let dim = n_max + 1;
        let mut amps = vec![C64::new(0.0, 0.0); dim.pow(n_modes as u32)];
        amps[0] = C64::new(1.0, 0.0);
        FockStateVector { n_modes, dim, amps }
    }

    fn stride(&self, mode: usize) -> usize {
        self.dim.pow((self.n_modes - 1 - mode) as u32)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sqr().sqrt();
        if n < 1e-15 {
            return Err(Error::NumericalFailure("zero-norm Fock vector".into()));
        }
        for a in &mut self.amps {
            *a /= n;
        }
        Ok(())
    }

    /// Append one vacuum mode (fastest index).
    pub fn tensor_vacuum(&self) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); self.amps.len() * self.dim];
        for (i, a) in self.amps.iter().enumerate() {
            amps[i * self.dim] = *a;
        }
        FockStateVector {
            n_modes: self.n_modes + 1,
            dim: self.dim,
            amps,
        }
    }

    /// Phase shift by theta on one mode: c_n -> e^{-i n theta} c_n
    /// (Schroedinger action matching the covariance-level rotation).
    pub fn apply_phase_shift(&mut self, mode: usize, theta: f64) {
        let s = self.stride(mode);
        for (i, a) in self.amps.iter_mut().enumerate() {
            let n = (i / s) % self.dim;
            *a *= C64::new(0.0, -(n as f64) * theta).exp();
        }
    }

    /// Beam splitter of intensity transmittance `t` on modes (m1, m2), with
    /// the same mode convention as the covariance-level transform
    /// (x1 -> sqrt(T) x1 + sqrt(1-T) x2). Returns the squared norm lost to
    /// truncation (nonzero only if the total photon number per pair can
    /// exceed the cutoff).
    pub fn apply_beam_splitter(&mut self, m1: usize, m2: usize, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidParameter(format!(
                "beam splitter transmittance {t} outside [0, 1]"
            )));
        }
        // creation operators map as a1+ -> u a1+ + v a2+, a2+ -> w a1+ + z a2+
        let (u, v) = (t.sqrt(), -(1.0 - t).sqrt());
        let (w, z) = ((1.0 - t).sqrt(), t.sqrt());
        let fact = factorials(2 * self.dim);
        let s1 = self.stride(m1);
        let s2 = self.stride(m2);
        let mut out = vec![C64::new(0.0, 0.0); self.amps.len()];
        let mut lost = 0.0;
        for (idx, &c) in self.amps.iter().enumerate() {
            if c.norm_sqr() < 1e-32 {
                continue;
            }
            let n1 = (idx / s1) % self.dim;
            let n2 = (idx / s2) % self.dim;
            let base = idx - n1 * s1 - n2 * s2;
            let norm_in = (fact[n1] * fact[n2]).sqrt();
            for j in 0..=n1 {
                let bj = fact[n1] / (fact[j] * fact[n1 - j]);
                let cj = bj * u.powi(j as i32) * v.powi((n1 - j) as i32);
                for l in 0..=n2 {
                    let bl = fact[n2] / (fact[l] * fact[n2 - l]);
                    let cl = bl * w.powi(l as i32) * z.powi((n2 - l) as i32);
                    let k1 = j + l;
                    let k2 = n1 + n2 - j - l;
                    let coef = cj * cl * (fact[k1] * fact[k2]).sqrt() / norm_in;
                    if k1 >= self.dim || k2 >= self.dim {
                        lost += (c * coef).norm_sqr();
                        continue;
                    }
                    out[base + k1 * s1 + k2 * s2] += c * coef;
                }
            }
        }
        self.amps = out;
        Ok(lost)
    }

    /// Unnormalized ladder action a_mode applied once.
    pub fn annihilate_once(&mut self, mode: usize) {
        let s = self.stride(mode);
        let mut out = vec![C64::new(0.0, 0.0); self.amps.len()];
        for (i, &a) in self.amps.iter().enumerate() {
            let n = (i / s) % self.dim;
            if n > 0 {
                out[i - s] += (n as f64).sqrt() * a;
            }
        }
        self.amps = out;
    }
}

/// Two-mode squeezed vacuum in the number basis, sqrt(1-l^2) l^n |n,n>.
pub fn tms_fock(lambda: f64, n_max: usize) -> Result<FockStateVector> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!(
            "tms_fock: lambda {lambda} outside [0, 1)"
        )));
    }
    let tail = lambda.powi(2 * (n_max as i32 + 1));
    if tail >= 1e-10 {
        return Err(Error::NumericalFailure(format!(
            "tms_fock: truncation tail {tail:.3e} at N={n_max} exceeds 1e-10"
        )));
    }
    let mut st = FockStateVector::vacuum(2, n_max);
    let norm = (1.0 - lambda * lambda).sqrt();
    for n in 0..=n_max {
        st.amps[n * st.dim + n] = C64::new(norm * lambda.powi(n as i32), 0.0);
    }
    st.normalize()?;
    Ok(st)
}

/// Single-mode squeezed vacuum (x-quadrature variance e^{2s}) in the number
/// basis: c_{2n} = (tanh s)^n sqrt((2n)!) / (2^n n! sqrt(cosh s)).
pub fn sms_fock(s: f64, n_max: usize) -> Result<FockStateVector> {
    let mut st = FockStateVector::vacuum(1, n_max);
    let t = s.tanh();
    let fact = factorials(n_max);
    for n in 0..=n_max / 2 {
        let amp = t.powi(n as i32) * fact[2 * n].sqrt() / (2f64.powi(n as i32) * fact[n]);
        st.amps[2 * n] = C64::new(amp, 0.0);
    }
    // the stored amplitudes omit the 1/sqrt(cosh s) normalization, so the
    // untruncated squared norm is exactly cosh(s)
    let norm = st.norm_sqr();
    if (norm - s.cosh()).abs() > 1e-10 * s.cosh() {
        return Err(Error::NumericalFailure(format!(
            "sms_fock: truncation loss {:.3e} at N={n_max}",
            (s.cosh() - norm).abs() / s.cosh()
        )));
    }
    st.normalize()?;
    Ok(st)
}

/// Apply the ladder operator `times` times on `mode`, then renormalize.
pub fn annihilate(state: &FockStateVector, mode: usize, times: usize) -> Result<FockStateVector> {
    let mut st = state.clone();
    for _ in 0..times {
        st.annihilate_once(mode);
    }
    st.normalize()?;
    Ok(st)
}

/// Joint probability density of the rotated quadratures (x_theta on mode 0,
/// x_phi on mode 1) of a two-mode pure state.
pub fn joint_density(state: &FockStateVector, theta: f64, phi: f64, xa: f64, xb: f64) -> f64 {
    assert_eq!(state.n_modes, 2, "joint_density expects a two-mode state");
    let dim = state.dim;
    let psi_a: Vec<f64> = (0..dim).map(|n| quadrature_wavefunction(n, xa)).collect();
    let psi_b: Vec<f64> = (0..dim).map(|n| quadrature_wavefunction(n, xb)).collect();
    let mut amp = C64::new(0.0, 0.0);
    for n in 0..dim {
        let mut inner = C64::new(0.0, 0.0);
        for m in 0..dim {
            let c = state.amps[n * dim + m];
            if c.norm_sqr() > 0.0 {
                inner += c * C64::new(0.0, -(m as f64) * phi).exp() * psi_b[m];
            }
        }
        amp += inner * C64::new(0.0, -(n as f64) * theta).exp() * psi_a[n];
    }
    amp.norm_sqr()
}

/// Sign-binned correlation E(theta, phi) of a two-mode pure state by 2D
/// Gauss-Legendre quadrature, one panel per quadrant.
pub fn fock_correlation(state: &FockStateVector, theta: f64, phi: f64) -> f64 {
    assert_eq!(state.n_modes, 2);
    let dim = state.dim;
    let (xs, ws) = half_axis_rule();
    // wavefunction tables on the positive axis
    let psi: Vec<Vec<f64>> = xs
        .iter()
        .map(|&x| (0..dim).map(|n| quadrature_wavefunction(n, x)).collect())
        .collect();
    // phase-rotated coefficient matrix
    let coeff: Vec<C64> = (0..dim * dim)
        .map(|i| {
            let (n, m) = (i / dim, i % dim);
            state.amps[i] * C64::new(0.0, -(n as f64) * theta - (m as f64) * phi).exp()
        })
        .collect();
    // psi_n(-x) = (-1)^n psi_n(x); fold the four quadrants into products
    // of per-node amplitudes with even/odd reflections.
    let quadrant_sum: Vec<f64> = (0..xs.len())
        .into_par_iter()
        .map(|ia| {
            let mut acc = 0.0;
            for ib in 0..xs.len() {
                let mut amp_pp = C64::new(0.0, 0.0);
                let mut amp_pm = C64::new(0.0, 0.0);
                let mut amp_mp = C64::new(0.0, 0.0);
                let mut amp_mm = C64::new(0.0, 0.0);
                for n in 0..dim {
                    let pa = psi[ia][n];
                    if pa == 0.0 {
                        continue;
                    }
                    let sa = if n % 2 == 0 { 1.0 } else { -1.0 };
                    let mut row_p = C64::new(0.0, 0.0);
                    let mut row_m = C64::new(0.0, 0.0);
                    for m in 0..dim {
                        let c = coeff[n * dim + m];
                        if c.norm_sqr() == 0.0 {
                            continue;
                        }
                        let pb = psi[ib][m];
                        let sb = if m % 2 == 0 { 1.0 } else { -1.0 };
                        row_p += c * pb;
                        row_m += c * (sb * pb);
                    }
                    amp_pp += row_p * pa;
                    amp_pm += row_m * pa;
                    amp_mp += row_p * (sa * pa);
                    amp_mm += row_m * (sa * pa);
                }
                let w = ws[ia] * ws[ib];
                acc += w
                    * (amp_pp.norm_sqr() - amp_pm.norm_sqr() - amp_mp.norm_sqr()
                        + amp_mm.norm_sqr());
            }
            acc
        })
        .collect();
    quadrant_sum.iter().sum()
}

/// Bell-CHSH factor of a two-mode pure state via `fock_correlation`.
pub fn fock_bell_factor(state: &FockStateVector, settings: MeasurementSetting) -> BellResult {
    let e = [
        [
            fock_correlation(state, settings.theta1, settings.phi1),
            fock_correlation(state, settings.theta1, settings.phi2),
        ],
        [
            fock_correlation(state, settings.theta2, settings.phi1),
            fock_correlation(state, settings.theta2, settings.phi2),
        ],
    ];
    BellResult::new(e, 1.0, settings)
}

/// Two-mode density operator in the number basis (row/column index n*dim+m).
#[derive(Debug, Clone)]
pub struct FockDensity {
    pub dim: usize,
    pub mat: DMatrix<C64>,
}

impl FockDensity {
    pub fn from_pure(state: &FockStateVector) -> Self {
        assert_eq!(state.n_modes, 2);
        let d = state.dim * state.dim;
        let v = DMatrix::from_fn(d, 1, |i, _| state.amps[i]);
        FockDensity {
            dim: state.dim,
            mat: &v * v.adjoint(),
        }
    }

    pub fn trace(&self) -> f64 {
        self.mat.diagonal().iter().map(|c| c.re).sum()
    }

    pub fn purity(&self) -> f64 {
        (&self.mat * &self.mat).diagonal().iter().map(|c| c.re).sum()
    }

    /// Joint density of rotated quadratures: u+ rho u with
    /// u = kron(v_theta(xa), v_phi(xb)), v_n(x) = e^{-in theta} psi_n(x).
    pub fn joint_density(&self, theta: f64, phi: f64, xa: f64, xb: f64) -> f64 {
        let dim = self.dim;
        let va: Vec<C64> = (0..dim)
            .map(|n| C64::new(0.0, -(n as f64) * theta).exp() * quadrature_wavefunction(n, xa))
            .collect();
        let vb: Vec<C64> = (0..dim)
            .map(|m| C64::new(0.0, -(m as f64) * phi).exp() * quadrature_wavefunction(m, xb))
            .collect();
        let u = DMatrix::from_fn(dim * dim, 1, |i, _| va[i / dim] * vb[i % dim]);
        (u.adjoint() * &self.mat * &u)[(0, 0)].re
    }

    /// Sign-binned correlation via the factorization
    /// E = sum rho_{(nm),(n'm')} e^{-i((n-n')theta + (m-m')phi)} S_{nn'} S_{mm'},
    /// S_{ab} = integral of sign(x) psi_a psi_b (quadrature on the half axis).
    pub fn correlation(&self, theta: f64, phi: f64) -> f64 {
        let dim = self.dim;
        let sgn = sign_overlaps(dim);
        let mut e = C64::new(0.0, 0.0);
        for n in 0..dim {
            for np in 0..dim {
                if sgn[(n, np)] == 0.0 {
                    continue;
                }
                let pa = C64::new(0.0, -((n as f64) - (np as f64)) * theta).exp() * sgn[(n, np)];
                for m in 0..dim {
                    for mp in 0..dim {
                        if sgn[(m, mp)] == 0.0 {
                            continue;
                        }
                        let r = self.mat[(n * dim + m, np * dim + mp)];
                        if r.norm_sqr() == 0.0 {
                            continue;
                        }
                        e += r
                            * pa
                            * C64::new(0.0, -((m as f64) - (mp as f64)) * phi).exp()
                            * sgn[(m, mp)];
                    }
                }
            }
        }
        e.re
    }

    pub fn bell_factor(&self, settings: MeasurementSetting, success_prob: f64) -> BellResult {
        let e = [
            [
                self.correlation(settings.theta1, settings.phi1),
                self.correlation(settings.theta1, settings.phi2),
            ],
            [
                self.correlation(settings.theta2, settings.phi1),
                self.correlation(settings.theta2, settings.phi2),
            ],
        ];
        BellResult::new(e, success_prob, settings)
    }
}

/// S_{ab} = integral sign(x) psi_a(x) psi_b(x) dx; zero for a+b even by
/// parity, 2 * (half-axis integral) otherwise.
fn sign_overlaps(dim: usize) -> DMatrix<f64> {
    let (xs, ws) = half_axis_rule();
    let psi: Vec<Vec<f64>> = xs
        .iter()
        .map(|&x| (0..dim).map(|n| quadrature_wavefunction(n, x)).collect())
        .collect();
    DMatrix::from_fn(dim, dim, |a, b| {
        if (a + b) % 2 == 0 {
            0.0
        } else {
            2.0 * xs
                .iter()
                .enumerate()
                .map(|(i, _)| ws[i] * psi[i][a] * psi[i][b])
                .sum::<f64>()
        }
    })
}

/// Outcome of the brute-force scheme simulation: conditional two-mode state
/// of the signal modes (a density operator, since single-photon-sensitive
/// clicks on lossy detectors give mixed conditional states) and the overall
/// click probability.
#[derive(Debug, Clone)]
pub struct FockSchemeOutcome {
    pub density: FockDensity,
    pub probability: f64,
    pub truncation_loss: f64,
}

/// Dense simulation of a scheme at per-mode cutoff `n_max` (hard cap 12 for
/// schemes with taps; the tensors are desk-scale by design).
pub fn fock_simulate_scheme(ir: &SchemeIR, n_max: usize) -> Result<FockSchemeOutcome> {
    if ir.n_signal_modes != 2 {
        return Err(Error::InvalidParameter(
            "fock_simulate_scheme supports exactly two signal modes".into(),
        ));
    }
    let n_taps = ir
        .ops
        .iter()
        .filter(|op| matches!(op, SchemeOp::Tap { .. }))
        .count();
    if n_taps > 0 && n_max > 12 {
        return Err(Error::InvalidParameter(format!(
            "fock_simulate_scheme: cutoff {n_max} exceeds the cap of 12 for schemes with taps"
        )));
    }
    let fixed = |s: &Squeeze| -> Result<f64> {
        match s {
            Squeeze::Fixed(v) => Ok(*v),
            Squeeze::Free { .. } => Err(Error::InvalidParameter(
                "fock_simulate_scheme requires fixed squeezing parameters".into(),
            )),
        }
    };

    let dim = n_max + 1;
    let mut state = FockStateVector::vacuum(2, n_max);
    let mut sourced = [false; 2];
    let mut taps: Vec<(usize, f64)> = Vec::new(); // (ancilla mode index, eta_pd)
    let mut detected: Option<Vec<usize>> = None; // tap indices
    let mut post_ops: Vec<(usize, usize, f64, bool)> = Vec::new(); // (m1, m2, param, is_bs)
    let mut loss = 0.0;

    for op in &ir.ops {
        if detected.is_some() {
            // only signal-mode passive ops may follow DETECT
            match op {
                SchemeOp::Bs { m1, m2, t } => post_ops.push((*m1, *m2, *t, true)),
                SchemeOp::Ps { mode, theta } => post_ops.push((*mode, 0, *theta, false)),
                _ => {
                    return Err(Error::InvalidParameter(
                        "only BS/PS may follow DETECT".into(),
                    ))
                }
            }
            continue;
        }
        match op {
            SchemeOp::Tms { m1, m2, s } => {
                if sourced[*m1] || sourced[*m2] {
                    return Err(Error::InvalidParameter(
                        "fock_simulate_scheme: source on a non-vacuum mode".into(),
                    ));
                }
                let lambda = fixed(s)?.tanh();
                let tms = tms_fock(lambda, n_max)?;
                // modes 0,1 are the two slowest indices and the state is
                // still a product with everything else in vacuum
                debug_assert_eq!((*m1, *m2), (0, 1));
                let stride = state.amps.len() / (dim * dim);
                let mut amps = vec![C64::new(0.0, 0.0); state.amps.len()];
                for (i, &a) in tms.amps.iter().enumerate() {
                    amps[i * stride] = a;
                }
                state.amps = amps;
                sourced[*m1] = true;
                sourced[*m2] = true;
            }
            SchemeOp::Sqz { mode, s } => {
                if sourced[*mode] {
                    return Err(Error::InvalidParameter(
                        "fock_simulate_scheme: source on a non-vacuum mode".into(),
                    ));
                }
                let sq = sms_fock(fixed(s)?, n_max)?;
                let stride = state.stride(*mode);
                let mut amps = vec![C64::new(0.0, 0.0); state.amps.len()];
                for (n, &a) in sq.amps.iter().enumerate() {
                    amps[n * stride] = a;
                }
                state.amps = amps;
                sourced[*mode] = true;
            }
            SchemeOp::Bs { m1, m2, t } => {
                loss += state.apply_beam_splitter(*m1, *m2, *t)?;
            }
            SchemeOp::Ps { mode, theta } => state.apply_phase_shift(*mode, *theta),
            SchemeOp::Tap { mode, t, eta_pd } => {
                state = state.tensor_vacuum();
                let anc = state.n_modes - 1;
                loss += state.apply_beam_splitter(*mode, anc, *t)?;
                taps.push((anc, *eta_pd));
            }
            SchemeOp::MixTaps { t1, t2, t } => {
                let a1 = taps[*t1].0;
                let a2 = taps[*t2].0;
                loss += state.apply_beam_splitter(a1, a2, *t)?;
            }
            SchemeOp::Detect { taps: which } => detected = Some(which.clone()),
        }
    }
    if loss > 1e-8 {
        return Err(Error::NumericalFailure(format!(
            "fock_simulate_scheme: truncation loss {loss:.3e} exceeds 1e-8; raise the cutoff"
        )));
    }

    let n_anc = taps.len();
    let (density, probability) = if n_anc == 0 {
        (FockDensity::from_pure(&state), 1.0)
    } else {
        let detected = detected.ok_or_else(|| {
            Error::InvalidParameter("scheme has taps but no DETECT".into())
        })?;
        // click weight per ancilla photon number: 1 - (1-eta)^k for detected
        // taps, 1 (trace-out) otherwise
        let click_w: Vec<Vec<f64>> = (0..n_taps)
            .map(|ti| {
                let eta = taps[ti].1;
                (0..dim)
                    .map(|k| {
                        if detected.contains(&ti) {
                            1.0 - (1.0 - eta).powi(k as i32)
                        } else {
                            1.0
                        }
                    })
                    .collect()
            })
            .collect();
        let d_sig = dim * dim;
        let anc_size = dim.pow(n_anc as u32);
        let mut rho = DMatrix::<C64>::zeros(d_sig, d_sig);
        let mut prob = 0.0;
        let mut v = vec![C64::new(0.0, 0.0); d_sig];
        for anc_idx in 0..anc_size {
            // weight of this ancilla photon-number configuration
            let mut wgt = 1.0;
            let mut rem = anc_idx;
            for ti in (0..n_taps).rev() {
                wgt *= click_w[ti][rem % dim];
                rem /= dim;
            }
            if wgt == 0.0 {
                continue;
            }
            for (si, vi) in v.iter_mut().enumerate() {
                *vi = state.amps[si * anc_size + anc_idx];
            }
            let nrm: f64 = v.iter().map(|c| c.norm_sqr()).sum();
            if nrm < 1e-30 {
                continue;
            }
            prob += wgt * nrm;
            for i in 0..d_sig {
                if v[i].norm_sqr() < 1e-32 {
                    continue;
                }
                for j in 0..d_sig {
                    rho[(i, j)] += wgt * v[i] * v[j].conj();
                }
            }
        }
        if prob < 1e-30 {
            return Err(Error::NumericalFailure(
                "fock_simulate_scheme: zero click probability".into(),
            ));
        }
        rho /= C64::new(prob, 0.0);
        (FockDensity { dim, mat: rho }, prob)
    };

    // post-detection passive ops on the signal modes
    let mut density = density;
    for (m1, m2, p, is_bs) in post_ops {
        let u = if is_bs {
            bs_unitary_2mode(dim, m1, m2, p)
        } else {
            ps_unitary_2mode(dim, m1, p)
        };
        density.mat = &u * &density.mat * u.adjoint();
    }
    Ok(FockSchemeOutcome {
        density,
        probability,
        truncation_loss: loss,
    })
}

/// Dense two-mode beam-splitter unitary (same convention as
/// `apply_beam_splitter`); truncation leaks outside the cutoff are dropped.
fn bs_unitary_2mode(dim: usize, m1: usize, m2: usize, t: f64) -> DMatrix<C64> {
    let mut u = DMatrix::<C64>::zeros(dim * dim, dim * dim);
    for n1 in 0..dim {
        for n2 in 0..dim {
            let mut basis = FockStateVector::vacuum(2, dim - 1);
            basis.amps[n1 * dim + n2] = C64::new(1.0, 0.0);
            basis.amps[0] = if n1 == 0 && n2 == 0 {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            };
            let _ = basis.apply_beam_splitter(m1, m2, t);
            for k in 0..dim * dim {
                u[(k, n1 * dim + n2)] = basis.amps[k];
            }
        }
    }
    u
}

fn ps_unitary_2mode(dim: usize, mode: usize, theta: f64) -> DMatrix<C64> {
    DMatrix::from_fn(dim * dim, dim * dim, |i, j| {
        if i != j {
            return C64::new(0.0, 0.0);
        }
        let n = if mode == 0 { i / dim } else { i % dim };
        C64::new(0.0, -(n as f64) * theta).exp()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn wavefunction_basics() {
        assert_abs_diff_eq!(
            quadrature_wavefunction(0, 0.0),
            std::f64::consts::PI.powf(-0.25),
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(quadrature_wavefunction(1, 0.0), 0.0, epsilon = 1e-14);
        // orthonormality by quadrature
        let (xs, ws) = half_axis_rule();
        for (n, m, want) in [(0, 0, 1.0), (3, 3, 1.0), (2, 4, 0.0), (7, 7, 1.0)] {
            // even-parity products: full-line integral = 2 * half-axis
            let s: f64 = xs
                .iter()
                .zip(&ws)
                .map(|(&x, &w)| w * quadrature_wavefunction(n, x) * quadrature_wavefunction(m, x))
                .sum();
            assert_abs_diff_eq!(2.0 * s, want, epsilon = 1e-10);
        }
    }

    #[test]
    fn gauss_legendre_exactness() {
        let (xs, ws) = gauss_legendre(12);
        assert_abs_diff_eq!(ws.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
        // exact for x^10
        let s: f64 = xs.iter().zip(&ws).map(|(&x, &w)| w * x.powi(10)).sum();
        assert_abs_diff_eq!(s, 2.0 / 11.0, epsilon = 1e-13);
    }

    #[test]
    fn tms_coefficients_and_tail() {
        let st = tms_fock(0.6, 40).unwrap();
        assert_abs_diff_eq!(st.norm_sqr(), 1.0, epsilon = 1e-12);
        let ratio = st.amps[2 * 41 + 2].re / st.amps[41 + 1].re;
        assert_abs_diff_eq!(ratio, 0.6, epsilon = 1e-12);
        assert!(tms_fock(0.6, 8).is_err()); // tail too fat
        let v = tms_fock(0.0, 4).unwrap();
        assert_abs_diff_eq!(v.amps[0].re, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn annihilation_gives_photon_subtracted_coefficients() {
        let st = tms_fock(0.57, 45).unwrap();
        let sub = {
            let s1 = annihilate(&st, 0, 1).unwrap();
            annihilate(&s1, 1, 1).unwrap()
        };
        // c_n proportional to (n+1) lambda^n on |n,n>
        let c0 = sub.amps[0].re;
        let c1 = sub.amps[46 + 1].re;
        let c2 = sub.amps[2 * 46 + 2].re;
        assert_abs_diff_eq!(c1 / c0, 2.0 * 0.57, epsilon = 1e-10);
        assert_abs_diff_eq!(c2 / c0, 3.0 * 0.57f64.powi(2), epsilon = 1e-10);
        assert!(annihilate(&FockStateVector::vacuum(1, 4), 0, 1).is_err());
    }

    #[test]
    fn joint_density_vacuum_and_parity() {
        let vac = FockStateVector::vacuum(2, 6);
        let p = joint_density(&vac, 0.3, -0.7, 0.5, -0.4);
        let want = (std::f64::consts::PI).powi(-1) * (-0.25f64 - 0.16).exp();
        assert_abs_diff_eq!(p, want, epsilon = 1e-12);
        // even-support state: density symmetric under global sign flip
        let st = tms_fock(0.5, 30).unwrap();
        let a = joint_density(&st, 0.4, 0.9, 0.7, 1.1);
        let b = joint_density(&st, 0.4, 0.9, -0.7, -1.1);
        assert_abs_diff_eq!(a, b, epsilon = 1e-14);
    }

    #[test]
    fn vacuum_correlation_vanishes() {
        let vac = FockStateVector::vacuum(2, 4);
        assert_abs_diff_eq!(fock_correlation(&vac, 0.3, 1.1), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn hong_ou_mandel() {
        let mut st = FockStateVector::vacuum(2, 4);
        st.amps[5 + 1] = C64::new(1.0, 0.0); // |1,1>
        st.amps[0] = C64::new(0.0, 0.0);
        st.apply_beam_splitter(0, 1, 0.5).unwrap();
        assert_abs_diff_eq!(st.amps[5 + 1].norm_sqr(), 0.0, epsilon = 1e-24);
        assert_abs_diff_eq!(st.norm_sqr(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn density_matches_pure_paths() {
        let st = {
            let t = tms_fock(0.5, 20).unwrap();
            let s1 = annihilate(&t, 0, 1).unwrap();
            annihilate(&s1, 1, 1).unwrap()
        };
        let rho = FockDensity::from_pure(&st);
        assert_abs_diff_eq!(rho.trace(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rho.purity(), 1.0, epsilon = 1e-12);
        let (th, ph) = (0.25, -0.55);
        assert_abs_diff_eq!(
            rho.joint_density(th, ph, 0.8, -0.3),
            joint_density(&st, th, ph, 0.8, -0.3),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            rho.correlation(th, ph),
            fock_correlation(&st, th, ph),
            epsilon = 1e-8
        );
    }
}
