//! Simulation and optimization toolkit for Bell-CHSH tests with balanced
//! homodyne detection on photon-subtracted two-mode squeezed vacuum.
//!
//! The analytic pipeline works in phase space: Gaussian states evolve through
//! symplectic transformations and Gaussian CP maps, conditional photon
//! subtraction turns them into signed mixtures of Gaussians, and sign-binned
//! correlations reduce to closed-form orthant integrals. An independent
//! truncated Fock-space engine cross-validates the analytic path at small
//! scale.

pub mod bell;
pub mod conditioning;
pub mod error;
pub mod experiments;
pub mod fock;
pub mod gaussian;
pub mod optimize;
pub mod scheme;

pub use error::{Error, Result};

/// Format a float like C's `%.{sig}g`: `sig` significant digits, fixed or
/// scientific notation depending on magnitude, trailing zeros trimmed.
pub fn fmt_g(v: f64, sig: usize) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    // round to `sig` significant digits first so the exponent test matches C
    let scale = 10f64.powi(sig as i32 - 1 - exp);
    let rounded = (v * scale).round() / scale;
    let exp = rounded.abs().log10().floor() as i32;
    if exp >= -4 && exp < sig as i32 {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        let s = format!("{rounded:.decimals$}");
        trim_zeros(s)
    } else {
        let s = format!("{:.*e}", sig - 1, rounded);
        // split mantissa/exponent, trim mantissa zeros, pad exponent to 2 digits
        let (mant, e) = s.split_once('e').unwrap();
        let mant = trim_zeros(mant.to_string());
        let eval: i32 = e.parse().unwrap();
        let sign = if eval < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", eval.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        t.to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::fmt_g;

    #[test]
    fn fmt_g_matches_c_conventions() {
        assert_eq!(fmt_g(0.0, 12), "0");
        assert_eq!(fmt_g(1.0, 17), "1");
        assert_eq!(fmt_g(-2.5, 12), "-2.5");
        assert_eq!(fmt_g(0.0001, 12), "0.0001");
        assert_eq!(fmt_g(0.00001, 12), "1e-05");
        assert_eq!(fmt_g(2.125, 17), "2.125");
        assert_eq!(fmt_g(1234567890123.0, 12), "1.23456789012e+12");
        assert_eq!(fmt_g(0.1 + 0.2, 12), "0.3");
    }
}
