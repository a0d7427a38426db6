//! Experiment harness behind the `bellsim` command line: deterministic CSV
//! reproduction of the published curves plus free-form parameter sweeps.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::bell::{
    bell_factor, munro_bell_factor, pure_state_model, MeasurementSetting, SubtractionOrder,
};
use crate::conditioning::{subtract_photons, SignedGaussianMixture, Tap};
use crate::error::{Error, Result};
use crate::fmt_g;
use crate::gaussian::GaussianState;
use crate::optimize::optimize_angles;
use crate::scheme;

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Build the conditional state of the paper's standard pipeline:
/// two-mode squeezed vacuum, optional input thermal noise, `k` subtraction
/// taps of transmittance `t` per arm, detection losses, click conditioning.
#[allow(clippy::too_many_arguments)]
pub fn standard_mixture(
    lambda: f64,
    t: f64,
    k_per_arm: usize,
    eta_pd: f64,
    eta_bhd: f64,
    n_el: f64,
    v_noise: f64,
) -> Result<SignedGaussianMixture> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!(
            "lambda {lambda} outside [0, 1)"
        )));
    }
    let mut state = GaussianState::two_mode_squeezed(lambda.atanh());
    if v_noise > 0.0 {
        state = state.add_thermal_noise(v_noise, &[0, 1])?;
    }
    if k_per_arm == 0 {
        let ch = crate::gaussian::GaussianChannel::detection_noise(eta_bhd, n_el, 2, &[])?;
        return SignedGaussianMixture::from_gaussian(&state.apply_channel(&ch)?);
    }
    let mut taps = Vec::new();
    for mode in [0usize, 1] {
        for _ in 0..k_per_arm {
            taps.push(Tap {
                signal_mode: mode,
                transmittance: t,
                eta_pd,
            });
        }
    }
    subtract_photons(&state, &taps, eta_bhd, n_el, None)
}

/// Write a CSV file with `#`-prefixed metadata lines and %.12g numbers.
fn write_csv(
    path: &Path,
    meta: &[(&str, String)],
    header: &[&str],
    rows: &[Vec<f64>],
) -> Result<()> {
    let mut buf = String::new();
    buf.push_str(&format!("# bellsim {VERSION}\n"));
    for (k, v) in meta {
        buf.push_str(&format!("# {k} = {v}\n"));
    }
    buf.push_str(&header.join(","));
    buf.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| fmt_g(*v, 12)).collect();
        buf.push_str(&cells.join(","));
        buf.push('\n');
    }
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(buf.as_bytes())?;
    Ok(())
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Reproduce a published curve as CSV; returns the paths written.
pub fn cmd_reproduce(target: &str, out_dir: &Path, schemes_dir: &Path) -> Result<Vec<PathBuf>> {
    match target {
        "fig2" => {
            // pure-state Bell factor vs T*lambda, one and two photons per arm
            let mut rows = Vec::new();
            for tl in grid(0.02, 0.98, 97) {
                let (c1, _) = pure_state_model(SubtractionOrder::One, 1.0, tl)?;
                let s1 = munro_bell_factor(&c1, MeasurementSetting::canonical(), 1.0)?.s;
                let (c2, _) = pure_state_model(SubtractionOrder::Two, 1.0, tl)?;
                let s2 = munro_bell_factor(&c2, MeasurementSetting::canonical(), 1.0)?.s;
                rows.push(vec![tl, s1, s2]);
            }
            let p = out_dir.join("fig2_pure_state_bell.csv");
            write_csv(
                &p,
                &[("model", "ideal photon subtraction, canonical angles".into())],
                &["T_lambda", "S_one_photon", "S_two_photon"],
                &rows,
            )?;
            Ok(vec![p])
        }
        "fig3" => {
            let p = out_dir.join("fig3_wigner_cut.csv");
            cmd_wigner_cut(0.6, 0.95, "xa", &p)?;
            Ok(vec![p])
        }
        "fig5" => {
            // photodetector efficiency sweep at T=0.99, T*lambda=0.57
            let (t, lambda) = (0.99, 0.57 / 0.99);
            let mut rows = Vec::new();
            for eta_pd in grid(0.05, 1.0, 20) {
                let mix = standard_mixture(lambda, t, 1, eta_pd, 1.0, 0.0, 0.0)?;
                let r = bell_factor(&mix, MeasurementSetting::canonical())?;
                rows.push(vec![eta_pd, r.s, r.success_prob]);
            }
            let p = out_dir.join("fig5_eta_pd.csv");
            write_csv(
                &p,
                &[
                    ("T", fmt_g(t, 12)),
                    ("lambda", fmt_g(lambda, 12)),
                    ("eta_bhd", "1".into()),
                ],
                &["eta_pd", "S", "P_G"],
                &rows,
            )?;
            Ok(vec![p])
        }
        "fig6" => {
            // homodyne efficiency sweep at eta_pd = 0.3
            let (t, lambda, eta_pd) = (0.99, 0.57 / 0.99, 0.3);
            let mut rows = Vec::new();
            for eta_bhd in grid(0.80, 1.0, 81) {
                let mix = standard_mixture(lambda, t, 1, eta_pd, eta_bhd, 0.0, 0.0)?;
                let r = bell_factor(&mix, MeasurementSetting::canonical())?;
                rows.push(vec![eta_bhd, r.s, r.success_prob]);
            }
            let p = out_dir.join("fig6_eta_bhd.csv");
            write_csv(
                &p,
                &[
                    ("T", fmt_g(t, 12)),
                    ("lambda", fmt_g(lambda, 12)),
                    ("eta_pd", fmt_g(eta_pd, 12)),
                ],
                &["eta_bhd", "S", "P_G"],
                &rows,
            )?;
            Ok(vec![p])
        }
        "fig7" => {
            // electronic noise sweep (dB below shot noise) at eta_bhd=0.95
            let (t, lambda, eta_pd, eta_bhd) = (0.99, 0.57 / 0.99, 0.3, 0.95);
            let mut rows = Vec::new();
            for db in 0..=30 {
                let n_el = 10f64.powf(-(db as f64) / 10.0);
                let mix = standard_mixture(lambda, t, 1, eta_pd, eta_bhd, n_el, 0.0)?;
                let r = bell_factor(&mix, MeasurementSetting::canonical())?;
                rows.push(vec![db as f64, n_el, r.s]);
            }
            let p = out_dir.join("fig7_electronic_noise.csv");
            write_csv(
                &p,
                &[
                    ("T", fmt_g(t, 12)),
                    ("lambda", fmt_g(lambda, 12)),
                    ("eta_pd", fmt_g(eta_pd, 12)),
                    ("eta_bhd", fmt_g(eta_bhd, 12)),
                ],
                &["Nel_dB_below_shot_noise", "N_el", "S"],
                &rows,
            )?;
            Ok(vec![p])
        }
        "fig8" => {
            // two- vs four-photon subtraction vs tap transmittance
            let mut rows = Vec::new();
            for t in grid(0.90, 0.995, 20) {
                let l2 = 0.57 / t;
                let l4 = 0.40 / (t * t);
                let m2 = standard_mixture(l2, t, 1, 0.5, 1.0, 0.0, 0.0)?;
                let r2 = bell_factor(&m2, MeasurementSetting::canonical())?;
                let m4 = standard_mixture(l4, t, 2, 0.5, 1.0, 0.0, 0.0)?;
                let r4 = bell_factor(&m4, MeasurementSetting::canonical())?;
                rows.push(vec![t, r2.s, r4.s, r2.success_prob, r4.success_prob]);
            }
            let p = out_dir.join("fig8_four_photon.csv");
            write_csv(
                &p,
                &[
                    ("T_lambda_k2", "0.57".into()),
                    ("T2_lambda_k4", "0.40".into()),
                    ("eta_pd", "0.5".into()),
                ],
                &["T", "S_k2", "S_k4", "P_k2", "P_k4"],
                &rows,
            )?;
            Ok(vec![p])
        }
        "schemes" => {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(schemes_dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "scheme"))
                .collect();
            entries.sort();
            if entries.is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "no .scheme files in {}",
                    schemes_dir.display()
                )));
            }
            let mut report = String::new();
            report.push_str(&format!("# bellsim {VERSION}\n"));
            report.push_str("name,S,P_G,violates\n");
            for path in &entries {
                let text = std::fs::read_to_string(path)?;
                let r = scheme::run_text(&text).map_err(|e| {
                    Error::InvalidParameter(format!("{}: {e}", path.display()))
                })?;
                let name = path.file_stem().unwrap().to_string_lossy();
                report.push_str(&format!(
                    "{name},{},{},{}\n",
                    fmt_g(r.s, 12),
                    fmt_g(r.success_prob, 12),
                    if r.s > 2.0 { 1 } else { 0 }
                ));
            }
            std::fs::create_dir_all(out_dir)?;
            let p = out_dir.join("schemes_report.csv");
            std::fs::write(&p, report)?;
            Ok(vec![p])
        }
        other => Err(Error::InvalidParameter(format!(
            "unknown reproduce target `{other}`"
        ))),
    }
}

/// Axis values of a parameter sweep; every combination is evaluated.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub lambda: Vec<f64>,
    pub t: Vec<f64>,
    pub eta_pd: Vec<f64>,
    pub eta_bhd: Vec<f64>,
    pub n_el: Vec<f64>,
    pub v_noise: Vec<f64>,
    pub k: usize,
    pub optimize: bool,
}

pub fn cmd_sweep(cfg: &SweepConfig, out: &Path) -> Result<()> {
    if cfg.k > 2 {
        return Err(Error::InvalidParameter(
            "k (photons per arm) must be 0, 1 or 2".into(),
        ));
    }
    let mut points = Vec::new();
    for &l in &cfg.lambda {
        for &t in &cfg.t {
            for &epd in &cfg.eta_pd {
                for &ebhd in &cfg.eta_bhd {
                    for &nel in &cfg.n_el {
                        for &vn in &cfg.v_noise {
                            points.push((l, t, epd, ebhd, nel, vn));
                        }
                    }
                }
            }
        }
    }
    // worker pool via rayon; rows re-assembled in grid order
    use rayon::prelude::*;
    let rows: Result<Vec<Vec<f64>>> = points
        .par_iter()
        .map(|&(l, t, epd, ebhd, nel, vn)| {
            let mix = standard_mixture(l, t, cfg.k, epd, ebhd, nel, vn)?;
            let r = if cfg.optimize {
                optimize_angles(&mix)?
            } else {
                bell_factor(&mix, MeasurementSetting::canonical())?
            };
            Ok(vec![l, t, epd, ebhd, nel, vn, cfg.k as f64, r.s, r.success_prob])
        })
        .collect();
    write_csv(
        out,
        &[
            ("k", cfg.k.to_string()),
            (
                "angles",
                if cfg.optimize {
                    "optimized".into()
                } else {
                    "canonical".into()
                },
            ),
        ],
        &[
            "lambda", "T", "eta_pd", "eta_bhd", "N_el", "V_noise", "k", "S", "P_G",
        ],
        &rows?,
    )
}

/// Evaluate one scheme file and return a human-readable report.
pub fn cmd_scheme(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path)?;
    let ir = scheme::parse(&text)?;
    let r = scheme::compile_and_run(&ir)?;
    let a = r.settings.as_array();
    Ok(format!(
        "scheme: {}\nmodes: {}\nS = {}\nP_G = {}\nE = [[{}, {}], [{}, {}]]\n\
         settings = ({}, {}, {}, {})\nverdict: {}\n",
        path.display(),
        ir.mode_names.join(" "),
        fmt_g(r.s, 12),
        fmt_g(r.success_prob, 12),
        fmt_g(r.e[0][0], 12),
        fmt_g(r.e[0][1], 12),
        fmt_g(r.e[1][0], 12),
        fmt_g(r.e[1][1], 12),
        fmt_g(a[0], 12),
        fmt_g(a[1], 12),
        fmt_g(a[2], 12),
        fmt_g(a[3], 12),
        if r.s > 2.0 { "violates" } else { "no violation" }
    ))
}

/// One-dimensional cut of the conditional Wigner function (ideal
/// detectors). `axis` is `xa` (x_A varies, everything else 0), `xb`,
/// `diag` (x_A = x_B = x) or `antidiag` (x_A = -x_B = x); the negativity
/// of the two-photon-subtracted state shows up on `xa` and `antidiag`.
pub fn cmd_wigner_cut(lambda: f64, t: f64, axis: &str, out: &Path) -> Result<()> {
    let mix = standard_mixture(lambda, t, 1, 1.0, 1.0, 0.0, 0.0)?;
    let mut rows = Vec::new();
    for i in 0..=600 {
        let x = -3.0 + 0.01 * i as f64;
        let r = match axis {
            "xa" => [x, 0.0, 0.0, 0.0],
            "xb" => [0.0, 0.0, x, 0.0],
            "diag" => [x, 0.0, x, 0.0],
            "antidiag" => [x, 0.0, -x, 0.0],
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown axis `{other}` (want xa, xb, diag or antidiag)"
                )))
            }
        };
        rows.push(vec![x, mix.wigner(&r)?]);
    }
    write_csv(
        out,
        &[
            ("lambda", fmt_g(lambda, 12)),
            ("T", fmt_g(t, 12)),
            ("axis", axis.into()),
        ],
        &["x", "W"],
        &rows,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wigner_cut_has_negative_values() {
        let dir = std::env::temp_dir().join("bellsim_test_wigner");
        let p = dir.join("cut.csv");
        cmd_wigner_cut(0.6, 0.95, "xa", &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let min: f64 = text
            .lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with('x'))
            .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
            .fold(f64::INFINITY, f64::min)
            ;
        assert!(min < 0.0, "expected a negative Wigner value, min={min}");
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn sweep_k0_never_violates() {
        let dir = std::env::temp_dir().join("bellsim_test_sweep");
        let p = dir.join("sweep.csv");
        let cfg = SweepConfig {
            lambda: vec![0.3, 0.6, 0.9],
            t: vec![1.0],
            eta_pd: vec![1.0],
            eta_bhd: vec![0.9, 1.0],
            n_el: vec![0.0, 0.1],
            v_noise: vec![0.0],
            k: 0,
            optimize: true,
        };
        cmd_sweep(&cfg, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        for line in text.lines().filter(|l| !l.starts_with('#') && !l.starts_with("lambda")) {
            let s: f64 = line.split(',').nth(7).unwrap().parse().unwrap();
            assert!(s <= 2.0 + 1e-6, "Gaussian state gave S={s}");
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn reproduce_rejects_unknown_target() {
        let dir = std::env::temp_dir().join("bellsim_test_unknown");
        assert!(cmd_reproduce("fig99", &dir, Path::new("schemes")).is_err());
    }

    #[test]
    fn csv_output_is_deterministic() {
        let dir = std::env::temp_dir().join("bellsim_test_det");
        let a = dir.join("a.csv");
        let b = dir.join("b.csv");
        cmd_wigner_cut(0.5, 0.97, "xa", &a).unwrap();
        cmd_wigner_cut(0.5, 0.97, "xa", &b).unwrap();
        assert_eq!(
            std::fs::read(&a).unwrap(),
            std::fs::read(&b).unwrap(),
            "byte-identical CSV across runs"
        );
        std::fs::remove_dir_all(&dir).ok();
    }
}
