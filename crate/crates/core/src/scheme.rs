//! Line-oriented scheme description language and its compiler onto the
//! Gaussian pipeline.
//!
//! Grammar (one statement per line or `;`-separated, `#` starts a comment):
//!
//! ```text
//! mode A B                        # declare signal modes
//! TMS A B s=0.6931                # two-mode squeezed vacuum source
//! SQZ A s=free                    # single-mode squeezer (s=free / s=-free
//!                                 #   ties the value to the optimizer)
//! BS A B T=0.5                    # beam splitter, intensity transmittance
//! PS A theta=1.5708               # phase shift
//! TAP A T=0.99 eta=0.3            # photon-subtraction tap (eta default 1)
//! MIXTAPS 1 2 T=0.5               # mix two tap ancillas (1-based indices)
//! DETECT *                        # condition on clicks (all taps or list)
//! measure eta_bhd=0.95 nel=0 vnoise=0 settings=canonical
//! ```
//!
//! `settings` is `canonical`, `optimize`, or four comma-separated angles.

use crate::bell::{bell_factor, BellResult, MeasurementSetting};
use crate::conditioning::SignedGaussianMixture;
use crate::error::{Error, ParseErrorKind, Result};
use crate::gaussian::{GaussianChannel, GaussianState, SymplecticOp};
use crate::optimize::{optimize_angles, optimize_squeezing};

/// Squeezing parameter: a literal, or tied to the free optimization
/// variable with a sign (`s=free` / `s=-free`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Squeeze {
    Fixed(f64),
    Free { sign: f64 },
}

impl Squeeze {
    pub fn value(&self, free: Option<f64>) -> Result<f64> {
        match self {
            Squeeze::Fixed(v) => Ok(*v),
            Squeeze::Free { sign } => free.map(|s| sign * s).ok_or_else(|| {
                Error::InvalidParameter("free squeezing parameter left unbound".into())
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SchemeOp {
    Tms { m1: usize, m2: usize, s: Squeeze },
    Sqz { mode: usize, s: Squeeze },
    Bs { m1: usize, m2: usize, t: f64 },
    Ps { mode: usize, theta: f64 },
    Tap { mode: usize, t: f64, eta_pd: f64 },
    MixTaps { t1: usize, t2: usize, t: f64 },
    Detect { taps: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SettingsSpec {
    Canonical,
    Optimize,
    Fixed([f64; 4]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureBlock {
    pub eta_bhd: f64,
    pub n_el: f64,
    pub v_noise: f64,
    pub settings: SettingsSpec,
}

impl Default for MeasureBlock {
    fn default() -> Self {
        MeasureBlock {
            eta_bhd: 1.0,
            n_el: 0.0,
            v_noise: 0.0,
            settings: SettingsSpec::Canonical,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeIR {
    pub mode_names: Vec<String>,
    pub n_signal_modes: usize,
    pub ops: Vec<SchemeOp>,
    pub measure: MeasureBlock,
}

struct Token<'a> {
    text: &'a str,
    line: usize,
    col: usize,
}

fn perr<T>(kind: ParseErrorKind, line: usize, col: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse {
        kind,
        line,
        col,
        msg: msg.into(),
    })
}

fn tokenize(text: &str) -> Vec<Vec<Token<'_>>> {
    let mut stmts = Vec::new();
    for (li, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        let mut col = 1;
        for stmt in line.split(';') {
            let mut toks = Vec::new();
            let base = col;
            let mut off = 0;
            for word in stmt.split_whitespace() {
                let pos = stmt[off..].find(word).unwrap() + off;
                off = pos + word.len();
                toks.push(Token {
                    text: word,
                    line: li + 1,
                    col: base + pos,
                });
            }
            col += stmt.len() + 1;
            if !toks.is_empty() {
                stmts.push(toks);
            }
        }
    }
    stmts
}

/// Split `key=value`, checking the key name.
fn kv<'a>(tok: &'a Token<'a>, key: &str) -> Result<&'a str> {
    match tok.text.split_once('=') {
        Some((k, v)) if k == key => Ok(v),
        Some((k, _)) => perr(
            ParseErrorKind::Syntax,
            tok.line,
            tok.col,
            format!("expected parameter `{key}=`, found `{k}=`"),
        ),
        None => perr(
            ParseErrorKind::Syntax,
            tok.line,
            tok.col,
            format!("expected `{key}=...`, found `{}`", tok.text),
        ),
    }
}

fn parse_f64(tok: &Token<'_>, s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::Parse {
        kind: ParseErrorKind::Syntax,
        line: tok.line,
        col: tok.col,
        msg: format!("not a number: `{s}`"),
    })
}

fn check_range(tok: &Token<'_>, name: &str, v: f64, lo: f64, hi: f64, lo_open: bool) -> Result<f64> {
    let ok = if lo_open { v > lo } else { v >= lo } && v <= hi;
    if ok {
        Ok(v)
    } else {
        perr(
            ParseErrorKind::ParamRange,
            tok.line,
            tok.col,
            format!("{name}={v} outside the physical range"),
        )
    }
}

fn need<'a, 'b>(toks: &'b [Token<'a>], i: usize) -> Result<&'b Token<'a>> {
    toks.get(i).ok_or_else(|| {
        let last = toks.last().unwrap();
        Error::Parse {
            kind: ParseErrorKind::Syntax,
            line: last.line,
            col: last.col + last.text.len(),
            msg: "unexpected end of statement".into(),
        }
    })
}

/// Parse a scheme document into its IR, reporting the first error with its
/// source location.
pub fn parse(text: &str) -> Result<SchemeIR> {
    let stmts = tokenize(text);
    let mut mode_names: Vec<String> = Vec::new();
    let mut ops: Vec<SchemeOp> = Vec::new();
    let mut measure: Option<MeasureBlock> = None;
    let mut n_taps = 0usize;
    let mut detected = false;

    let lookup = |names: &[String], tok: &Token<'_>| -> Result<usize> {
        names
            .iter()
            .position(|n| n == tok.text)
            .ok_or_else(|| Error::Parse {
                kind: ParseErrorKind::ModeRange,
                line: tok.line,
                col: tok.col,
                msg: format!("unknown mode `{}`", tok.text),
            })
    };
    let squeeze = |tok: &Token<'_>, v: &str| -> Result<Squeeze> {
        match v {
            "free" => Ok(Squeeze::Free { sign: 1.0 }),
            "-free" => Ok(Squeeze::Free { sign: -1.0 }),
            _ => Ok(Squeeze::Fixed(parse_f64(tok, v)?)),
        }
    };
    let tap_index = |tok: &Token<'_>, n_taps: usize| -> Result<usize> {
        let i: usize = tok.text.parse().map_err(|_| Error::Parse {
            kind: ParseErrorKind::Syntax,
            line: tok.line,
            col: tok.col,
            msg: format!("expected a tap index, found `{}`", tok.text),
        })?;
        if i == 0 || i > n_taps {
            perr(
                ParseErrorKind::ModeRange,
                tok.line,
                tok.col,
                format!("tap index {i} out of range (have {n_taps} taps)"),
            )
        } else {
            Ok(i - 1)
        }
    };

    for toks in &stmts {
        let head = &toks[0];
        match head.text {
            "mode" => {
                if toks.len() < 2 {
                    return perr(
                        ParseErrorKind::Syntax,
                        head.line,
                        head.col,
                        "mode declaration needs at least one name",
                    );
                }
                for t in &toks[1..] {
                    if mode_names.iter().any(|n| n == t.text) {
                        return perr(
                            ParseErrorKind::Syntax,
                            t.line,
                            t.col,
                            format!("duplicate mode `{}`", t.text),
                        );
                    }
                    mode_names.push(t.text.to_string());
                }
            }
            "TMS" => {
                let m1 = lookup(&mode_names, need(toks, 1)?)?;
                let m2 = lookup(&mode_names, need(toks, 2)?)?;
                let t = need(toks, 3)?;
                let s = squeeze(t, kv(t, "s")?)?;
                ops.push(SchemeOp::Tms { m1, m2, s });
            }
            "SQZ" => {
                let mode = lookup(&mode_names, need(toks, 1)?)?;
                let t = need(toks, 2)?;
                let s = squeeze(t, kv(t, "s")?)?;
                ops.push(SchemeOp::Sqz { mode, s });
            }
            "BS" => {
                // parameter ranges are validated before mode names so that
                // an unphysical T is reported even on undeclared modes
                let tt = need(toks, 3)?;
                let t = check_range(tt, "T", parse_f64(tt, kv(tt, "T")?)?, 0.0, 1.0, false)?;
                let m1 = lookup(&mode_names, need(toks, 1)?)?;
                let m2 = lookup(&mode_names, need(toks, 2)?)?;
                ops.push(SchemeOp::Bs { m1, m2, t });
            }
            "PS" => {
                let mode = lookup(&mode_names, need(toks, 1)?)?;
                let t = need(toks, 2)?;
                let theta = parse_f64(t, kv(t, "theta")?)?;
                ops.push(SchemeOp::Ps { mode, theta });
            }
            "TAP" => {
                let tt = need(toks, 2)?;
                let t = check_range(tt, "T", parse_f64(tt, kv(tt, "T")?)?, 0.0, 1.0, true)?;
                let eta_pd = match toks.get(3) {
                    Some(e) => check_range(e, "eta", parse_f64(e, kv(e, "eta")?)?, 0.0, 1.0, true)?,
                    None => 1.0,
                };
                let mode = lookup(&mode_names, need(toks, 1)?)?;
                ops.push(SchemeOp::Tap { mode, t, eta_pd });
                n_taps += 1;
            }
            "MIXTAPS" => {
                let t1 = tap_index(need(toks, 1)?, n_taps)?;
                let t2 = tap_index(need(toks, 2)?, n_taps)?;
                let t = match toks.get(3) {
                    Some(tt) => {
                        check_range(tt, "T", parse_f64(tt, kv(tt, "T")?)?, 0.0, 1.0, false)?
                    }
                    None => 0.5,
                };
                ops.push(SchemeOp::MixTaps { t1, t2, t });
            }
            "DETECT" => {
                if detected {
                    return perr(
                        ParseErrorKind::Syntax,
                        head.line,
                        head.col,
                        "only one DETECT statement is allowed",
                    );
                }
                let taps = if toks.len() == 2 && toks[1].text == "*" {
                    (0..n_taps).collect()
                } else {
                    let mut v = Vec::new();
                    for t in &toks[1..] {
                        let i = tap_index(t, n_taps)?;
                        if v.contains(&i) {
                            return perr(
                                ParseErrorKind::Syntax,
                                t.line,
                                t.col,
                                format!("tap {} detected twice", t.text),
                            );
                        }
                        v.push(i);
                    }
                    v
                };
                if taps.is_empty() {
                    return perr(
                        ParseErrorKind::Syntax,
                        head.line,
                        head.col,
                        "DETECT needs at least one tap",
                    );
                }
                ops.push(SchemeOp::Detect { taps });
                detected = true;
            }
            "measure" => {
                if measure.is_some() {
                    return perr(
                        ParseErrorKind::Syntax,
                        head.line,
                        head.col,
                        "duplicate measure block",
                    );
                }
                let mut block = MeasureBlock::default();
                let mut saw_settings = false;
                for t in &toks[1..] {
                    let (k, v) = t.text.split_once('=').ok_or_else(|| Error::Parse {
                        kind: ParseErrorKind::Syntax,
                        line: t.line,
                        col: t.col,
                        msg: format!("expected key=value, found `{}`", t.text),
                    })?;
                    match k {
                        "eta_bhd" => {
                            block.eta_bhd =
                                check_range(t, "eta_bhd", parse_f64(t, v)?, 0.0, 1.0, true)?
                        }
                        "nel" => {
                            block.n_el = check_range(t, "nel", parse_f64(t, v)?, 0.0, 1e6, false)?
                        }
                        "vnoise" => {
                            block.v_noise =
                                check_range(t, "vnoise", parse_f64(t, v)?, 0.0, 1e6, false)?
                        }
                        "settings" => {
                            saw_settings = true;
                            block.settings = match v {
                                "canonical" => SettingsSpec::Canonical,
                                "optimize" => SettingsSpec::Optimize,
                                _ => {
                                    let parts: Vec<&str> = v.split(',').collect();
                                    if parts.len() != 4 {
                                        return perr(
                                            ParseErrorKind::Syntax,
                                            t.line,
                                            t.col,
                                            "settings must be canonical, optimize, or four angles",
                                        );
                                    }
                                    let mut a = [0.0; 4];
                                    for (i, p) in parts.iter().enumerate() {
                                        a[i] = parse_f64(t, p)?;
                                    }
                                    SettingsSpec::Fixed(a)
                                }
                            };
                        }
                        _ => {
                            return perr(
                                ParseErrorKind::Syntax,
                                t.line,
                                t.col,
                                format!("unknown measure parameter `{k}`"),
                            )
                        }
                    }
                }
                if !saw_settings {
                    return perr(
                        ParseErrorKind::Syntax,
                        head.line,
                        head.col,
                        "measure block needs settings=",
                    );
                }
                measure = Some(block);
            }
            other => {
                return perr(
                    ParseErrorKind::UnknownOp,
                    head.line,
                    head.col,
                    format!("unknown operation `{other}`"),
                )
            }
        }
    }

    if mode_names.is_empty() {
        return perr(ParseErrorKind::Syntax, 1, 1, "no mode declaration");
    }
    let measure = measure
        .ok_or_else(|| Error::Parse {
            kind: ParseErrorKind::Syntax,
            line: 1,
            col: 1,
            msg: "no measure block".into(),
        })?;
    if n_taps > 0 && !detected {
        return perr(ParseErrorKind::Syntax, 1, 1, "taps present but no DETECT");
    }
    // structural validation: sources before taps is not required, but
    // nothing may act on a tap after its DETECT except BS/PS on signals
    let mut seen_detect = false;
    for op in &ops {
        match op {
            SchemeOp::Detect { .. } => seen_detect = true,
            SchemeOp::Bs { .. } | SchemeOp::Ps { .. } => {}
            _ if seen_detect => {
                return perr(
                    ParseErrorKind::Syntax,
                    1,
                    1,
                    "only BS/PS may follow DETECT",
                )
            }
            _ => {}
        }
    }
    Ok(SchemeIR {
        n_signal_modes: mode_names.len(),
        mode_names,
        ops,
        measure,
    })
}

fn fmt_sq(s: &Squeeze) -> String {
    match s {
        Squeeze::Fixed(v) => crate::fmt_g(*v, 17),
        Squeeze::Free { sign } if *sign >= 0.0 => "free".into(),
        Squeeze::Free { .. } => "-free".into(),
    }
}

/// Canonical text form; `parse(print(ir)) == ir`.
pub fn print(ir: &SchemeIR) -> String {
    let mut out = String::new();
    out.push_str("mode");
    for n in &ir.mode_names {
        out.push(' ');
        out.push_str(n);
    }
    out.push('\n');
    let name = |m: usize| ir.mode_names[m].as_str();
    for op in &ir.ops {
        let line = match op {
            SchemeOp::Tms { m1, m2, s } => {
                format!("TMS {} {} s={}", name(*m1), name(*m2), fmt_sq(s))
            }
            SchemeOp::Sqz { mode, s } => format!("SQZ {} s={}", name(*mode), fmt_sq(s)),
            SchemeOp::Bs { m1, m2, t } => {
                format!("BS {} {} T={}", name(*m1), name(*m2), crate::fmt_g(*t, 17))
            }
            SchemeOp::Ps { mode, theta } => {
                format!("PS {} theta={}", name(*mode), crate::fmt_g(*theta, 17))
            }
            SchemeOp::Tap { mode, t, eta_pd } => format!(
                "TAP {} T={} eta={}",
                name(*mode),
                crate::fmt_g(*t, 17),
                crate::fmt_g(*eta_pd, 17)
            ),
            SchemeOp::MixTaps { t1, t2, t } => {
                format!("MIXTAPS {} {} T={}", t1 + 1, t2 + 1, crate::fmt_g(*t, 17))
            }
            SchemeOp::Detect { taps } => {
                let mut s = String::from("DETECT");
                for t in taps {
                    s.push(' ');
                    s.push_str(&(t + 1).to_string());
                }
                s
            }
        };
        out.push_str(&line);
        out.push('\n');
    }
    let m = &ir.measure;
    out.push_str(&format!(
        "measure eta_bhd={} nel={} vnoise={} settings={}\n",
        crate::fmt_g(m.eta_bhd, 17),
        crate::fmt_g(m.n_el, 17),
        crate::fmt_g(m.v_noise, 17),
        match m.settings {
            SettingsSpec::Canonical => "canonical".to_string(),
            SettingsSpec::Optimize => "optimize".to_string(),
            SettingsSpec::Fixed(a) => a
                .iter()
                .map(|v| crate::fmt_g(*v, 17))
                .collect::<Vec<_>>()
                .join(","),
        }
    ));
    out
}

/// Compile the scheme to the conditional signed Gaussian mixture over the
/// signal modes, binding any free squeezing parameter to `free`.
pub fn compile(ir: &SchemeIR, free: Option<f64>) -> Result<SignedGaussianMixture> {
    let n = ir.n_signal_modes;
    let mut state = GaussianState::vacuum(n);
    // modes still in their initial vacuum: sources there can be implanted
    // from the closed-form covariances instead of going through S I S^T,
    // keeping DSL runs bit-identical to hand-built pipelines
    let mut pristine = vec![true; n];
    let mut taps: Vec<f64> = Vec::new(); // eta_pd per ancilla, in tap order
    let mut detected: Option<Vec<usize>> = None;
    let mut post_ops: Vec<SymplecticOp> = Vec::new();
    let mut in_sources = true;
    let mut noise_added = ir.measure.v_noise == 0.0;

    for op in &ir.ops {
        let is_source = matches!(op, SchemeOp::Tms { .. } | SchemeOp::Sqz { .. });
        if in_sources && !is_source && !noise_added {
            // input mixedness applies to the freshly prepared sources,
            // before any taps or interferometer
            let modes: Vec<usize> = (0..n).collect();
            state = state.add_thermal_noise(ir.measure.v_noise, &modes)?;
            noise_added = true;
        }
        if !is_source {
            in_sources = false;
        }
        if detected.is_some() {
            match op {
                SchemeOp::Bs { m1, m2, t } => {
                    post_ops.push(SymplecticOp::beam_splitter(*t, *m1, *m2)?)
                }
                SchemeOp::Ps { mode, theta } => {
                    post_ops.push(SymplecticOp::phase_shift(*theta, *mode))
                }
                _ => unreachable!("validated at parse time"),
            }
            continue;
        }
        match op {
            SchemeOp::Tms { m1, m2, s } => {
                let sv = s.value(free)?;
                if pristine[*m1] && pristine[*m2] && *m2 == *m1 + 1 {
                    state = implant(&state, &GaussianState::two_mode_squeezed(sv), *m1)?;
                } else {
                    let op = SymplecticOp::two_mode_squeezer(sv, *m1, *m2);
                    state = state.apply_symplectic(&op)?;
                }
                pristine[*m1] = false;
                pristine[*m2] = false;
            }
            SchemeOp::Sqz { mode, s } => {
                let sv = s.value(free)?;
                if pristine[*mode] {
                    state = implant(&state, &GaussianState::single_mode_squeezed(sv), *mode)?;
                } else {
                    state = state.apply_symplectic(&SymplecticOp::squeezer(sv, *mode))?;
                }
                pristine[*mode] = false;
            }
            SchemeOp::Bs { m1, m2, t } => {
                state = state.apply_symplectic(&SymplecticOp::beam_splitter(*t, *m1, *m2)?)?;
                pristine[*m1] = false;
                pristine[*m2] = false;
            }
            SchemeOp::Ps { mode, theta } => {
                state = state.apply_symplectic(&SymplecticOp::phase_shift(*theta, *mode))?;
                pristine[*mode] = false;
            }
            SchemeOp::Tap { mode, t, .. } => {
                pristine[*mode] = false;
                state = state.tensor(&GaussianState::vacuum(1));
                let anc = state.n_modes() - 1;
                state = state.apply_symplectic(&SymplecticOp::beam_splitter(*t, *mode, anc)?)?;
                let eta = match op {
                    SchemeOp::Tap { eta_pd, .. } => *eta_pd,
                    _ => unreachable!(),
                };
                taps.push(eta);
            }
            SchemeOp::MixTaps { t1, t2, t } => {
                state = state
                    .apply_symplectic(&SymplecticOp::beam_splitter(*t, n + t1, n + t2)?)?;
            }
            SchemeOp::Detect { taps: which } => detected = Some(which.clone()),
        }
    }
    if !noise_added {
        let modes: Vec<usize> = (0..n).collect();
        state = state.add_thermal_noise(ir.measure.v_noise, &modes)?;
    }

    let mixture = match detected {
        None => {
            let ch = GaussianChannel::detection_noise(ir.measure.eta_bhd, ir.measure.n_el, n, &[])?;
            SignedGaussianMixture::from_gaussian(&state.apply_channel(&ch)?)?
        }
        Some(which) => {
            let ch = GaussianChannel::detection_noise(
                ir.measure.eta_bhd,
                ir.measure.n_el,
                n,
                &taps,
            )?;
            let noisy = state.apply_channel(&ch)?;
            SignedGaussianMixture::condition_on_clicks(&noisy, n, &which)?
        }
    };
    post_ops
        .iter()
        .try_fold(mixture, |m, op| m.apply_symplectic(op))
}

/// Overwrite the covariance block of `sub` (a freshly prepared source
/// state) at mode offset `at` of `state`, whose modes there are still in
/// vacuum and uncorrelated — exact tensor arithmetic, no matrix products.
fn implant(state: &GaussianState, sub: &GaussianState, at: usize) -> Result<GaussianState> {
    let mut cov = state.cov().clone();
    let d = 2 * sub.n_modes();
    cov.view_mut((2 * at, 2 * at), (d, d)).copy_from(sub.cov());
    GaussianState::from_parts(cov, state.disp().clone())
}

fn free_squeeze_bounds() -> (f64, f64) {
    // lambda = tanh(s) swept over (0.05, 0.95)
    ((0.05f64).atanh(), (0.95f64).atanh())
}

/// Compile and evaluate a scheme: bind any free squeezing via the squeezing
/// optimizer, then evaluate or optimize the measurement settings.
pub fn compile_and_run(ir: &SchemeIR) -> Result<BellResult> {
    let has_free = ir.ops.iter().any(|op| {
        matches!(
            op,
            SchemeOp::Tms {
                s: Squeeze::Free { .. },
                ..
            } | SchemeOp::Sqz {
                s: Squeeze::Free { .. },
                ..
            }
        )
    });
    let eval = |mix: &SignedGaussianMixture| -> Result<BellResult> {
        match ir.measure.settings {
            SettingsSpec::Canonical => bell_factor(mix, MeasurementSetting::canonical()),
            SettingsSpec::Fixed(a) => bell_factor(mix, MeasurementSetting::from_array(a)),
            SettingsSpec::Optimize => optimize_angles(mix),
        }
    };
    if has_free {
        // free squeezing implies angle optimization inside the sweep; the
        // requested settings are applied to the final state
        let (s_opt, result) = optimize_squeezing(|s| compile(ir, Some(s)), free_squeeze_bounds())?;
        if matches!(ir.measure.settings, SettingsSpec::Optimize) {
            Ok(result)
        } else {
            eval(&compile(ir, Some(s_opt))?)
        }
    } else {
        eval(&compile(ir, None)?)
    }
}

/// Convenience wrapper: parse, compile and run in one call.
pub fn run_text(text: &str) -> Result<BellResult> {
    compile_and_run(&parse(text)?)
}
