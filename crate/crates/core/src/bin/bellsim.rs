use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bellsim::error::Error;
use bellsim::experiments::{self, SweepConfig};

#[derive(Parser)]
#[command(name = "bellsim", version, about = "Bell-CHSH violation with homodyne detection: \
simulation and optimization toolkit")]
struct Cli {
    /// Worker threads (default: all cores; env BELLSIM_THREADS)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reproduce a published curve as CSV
    Reproduce {
        /// fig2 | fig3 | fig5 | fig6 | fig7 | fig8 | schemes
        target: String,
        /// Output directory
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Scheme corpus directory (for target `schemes`)
        #[arg(long, default_value = "schemes")]
        schemes_dir: PathBuf,
    },
    /// Sweep pipeline parameters onto a CSV grid
    Sweep(SweepArgs),
    /// Evaluate a .scheme file
    Scheme {
        file: PathBuf,
    },
    /// One-dimensional cut of the conditional Wigner function
    WignerCut {
        #[arg(long)]
        lambda: f64,
        #[arg(long, name = "T")]
        t: f64,
        /// xa | xb | diag | antidiag
        #[arg(long, default_value = "xa")]
        axis: String,
        #[arg(long, default_value = "wigner_cut.csv")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SweepArgs {
    /// Squeezing parameter lambda; single value or lo:hi:n
    #[arg(long, default_value = "0.6")]
    lambda: String,
    /// Tap transmittance T
    #[arg(long, name = "T", default_value = "0.95")]
    t: String,
    #[arg(long, default_value = "1")]
    eta_pd: String,
    #[arg(long, default_value = "1")]
    eta_bhd: String,
    #[arg(long, default_value = "0")]
    nel: String,
    #[arg(long, default_value = "0")]
    vnoise: String,
    /// Photons subtracted per arm (0, 1 or 2)
    #[arg(long, default_value = "1")]
    k: usize,
    /// Optimize the measurement angles per grid point
    #[arg(long)]
    optimize_angles: bool,
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
}

/// `x` or `lo:hi:n` -> a grid of values.
fn parse_axis(s: &str) -> Result<Vec<f64>, Error> {
    let bad = || Error::InvalidParameter(format!("bad axis spec `{s}` (want x or lo:hi:n)"));
    let parts: Vec<&str> = s.split(':').collect();
    match parts.len() {
        1 => Ok(vec![s.parse().map_err(|_| bad())?]),
        3 => {
            let lo: f64 = parts[0].parse().map_err(|_| bad())?;
            let hi: f64 = parts[1].parse().map_err(|_| bad())?;
            let n: usize = parts[2].parse().map_err(|_| bad())?;
            if n < 2 {
                return Err(bad());
            }
            Ok((0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect())
        }
        _ => Err(bad()),
    }
}

fn run(cli: Cli) -> Result<(), (u8, Error)> {
    let threads = cli.threads.or_else(|| {
        std::env::var("BELLSIM_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| (1, Error::InvalidParameter(format!("thread pool: {e}"))))?;
    }
    match cli.command {
        Command::Reproduce {
            target,
            out_dir,
            schemes_dir,
        } => {
            let known = ["fig2", "fig3", "fig5", "fig6", "fig7", "fig8", "schemes"];
            if !known.contains(&target.as_str()) {
                return Err((
                    2,
                    Error::InvalidParameter(format!("unknown reproduce target `{target}`")),
                ));
            }
            let paths = experiments::cmd_reproduce(&target, &out_dir, &schemes_dir)
                .map_err(|e| (1, e))?;
            for p in paths {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Sweep(a) => {
            let cfg = SweepConfig {
                lambda: parse_axis(&a.lambda).map_err(|e| (1, e))?,
                t: parse_axis(&a.t).map_err(|e| (1, e))?,
                eta_pd: parse_axis(&a.eta_pd).map_err(|e| (1, e))?,
                eta_bhd: parse_axis(&a.eta_bhd).map_err(|e| (1, e))?,
                n_el: parse_axis(&a.nel).map_err(|e| (1, e))?,
                v_noise: parse_axis(&a.vnoise).map_err(|e| (1, e))?,
                k: a.k,
                optimize: a.optimize_angles,
            };
            experiments::cmd_sweep(&cfg, &a.out).map_err(|e| (1, e))?;
            println!("{}", a.out.display());
            Ok(())
        }
        Command::Scheme { file } => {
            let report = experiments::cmd_scheme(&file).map_err(|e| (1, e))?;
            print!("{report}");
            Ok(())
        }
        Command::WignerCut {
            lambda,
            t,
            axis,
            out,
        } => {
            experiments::cmd_wigner_cut(lambda, t, &axis, &out).map_err(|e| (1, e))?;
            println!("{}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, e)) => {
            eprintln!("bellsim: {e}");
            ExitCode::from(code)
        }
    }
}
