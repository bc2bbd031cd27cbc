//! `homlab`: command-line front end for the two-photon interference toolkit.
//! Every command writes one data artifact and prints a short summary.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use homlab_core::Error;

#[derive(Debug, Parser)]
#[command(name = "homlab", version, about = "Model, simulate and fit two-photon interference between a quantum dot and a laser")]
pub struct Cli {
    /// Scenario file (JSON); the bundled O-band scenario is used when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub scenario: Option<PathBuf>,

    /// Random seed; replaces the scenario seed list with this single seed.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,

    /// Output file (CSV or JSON depending on the command).
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Suppress summary output on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Pol {
    /// Co-polarized (phi = 0).
    Par,
    /// Cross-polarized (phi = pi/2).
    Perp,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Jitter-convolved model g2(tau) at the scenario bin centres [CSV tau_ps,value,sigma].
    ModelCurve {
        /// Polarization branch.
        #[arg(long, value_enum, default_value = "par")]
        phi: Pol,
    },
    /// Draw coincidence delays for both polarizations and histogram them [JSON].
    Simulate(SimulateArgs),
    /// Joint fit of the convolved model to co- and cross-polarized histograms [JSON report].
    Fit(FitArgs),
    /// Visibility (g_par - g_perp) / g_perp per bin [CSV tau_ps,value,sigma].
    Visibility(PairArgs),
    /// Intensity ratio alpha^2/eta (dimensionless) maximising the zero-delay visibility [JSON].
    OptimizeRatio,
    /// Exponential fit of visibility against interferometer delay [JSON report].
    CoherenceFit(CoherenceArgs),
    /// Fourier-limited bandwidth hbar / tau_c in ueV [JSON].
    Bandwidth {
        /// Coherence time tau_c [ps].
        #[arg(long, value_name = "PS")]
        tau_c: f64,
    },
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Number of coincidence pairs per polarization [pairs].
    #[arg(long, value_name = "N", default_value_t = 1_000_000)]
    pub pairs: u64,
    /// Co-polarized histogram output [JSON]; defaults to `<out stem>_par.json`.
    #[arg(long, value_name = "PATH")]
    pub out_par: Option<PathBuf>,
    /// Cross-polarized histogram output [JSON]; defaults to `<out stem>_perp.json`.
    #[arg(long, value_name = "PATH")]
    pub out_perp: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PairArgs {
    /// Co-polarized histogram [JSON].
    #[arg(long, value_name = "PATH")]
    pub par: PathBuf,
    /// Cross-polarized histogram [JSON].
    #[arg(long, value_name = "PATH")]
    pub perp: PathBuf,
    /// Width of each normalization tail window [ps]; default 20% of the half range.
    #[arg(long, value_name = "PS")]
    pub tail_window: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// Parameters to vary (alpha2_over_eta, beta_over_eta, g0, tau_r_ps, tau_c_ps, sigma_j_ps, phi_rad).
    #[arg(long, value_delimiter = ',', value_name = "NAMES",
          default_value = "alpha2_over_eta,g0,tau_r_ps,sigma_j_ps")]
    pub free: Vec<String>,
    /// Parameters to hold at their scenario values, removed from --free (tau_c is held by default).
    #[arg(long, value_delimiter = ',', value_name = "NAMES")]
    pub freeze: Vec<String>,
    /// Report path [JSON]; same as --out.
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
    /// Maximum damped least-squares iterations [count].
    #[arg(long, value_name = "N", default_value_t = 500)]
    pub max_iterations: usize,
}

#[derive(Debug, Args)]
pub struct CoherenceArgs {
    /// Measurements [CSV delay_ps,visibility,sigma].
    #[arg(long, value_name = "PATH")]
    pub points: PathBuf,
    /// Hold the zero-delay amplitude at 1 (dimensionless) instead of fitting it.
    #[arg(long)]
    pub fixed_amplitude: bool,
}

/// Exit status for a library error: 1 invalid input, 2 runtime failure,
/// 3 fit failure.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonConvergence { .. } | Error::SingularNormalMatrix { .. } => 3,
        Error::Io { .. }
        | Error::Capacity { .. }
        | Error::Regime { .. }
        | Error::TailMeanZero
        | Error::NoInteriorMaximum { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(&cli) {
        Ok(lines) => {
            if !cli.quiet {
                for l in lines {
                    println!("{l}");
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
