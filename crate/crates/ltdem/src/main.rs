use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ltdem::cli::{self, CliError, RunConfig};

/// Secret key rates for the loss-tolerant three-state QKD protocol with
/// flawed states and mismatched detector efficiencies.
#[derive(Parser)]
#[command(name = "ltdem", version, about)]
struct Cli {
    /// Overrides the `seed` field of the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit dead-time/efficiency parameters to count-rate data.
    FitDetectors {
        /// JSON run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for d0_fit.json / d1_fit.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute both detectors' efficiency operators.
    Tomography {
        #[arg(long)]
        config: PathBuf,
        /// Output JSON file (grams with six decimal places).
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep the secret key rate over channel length.
    Keyrate {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
        /// Optional SVG plot of the rate curves.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Verify the operator identities and inequalities by brute force.
    Proofcheck {
        #[arg(long)]
        config: PathBuf,
        /// Deliberately corrupt a lambda bound (failure-path testing).
        #[arg(long, hide = true)]
        corrupt_lambda: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config_path = match &cli.cmd {
        Cmd::FitDetectors { config, .. }
        | Cmd::Tomography { config, .. }
        | Cmd::Keyrate { config, .. }
        | Cmd::Proofcheck { config, .. } => config.clone(),
    };
    let mut cfg = RunConfig::load(&config_path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.cmd {
        Cmd::FitDetectors { out, .. } => cli::cmd_fit_detectors(&cfg, &out),
        Cmd::Tomography { out, .. } => cli::cmd_tomography(&cfg, &out),
        Cmd::Keyrate { out, svg, .. } => cli::cmd_keyrate(&cfg, &out, svg.as_deref()),
        Cmd::Proofcheck { corrupt_lambda, .. } => {
            let run = cli::cmd_proofcheck(&cfg, corrupt_lambda)?;
            print!("{}", run.table());
            if !run.passed {
                return Err(CliError::Compute(
                    "operator inequality violated beyond tolerance".into(),
                ));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
