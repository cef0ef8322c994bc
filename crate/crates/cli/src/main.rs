use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use ebin_cli::{execute, Command, Overrides, EXIT_CONFIG};

/// Geodesics and stochastic perturbations on the space of Riemannian metrics.
#[derive(Parser, Debug)]
#[command(name = "ebin", version)]
struct Cli {
    /// What to run.
    #[arg(value_enum)]
    command: Command,
    /// Run configuration (flat key = value file).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `mc_samples` from the config.
    #[arg(long)]
    samples: Option<usize>,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress the per-check summary.
    #[arg(long)]
    quiet: bool,
    /// Worker threads for Monte Carlo batches (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides {
        seed: cli.seed,
        samples: cli.samples,
        out: cli.out.clone(),
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("ebin: cannot start thread pool: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let outcome = pool.install(|| execute(cli.command, &cli.config, &overrides));
    if !cli.quiet {
        for c in &outcome.checks {
            println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
    }
    if let Some(e) = &outcome.error {
        eprintln!("ebin: {e}");
    }
    ExitCode::from(outcome.exit_code as u8)
}
