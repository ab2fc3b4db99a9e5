use clap::Parser;
use latticewave_cli::{execute, Invocation};
use std::path::PathBuf;

/// Travelling-wave solvers, operator scans and parameter sweeps for fully
/// discrete lattice reaction-diffusion systems.
#[derive(Parser)]
#[command(name = "latticewave", version)]
struct Args {
    /// One of: check-assumptions, solve-semi, solve-wave, sweep,
    /// spectrum-scan, diagnostic, simulate.
    command: String,

    /// Path of the JSON run configuration.
    #[arg(long)]
    config: PathBuf,

    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Worker threads for sweep cells and scan grids.
    #[arg(long)]
    workers: Option<usize>,

    /// Override the configuration's RNG seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the configuration's solver tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

fn main() {
    let args = Args::parse();
    let config_text = match std::fs::read_to_string(&args.config) {
        Ok(text) => text,
        Err(err) => {
            eprintln!("error: cannot read config {:?}: {err}", args.config);
            std::process::exit(1);
        }
    };
    let code = execute(&Invocation {
        command: args.command,
        config_text,
        out_dir: args.out,
        workers: args.workers,
        seed_override: args.seed,
        tol_override: args.tol,
    });
    std::process::exit(code);
}
