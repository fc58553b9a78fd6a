mod commands;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use romd::Error;

#[derive(Parser)]
#[command(name = "romd", version, about = "Full-order and reduced-order Kohn-Sham MD of a water molecule")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct GlobalArgs {
    /// Run configuration (JSON). Built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `paths.output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores). One thread is bitwise reproducible.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Single-point ground state: energies and forces.
    FomScf,
    /// Full-order Born-Oppenheimer MD.
    FomMd,
    /// Solve the training configurations and write the snapshot file.
    RomSample,
    /// Build the reduced basis from the snapshot file.
    RomBasis {
        /// Energy-fraction tolerance; overrides `rom.delta_ef`.
        #[arg(long)]
        delta_ef: Option<f64>,
    },
    /// Reduced-order MD with the stored basis.
    RomMd,
    /// FOM vs ROM forces on a test enumeration.
    CompareForces {
        /// Test plan as `K_L,K_theta`.
        #[arg(long, default_value = "10,10", value_parser = parse_plan)]
        test_plan: (usize, usize),
        /// Random subsample of the test set (seeded by `solver.seed`).
        #[arg(long)]
        subsample: Option<usize>,
    },
    /// Per-step differences and energy metrics of two trajectory CSV files.
    CompareTraj { a: PathBuf, b: PathBuf },
    /// Forces from externally reconstructed orbitals in snapshot format.
    ForceFromWavefunctions {
        /// Snapshot-format file of reconstructed orbitals.
        #[arg(long)]
        input: PathBuf,
        /// Snapshot file to compare against (defaults to `paths.snapshots`).
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Quick invariant checks on small grids.
    Selftest,
}

fn parse_plan(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected K_L,K_theta")?;
    let p = |x: &str| x.trim().parse::<usize>().map_err(|e| e.to_string());
    Ok((p(a)?, p(b)?))
}

/// 0 success, 2 configuration, 3 not converged, 4 I/O or file format.
fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::NotConverged { .. } | Error::DmNotConverged { .. } => 3,
        Error::Io(_)
        | Error::BadMagic
        | Error::VersionMismatch { .. }
        | Error::DimensionMismatch(_)
        | Error::TruncatedFile
        | Error::OrthonormalityLost(_) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let threads = cli.global.threads;
    let result = romd::par::with_threads(threads, || commands::run(&cli.global, &cli.command));
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
