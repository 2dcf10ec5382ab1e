mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fluxens::spectroscopy::Engine;

/// Transmission spectroscopy of a resonator coupled to a disordered
/// flux-qubit ensemble.
#[derive(Debug, Parser)]
#[command(name = "fluxens", version)]
struct Cli {
    /// Worker threads (0 uses every core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one circuit and print its levels, gap and persistent current.
    Solve(SolveArgs),
    /// Draw an ensemble and write it as CSV.
    Sample(ScenarioArgs),
    /// Compute transmission maps, one per temperature.
    Sweep(ScenarioArgs),
    /// Fit every column of a map and extract the drive profile.
    Fit(FitArgs),
    /// Run a built-in scenario end to end: maps, heatmaps and shift curves.
    Repro(ReproArgs),
}

#[derive(Debug, Clone, Args)]
struct ScenarioArgs {
    /// TOML scenario file.
    #[arg(long, conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// Built-in scenario.
    #[arg(long, value_parser = ["sample-a", "sample-b"])]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    engine: Option<EngineArg>,
    #[arg(long)]
    n_qubits: Option<usize>,
    /// Comma-separated temperatures in mK.
    #[arg(long, value_delimiter = ',')]
    temperatures: Option<Vec<f64>>,
    /// Drive profile CSV (flux_uPhi0, lambda).
    #[arg(long)]
    drive_profile: Option<PathBuf>,
    /// Replay this ensemble CSV instead of sampling.
    #[arg(long)]
    ensemble_in: Option<PathBuf>,
    /// Also write the ensemble used to this path.
    #[arg(long)]
    ensemble_out: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EngineArg {
    Approx,
    Exact,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Approx => Engine::Approx,
            EngineArg::Exact => Engine::Exact,
        }
    }
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Small-junction area; defaults to the scenario's mean.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    beta1: f64,
    #[arg(long, default_value_t = 1.0)]
    beta2: f64,
    /// Unit-junction E_J in GHz; calibrated when omitted.
    #[arg(long)]
    ej_ghz: Option<f64>,
    /// Flux bias f = Φ/Φ₀.
    #[arg(long, default_value_t = 0.5)]
    flux_bias: f64,
    #[arg(long, default_value_t = 2)]
    levels: usize,
    #[arg(long)]
    charge_cutoff: Option<usize>,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Map CSV written by `sweep` or `repro`.
    #[arg(long)]
    map: PathBuf,
    /// Fit an additive baseline as well.
    #[arg(long)]
    fit_offset: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Target {
    SampleA,
    SampleB,
    TempSweep,
}

#[derive(Debug, Args)]
struct ReproArgs {
    target: Target,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    engine: Option<EngineArg>,
    #[arg(long)]
    n_qubits: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    temperatures: Option<Vec<f64>>,
    #[arg(long)]
    drive_profile: Option<PathBuf>,
    #[arg(long)]
    ensemble_in: Option<PathBuf>,
    #[arg(long)]
    ensemble_out: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("FLUXENS_LOG")
        .init();

    let result = fluxens::par::with_threads(cli.threads, || commands::run(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let category = e.category();
            eprintln!("fluxens: error[{}]: {e}", category.as_str());
            ExitCode::from(category.exit_code() as u8)
        }
    }
}
