use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use osatcom_cli::{run, validate, ExperimentConfig};

#[derive(Parser)]
#[command(name = "osatcom", version, about = "Run osatcom link experiments from TOML configs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its CSV and manifest.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, overriding `output_path`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Monte Carlo trials per sweep point (ber_sweep only).
        #[arg(long)]
        trials: Option<usize>,
    },
    /// List every invalid setting in a config without running it.
    Validate { config: PathBuf },
}

fn init_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("OSATCOM_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("OSATCOM_THREADS must be a positive integer (got {value:?})"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }

    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            trials,
        } => {
            let mut cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            cfg.override_with(seed, out, trials);
            match run(&cfg) {
                Ok(report) => {
                    if !cli.quiet {
                        println!("wrote {}", report.csv_path.display());
                        println!("wrote {}", report.manifest_path.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::Validate { config } => match validate(&config) {
            Ok(v) if v.is_empty() => {
                if !cli.quiet {
                    println!("{}: ok", config.display());
                }
                ExitCode::SUCCESS
            }
            Ok(v) => {
                for (name, reason) in v {
                    println!("{name}: {reason}");
                }
                ExitCode::FAILURE
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
    }
}
