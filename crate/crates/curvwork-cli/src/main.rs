//! `curvwork` — geometric work calculations for driven open two-level
//! systems: curvature maps, cycle work, work-reduction factors, and
//! fluctuating-work statistics, driven from a JSON run configuration.

mod commands;
mod config;
mod error;
mod selfcheck;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use commands::RunContext;
use config::RunConfig;
use error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "curvwork",
    version,
    about = "Geometric thermodynamics of slowly driven open two-level systems",
    after_help = "ACTIONS:\n  run        execute the command named in the config file (default)\n  selfcheck  run the built-in verification probes (exit 3 on failure)\n\nEXIT CODES:\n  0 success, 1 configuration error, 2 runtime/numerical error, 3 selfcheck failure"
)]
struct Cli {
    /// Optional action: "run" (default) or "selfcheck".
    action: Option<String>,

    /// Path to the JSON run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Output directory for tables and scripts (default: current directory).
    #[arg(short, long)]
    out: Option<PathBuf>,

    /// Override the RNG seed from the config.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the quadrature tolerance from the config.
    #[arg(long)]
    tolerance: Option<f64>,

    /// Worker thread count (also settable via CURVWORK_THREADS).
    #[arg(long)]
    threads: Option<usize>,
}

fn configure_threads(flag: Option<usize>) -> Result<(), CliError> {
    let from_env = std::env::var("CURVWORK_THREADS")
        .ok()
        .map(|v| {
            v.parse::<usize>().map_err(|_| {
                CliError::Validation(format!("CURVWORK_THREADS: expected an integer, got {v:?}"))
            })
        })
        .transpose()?;
    if let Some(n) = flag.or(from_env) {
        if n == 0 {
            return Err(CliError::Validation("threads: must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    configure_threads(cli.threads)?;

    match cli.action.as_deref() {
        Some("selfcheck") => return selfcheck::run_selfcheck(),
        Some("run") | None => {}
        Some(other) => {
            return Err(CliError::Validation(format!(
                "unknown action {other:?} (expected \"run\" or \"selfcheck\")"
            )))
        }
    }

    let config_path = cli.config.as_ref().ok_or_else(|| {
        CliError::Validation("--config <FILE> is required (or use the selfcheck action)".into())
    })?;
    let text = std::fs::read_to_string(config_path).map_err(|e| {
        CliError::Validation(format!("cannot read {}: {e}", config_path.display()))
    })?;
    let cfg = RunConfig::from_json(&text)?;
    cfg.validate()?;

    let ctx = RunContext {
        config_text: text,
        out_dir: cli.out.clone().unwrap_or_else(|| PathBuf::from(".")),
        seed_override: cli.seed,
        tolerance_override: cli.tolerance,
    };
    let files = commands::execute(&cfg, &ctx)?;
    for f in &files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("curvwork: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
