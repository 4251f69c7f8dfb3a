//! `sheetlab`: batch experiment runner.
//!
//! One subcommand per experiment kind; each reads a JSON configuration,
//! writes CSV results plus a JSON manifest into the output directory, and
//! exits with 0 on success, 1 on a validation failure, and 2 when a module
//! contract is violated by the measured results.

mod config;
mod runner;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;
use runner::{render_list, run, RunOutcome, ValidationError};

#[derive(Parser)]
#[command(
    name = "sheetlab",
    about = "Reproducible experiments on multiparameter Brownian sheets",
    version
)]
struct Cli {
    /// List experiment kinds, their parameters, and the acceptance criteria
    /// they back.
    #[arg(long)]
    list: bool,

    /// With --list: restrict to one kind (errors if unknown).
    #[arg(long)]
    kind: Option<String>,

    /// With --list: emit the descriptor table as JSON.
    #[arg(long)]
    json: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,

    /// Overrides the seed from the configuration file.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory for CSV results and the manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Worker threads (defaults to the available cores). Results are
    /// seed-deterministic at any parallelism degree.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Corner-weight orthogonality, oracle equivalence, sampler agreement.
    VerifyPinning(RunArgs),
    /// Drift telescoping identity and decoupling independence.
    VerifyGirsanov(RunArgs),
    /// Dyadic covering counts and slopes.
    Covering(RunArgs),
    /// Covariance determinant lower bounds.
    Density(RunArgs),
    /// Capacity refinement trends.
    Capacity(RunArgs),
    /// Near-multiple-point phase probabilities.
    Phase(RunArgs),
    /// Hitting probability versus capacity.
    Hitting(RunArgs),
}

impl Command {
    fn kind(&self) -> &'static str {
        match self {
            Command::VerifyPinning(_) => "verify-pinning",
            Command::VerifyGirsanov(_) => "verify-girsanov",
            Command::Covering(_) => "covering",
            Command::Density(_) => "density",
            Command::Capacity(_) => "capacity",
            Command::Phase(_) => "phase",
            Command::Hitting(_) => "hitting",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::VerifyPinning(a)
            | Command::VerifyGirsanov(a)
            | Command::Covering(a)
            | Command::Density(a)
            | Command::Capacity(a)
            | Command::Phase(a)
            | Command::Hitting(a) => a,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if cli.list {
        return match render_list(cli.kind.as_deref(), cli.json) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(ValidationError(msg)) => {
                eprintln!("error: {msg}");
                ExitCode::from(1)
            }
        };
    }

    let Some(command) = cli.command else {
        eprintln!("error: expected a subcommand or --list (see --help)");
        return ExitCode::from(1);
    };

    match execute(&command) {
        Ok(code) => code,
        Err(ValidationError(msg)) => {
            eprintln!("validation error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn execute(command: &Command) -> Result<ExitCode, ValidationError> {
    let args = command.args();
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            return Err(ValidationError("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| ValidationError(format!("cannot configure thread pool: {e}")))?;
    }

    let raw = fs::read_to_string(&args.config)
        .map_err(|e| ValidationError(format!("cannot read {}: {e}", args.config.display())))?;
    let mut config: ExperimentConfig = serde_json::from_str(&raw)
        .map_err(|e| ValidationError(format!("invalid configuration: {e}")))?;
    if config.kind() != command.kind() {
        return Err(ValidationError(format!(
            "configuration kind `{}` does not match subcommand `{}`",
            config.kind(),
            command.kind()
        )));
    }
    if let Some(seed) = args.seed {
        config.set_seed(seed);
    }

    let started = Instant::now();
    let result = run(&config, &args.out);
    let wall_time_ms = started.elapsed().as_millis() as u64;

    match result {
        Ok(outcome) => {
            let status = if outcome.failures.is_empty() {
                "ok"
            } else {
                "contract-violation"
            };
            write_manifest(&config, args, wall_time_ms, status, &outcome)?;
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.failures.is_empty() {
                println!("ok: {} completed in {wall_time_ms} ms", config.kind());
                Ok(ExitCode::SUCCESS)
            } else {
                for failure in &outcome.failures {
                    eprintln!("contract violation: {failure}");
                }
                Ok(ExitCode::from(2))
            }
        }
        Err(err) => {
            // Still leave a manifest behind for the failed attempt.
            let outcome = RunOutcome::default();
            let _ = write_manifest(&config, args, wall_time_ms, "validation-error", &outcome);
            Err(err)
        }
    }
}

fn write_manifest(
    config: &ExperimentConfig,
    args: &RunArgs,
    wall_time_ms: u64,
    status: &str,
    outcome: &RunOutcome,
) -> Result<(), ValidationError> {
    fs::create_dir_all(&args.out)
        .map_err(|e| ValidationError(format!("cannot create {}: {e}", args.out.display())))?;
    let manifest = serde_json::json!({
        "config": config,
        "seed": config.seed(),
        "versions": {
            "sheetlab": sheetlab_version(),
            "sheetlab-cli": env!("CARGO_PKG_VERSION"),
        },
        "wall_time_ms": wall_time_ms,
        "status": status,
        "failures": outcome.failures,
        "files": outcome.files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>(),
    });
    let path = args.out.join("manifest.json");
    fs::write(
        &path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
    )
    .map_err(|e| ValidationError(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn sheetlab_version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}
