//! `verify`: runs identity scenarios against the built-in Finsler spaces.
//!
//! Exit status: 0 when every identity passes, 1 when any fails, 2 on a
//! configuration or I/O error.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use finsler_conn::fixtures::FIXTURES;
use finsler_conn::verify::{
    emit_transport_trace, run, write_residual_csv, Bound, Overrides, Scenario, VerifyError, BUILTIN_SCENARIOS, REGISTRY,
};

#[derive(Parser)]
#[command(name = "verify", version, about = "Numerical verification of Finsleroid connection identities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file, or a built-in scenario by name.
    Run {
        config: String,
        /// Write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write per-sample residuals here as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Override the sampling seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the fixture dimension (3, 4 or 5).
        #[arg(long)]
        dim: Option<usize>,
        /// Write the transport trace here as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// List fixtures, built-in scenarios and identities.
    List,
}

/// Failures that map to exit status 2.
struct ConfigFailure(anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for ConfigFailure {
    fn from(e: E) -> Self {
        ConfigFailure(e.into())
    }
}

fn load(config: &str) -> Result<Scenario, VerifyError> {
    let path = Path::new(config);
    if !path.exists() {
        if let Some(s) = Scenario::builtin(config) {
            return Ok(s);
        }
    }
    Scenario::load(path)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn run_command(
    config: &str,
    report: Option<PathBuf>,
    csv: Option<PathBuf>,
    overrides: Overrides,
    trace: Option<PathBuf>,
) -> Result<bool, ConfigFailure> {
    let scenario = load(config)?;
    let out = run(&scenario, &overrides)?;
    let r = &out.report;
    for id in &r.identities {
        let worst = id.worst.map(|w| format!("{w:.3e}")).unwrap_or_else(|| "-".into());
        let rel = match id.bound {
            Bound::AtMost => "<=",
            Bound::AtLeast => ">=",
        };
        println!(
            "{} {:<36} worst {:>10} {rel} {:.0e}  ({} samples, {} failed)",
            if id.passed { "PASS" } else { "FAIL" },
            id.id,
            worst,
            id.tolerance,
            id.samples,
            id.failures
        );
        if let Some(e) = &id.error {
            println!("     error: {e}");
        }
    }
    println!(
        "{}: {} of {} identities passed (N = {}, seed {}, {:.1}s)",
        r.scenario,
        r.identities.iter().filter(|i| i.passed).count(),
        r.identities.len(),
        r.environment.dim,
        r.environment.seed,
        r.environment.timings.total_seconds
    );
    if let Some(path) = report {
        std::fs::write(&path, r.to_json() + "\n").with_context(|| format!("cannot write {}", path.display()))?;
    }
    if let Some(path) = csv {
        write_residual_csv(&out.rows, create(&path)?).with_context(|| format!("cannot write {}", path.display()))?;
    }
    if let Some(path) = trace {
        match &out.trace {
            Some(t) => {
                finsler_conn::verify::write_transport_csv(t, create(&path)?)
                    .with_context(|| format!("cannot write {}", path.display()))?;
            }
            // the scenario selected no transport identity
            None => {
                emit_transport_trace(&scenario, &overrides, &path)?;
            }
        }
    }
    Ok(r.passed)
}

fn list() {
    println!("fixtures:");
    for f in FIXTURES {
        println!("  {:<14} {}", f.name, f.description);
    }
    println!("\nbuilt-in scenarios:");
    for (name, _) in BUILTIN_SCENARIOS {
        println!("  {name}");
    }
    println!("\nidentities:");
    for i in REGISTRY {
        println!("  {:<36} {:.0e}  {}", i.id, i.tolerance, i.reference);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            list();
            ExitCode::SUCCESS
        }
        Command::Run { config, report, csv, seed, dim, trace } => {
            match run_command(&config, report, csv, Overrides { seed, dim }, trace) {
                Ok(true) => ExitCode::SUCCESS,
                Ok(false) => ExitCode::from(1),
                Err(ConfigFailure(e)) => {
                    eprintln!("verify: {e:#}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
