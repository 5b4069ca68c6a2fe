//! `cellhom`: batch driver for unit-cell homogenization runs.

mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use cellhom::HomogError;
use clap::{Args, Parser, Subcommand};

use config::{close_tasks, RunConfig, Task};

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NONCONVERGENCE: u8 = 3;
const EXIT_INVARIANT: u8 = 4;

#[derive(Parser)]
#[command(name = "cellhom", version, about = "Periodic unit-cell homogenization of elastic media")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Relative solver tolerance (overrides `solver.rel_tol`).
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the tasks listed in the config.
    Run(Common),
    /// Run the full invariant battery and print a pass/fail table.
    Verify(Common),
    /// Write the exterior DtN coefficient table.
    DtnTable(Common),
    /// Compare the long-wave models with Bloch branches.
    BlochCompare(Common),
}

fn exit_code(e: &HomogError) -> u8 {
    match e {
        HomogError::NonConvergence { .. } | HomogError::EigenNonConvergence { .. } => EXIT_NONCONVERGENCE,
        HomogError::ConvexityLost { .. } => EXIT_INVARIANT,
        HomogError::Io(_) | HomogError::Json(_) | HomogError::Compatibility { .. } => EXIT_OTHER,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (common, forced): (Common, Option<Vec<Task>>) = match cli.command {
        Command::Run(c) => (c, None),
        Command::Verify(c) => (c, Some(Vec::new())),
        Command::DtnTable(c) => (c, Some(vec![Task::DtnTable])),
        Command::BlochCompare(c) => (c, Some(vec![Task::BlochCompare])),
    };
    let verify_mode = matches!(forced.as_deref(), Some([]));
    match drive(&common, forced, verify_mode) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn drive(common: &Common, forced: Option<Vec<Task>>, verify_mode: bool) -> Result<u8, HomogError> {
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(HomogError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| HomogError::Config(e.to_string()))?;
    }
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(t) = common.tol {
        cfg.solver.rel_tol = t;
    }
    let mut requested = forced.unwrap_or_else(|| cfg.tasks.clone());
    if verify_mode {
        // everything the config can support
        if cfg.dtn.is_some() {
            requested.push(Task::DtnTable);
        }
        if let (Some(spec), Some(grid)) = (&cfg.medium, cfg.grid) {
            requested.push(Task::Dispersive);
            if cfg.bloch.is_some() {
                requested.push(Task::BlochCompare);
            }
            let medium = cellhom::build_medium(spec, grid)?;
            if cellhom::verify::oracle_axis(spec, &medium).is_some() {
                requested.push(Task::VerifyLaminate);
            }
        }
    }
    if requested.is_empty() {
        return Err(HomogError::Config("no tasks requested".into()));
    }
    let tasks = close_tasks(&requested);
    let out = pipeline::output_dir(&cfg, common.out.clone());
    let outcome = pipeline::execute(&cfg, &tasks, &out)?;
    if let Some(t) = &outcome.table {
        print!("{t}");
    }
    println!("artifacts written to {}", out.display());
    if outcome.manifest.all_passed {
        Ok(0)
    } else {
        for c in outcome.manifest.checks.iter().filter(|c| !c.passed) {
            eprintln!("invariant failed: {} = {:.3e} (threshold {:.1e})", c.name, c.value, c.threshold);
        }
        Ok(EXIT_INVARIANT)
    }
}
