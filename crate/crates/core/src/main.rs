use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lerw_lab::expcli::{self, ExperimentConfig, RunManifest, RunOptions, DEFAULT_OUT, OUT_ENV};
use lerw_lab::{LabError, Result};

#[derive(Parser)]
#[command(name = "lerw-lab", version, about = "Monte Carlo lab for loop-erased random walks")]
struct Cli {
    /// Output directory (overrides the config's `out`).
    #[arg(long, global = true, env = OUT_ENV)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start a run from a TOML config, or repeat the run recorded in a manifest.
    Run {
        #[arg(long, required_unless_present = "from_manifest", conflicts_with = "from_manifest")]
        config: Option<PathBuf>,
        /// Reuse the configuration embedded in an existing manifest.
        #[arg(long)]
        from_manifest: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        chains: Option<u32>,
        /// Stop after this many cells; the run can be resumed later.
        #[arg(long)]
        max_cells: Option<usize>,
    },
    /// Finish an interrupted run; only missing cells are computed.
    Resume {
        /// Manifest to resume (defaults to `<out>/manifest.json`).
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Refuse to resume unless the manifest was made from this config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        max_cells: Option<usize>,
    },
    /// Print the result table and write log-log plot data.
    Report,
    /// Run quick built-in checks.
    Selftest,
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::from_toml(&std::fs::read_to_string(path)?)
}

fn out_dir(cli_out: Option<PathBuf>, cfg: Option<&ExperimentConfig>) -> PathBuf {
    cli_out
        .or_else(|| cfg.and_then(|c| c.out.clone()))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn print_outcome(outcome: &expcli::RunOutcome) {
    println!(
        "{} cells computed, {} of {} complete; results in {}",
        outcome.cells_run,
        outcome.manifest.completed.len(),
        outcome.manifest.cells.len(),
        outcome.dir.display()
    );
    print!("{}", expcli::report::render(&outcome.summary));
}

fn main_inner(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, from_manifest, seed, chains, max_cells } => {
            let mut cfg = match (config, from_manifest) {
                (Some(path), _) => load_config(&path)?,
                (None, Some(m)) => RunManifest::load(&m)?.config(&m)?,
                (None, None) => unreachable!("clap requires one source"),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(c) = chains {
                cfg.chains = c;
            }
            let dir = out_dir(cli.out, Some(&cfg));
            let outcome = expcli::run_experiment(&cfg, &dir, RunOptions { max_cells })?;
            print_outcome(&outcome);
        }
        Command::Resume { manifest, config, max_cells } => {
            let expected = config.as_deref().map(load_config).transpose()?;
            let path = manifest.unwrap_or_else(|| out_dir(cli.out, expected.as_ref()).join(expcli::run::MANIFEST_FILE));
            let outcome = expcli::resume(&path, expected.as_ref(), RunOptions { max_cells })?;
            print_outcome(&outcome);
        }
        Command::Report => {
            print!("{}", expcli::report(&out_dir(cli.out, None))?);
        }
        Command::Selftest => {
            let scratch = out_dir(cli.out, None).join("selftest");
            let checks = expcli::selftest(&scratch)?;
            let mut failed = 0;
            for c in &checks {
                println!("{} {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                failed += usize::from(!c.passed);
            }
            std::fs::remove_dir_all(&scratch).ok();
            if failed > 0 {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(code) => code,
        Err(e @ LabError::Interrupted { .. }) => {
            eprintln!("lerw-lab: {e}; continue with `lerw-lab resume`");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("lerw-lab: {e}");
            ExitCode::FAILURE
        }
    }
}
