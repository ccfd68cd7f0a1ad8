use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use levelset::commands::{self, ExportFormat};
use levelset::Result;

#[derive(Parser)]
#[command(name = "levelset", version, about = "Adaptive level-set estimation from noisy evaluations")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One adaptive run: checkpoint, ledger, geometry and metadata.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Error and work over a range of final levels.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Geometry from a checkpoint.
    Extract {
        #[arg(long)]
        checkpoint: PathBuf,
        /// segments-csv or obj.
        #[arg(long, default_value = "segments-csv")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that a checkpoint is a consistent partition with approximants.
    Validate {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    match dispatch(cli.command, cli.verbose) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command, verbose: bool) -> Result<()> {
    match command {
        Command::Run { config, out, seed } => {
            let cfg = commands::load_config(&config, seed)?;
            let meta = commands::cmd_run(&cfg, &out, verbose)?;
            println!(
                "wrote {} to {} (L = {}, {} leaves)",
                meta.files.join(", "),
                out.display(),
                meta.max_level.unwrap_or_default(),
                meta.leaf_cells.unwrap_or_default()
            );
        }
        Command::Sweep { config, out, seed } => {
            let cfg = commands::load_config(&config, seed)?;
            let summary = commands::cmd_sweep(&cfg, &out, verbose)?;
            match summary.fitted_slope {
                Some(s) => println!("fitted work-vs-error slope {s:.4} (target {:.4})", summary.target_slope),
                None => println!("single level; no slope fitted"),
            }
        }
        Command::Extract { checkpoint, format, out } => {
            let format = ExportFormat::parse(&format)?;
            let out = out.unwrap_or_else(|| commands::default_extract_path(&checkpoint, format));
            let n = commands::cmd_extract(&checkpoint, format, &out)?;
            println!("wrote {n} pieces to {}", out.display());
        }
        Command::Validate { checkpoint } => {
            let r = commands::cmd_validate(&checkpoint)?;
            println!(
                "ok: {} leaves ({} refined cells stored), volume {} of {} (relative discrepancy {:e})",
                r.leaf_cells, r.history_cells, r.total_volume, r.domain_volume, r.relative_discrepancy
            );
            for (level, n) in &r.leaves_per_level {
                println!("  level {level}: {n} leaves");
            }
        }
    }
    Ok(())
}
