use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod config;
mod report;
mod run;

use run::CliError;

#[derive(Parser)]
#[command(name = "pinchflow", version, about = "Numerical lab for pinched mean curvature flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Worker threads (defaults to all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Directory for summaries, series and snapshots.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Merge summary files into a markdown report on stdout.
    Report { summaries: Vec<PathBuf> },
}

fn run(config: &PathBuf, threads: Option<usize>, out: &PathBuf) -> Result<bool, CliError> {
    let cfg = run::load_config(config)?;
    if let Some(k) = threads {
        if k == 0 {
            return Err(CliError::Validation("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    let artifacts = run::execute(&cfg, out)?;
    for (path, bytes) in &artifacts.files {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    }
    Ok(artifacts.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, threads, out } => run(config, *threads, out),
        Command::Report { summaries } => report::build_report(summaries).map(|md| {
            print!("{md}");
            true
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.status() as u8)
        }
    }
}
