use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dispatch_cli::{execute, exit_code, rerun, Command};

#[derive(Debug, Parser)]
#[command(
    name = "dispatch",
    version,
    about = "Input-dispatcher analysis, training and exploration"
)]
struct Cli {
    #[command(subcommand)]
    command: Top,
}

#[derive(Debug, Subcommand)]
enum Top {
    #[command(flatten)]
    Run(Command),
    /// Repeat the run recorded in a run_manifest.json.
    Rerun {
        manifest: PathBuf,
        /// Write outputs here instead of the recorded directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Top::Run(command) => execute(&command),
        Top::Rerun { manifest, out_dir } => rerun(manifest, out_dir),
    };
    match outcome {
        Ok(summary) => {
            print!("{summary}");
            if !summary.ends_with('\n') {
                println!();
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
