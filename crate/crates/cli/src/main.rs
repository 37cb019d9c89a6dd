use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hlab_cli::{parse_config, run, write_artifacts, CliError};

/// Runs one Heisenberg-group experiment described by a TOML document.
#[derive(Parser, Debug)]
#[command(name = "hlab", version)]
struct Args {
    /// Experiment configuration.
    config: PathBuf,
    /// Overrides `numerics.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppresses the summary on stdout.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(args: &Args) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.config.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Some(s) = args.seed {
        cfg.numerics.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.output.dir = o.clone();
    }
    let art = run(&cfg)?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string();
    let paths = write_artifacts(&cfg, &art, &cfg.output.dir, &stamp)?;
    if !args.quiet {
        print!("{}", art.summary);
        for p in paths {
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}
