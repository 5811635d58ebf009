use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use twinrom_cli::commands;
use twinrom_cli::{CliResult, PipelineConfig};

#[derive(Parser)]
#[command(name = "twinrom", version, about = "Reduced-order models of nonlinear vibrating structures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trace FOM frequency responses and write the snapshot bundle.
    Snapshots(Common),
    /// Build the invariant-manifold model and its FRFs.
    Dpim(Common),
    /// Train one DL-ROM per latent dimension.
    Train(Common),
    /// Reconstruct FRFs with the trained DL-ROMs.
    Infer(Common),
    /// Error tables, modal FRFs and manifold diagnostics.
    Report(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

fn load(c: &Common) -> CliResult<(PipelineConfig, PathBuf)> {
    let mut cfg = PipelineConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let out = c.out.clone().unwrap_or_else(|| cfg.out_dir(Path::new("out")));
    Ok((cfg, out))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Snapshots(c) => {
            let (cfg, out) = load(&c)?;
            commands::cmd_snapshots(&cfg, &out).map(|_| ())
        }
        Command::Dpim(c) => {
            let (cfg, out) = load(&c)?;
            commands::cmd_dpim(&cfg, &out).map(|_| ())
        }
        Command::Train(c) => {
            let (cfg, out) = load(&c)?;
            commands::cmd_train(&cfg, &out).map(|_| ())
        }
        Command::Infer(c) => {
            let (cfg, out) = load(&c)?;
            commands::cmd_infer(&cfg, &out)
        }
        Command::Report(c) => {
            let (cfg, out) = load(&c)?;
            commands::cmd_report(&cfg, &out)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("twinrom: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
