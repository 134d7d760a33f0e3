use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use toric_kahler_cli::commands;
use toric_kahler_cli::config::{parse_sectors, RunConfig};
use toric_kahler_cli::CliError;

#[derive(Parser)]
#[command(name = "toric-kahler", version, about = "Ricci Calabi functional and MA^-1 flow on toric Fano manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Checkpoint to start from.
    #[arg(long, global = true)]
    state: Option<PathBuf>,
    /// Torus weights, e.g. "0,0;1,0;-1,1".
    #[arg(long, global = true)]
    sectors: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Polytope data: volume, barycenter, roots, extremal affine function.
    Analyze,
    /// Run the inverse Monge-Ampere flow.
    Flow,
    /// Kernel of L and the spectrum of Lbar on it.
    Spectrum,
    /// Run the validation suite.
    Validate,
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    if let Some(s) = &cli.sectors {
        cfg.sectors = Some(parse_sectors(s)?);
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Command::Validate = cli.command {
        return commands::validate(&cfg);
    }
    let (cfg, p) = cfg.resolve()?;
    match cli.command {
        Command::Analyze => commands::analyze(&cfg, &p),
        Command::Flow => commands::flow(&cfg, &p, cli.state.as_deref()),
        Command::Spectrum => commands::spectrum(&cfg, &p, cli.state.as_deref()),
        Command::Validate => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("toric-kahler: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
