use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wied_cli::{load_config, run_diagnose, run_reference, run_solve, run_sweep, CliError, CliResult, Context};

#[derive(Parser)]
#[command(name = "wied", about = "Elliptic-regularization solver for parabolic free boundary problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the weighted energy for one epsilon.
    Solve,
    /// Reference solve plus one minimization per entry of eps_list.
    Sweep,
    /// Implicit Euler reference solve.
    Reference {
        /// Drop the reaction term (plain heat flow).
        #[arg(long)]
        no_reaction: bool,
    },
    /// Diagnostics on a field dump.
    Diagnose {
        #[arg(long)]
        field: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let path = cli
        .config
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let cfg = load_config(&path)?;
    let ctx = Context::new(&cfg, cli.out, cli.quiet)?;
    match cli.command {
        Command::Solve => run_solve(&cfg, &ctx),
        Command::Sweep => run_sweep(&cfg, &ctx).map(|_| ()),
        Command::Reference { no_reaction } => run_reference(&cfg, &ctx, !no_reaction),
        Command::Diagnose { field } => run_diagnose(&cfg, &ctx, &field),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("WIED_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
