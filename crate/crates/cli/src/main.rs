use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mfgc_cli::plot::{emit_plots, PlotKind};
use mfgc_cli::{execute, exit_code, Experiment, EXIT_ERROR, EXIT_PASS};

#[derive(Parser)]
#[command(
    name = "mfgc",
    version,
    about = "Mean field games of controls: experiment runner"
)]
struct Cli {
    /// Worker threads (0 = available parallelism). Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (flat TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Cross-player derivatives of the best-response map against N.
    FixedpointDecay(RunArgs),
    /// Sampled monotonicity audits of the model data.
    MonotonicityAudit(RunArgs),
    /// Grid solutions of the Nash system and their cross-player derivatives.
    NashSolve(RunArgs),
    /// Closed-loop simulation and off-diagonal gradient energy.
    SdeNorms(RunArgs),
    /// Master-equation residual of the empirical lifts.
    MasterResidual(RunArgs),
    /// Distance of the N-player lifts to the LQ master field.
    Convergence(RunArgs),
    /// Damped Picard solution of the one-dimensional mean field game.
    MfgPicard(RunArgs),
    /// Runs the experiment named in the config.
    Run(RunArgs),
    /// Renders SVG plots from an experiment CSV.
    Plot {
        csv: PathBuf,
        /// decay, nash-decay, convergence, residual or sde-norms.
        #[arg(long)]
        kind: String,
        /// Directory for the SVG files (defaults to the CSV's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MFGC_LOG", "warn")).init();

    let (experiment, args) = match cli.command {
        Command::FixedpointDecay(a) => (Some(Experiment::FixedpointDecay), a),
        Command::MonotonicityAudit(a) => (Some(Experiment::MonotonicityAudit), a),
        Command::NashSolve(a) => (Some(Experiment::NashSolve), a),
        Command::SdeNorms(a) => (Some(Experiment::SdeNorms), a),
        Command::MasterResidual(a) => (Some(Experiment::MasterResidual), a),
        Command::Convergence(a) => (Some(Experiment::Convergence), a),
        Command::MfgPicard(a) => (Some(Experiment::MfgPicard), a),
        Command::Run(a) => (None, a),
        Command::Plot { csv, kind, out } => {
            let result = kind.parse::<PlotKind>().and_then(|k| {
                let dir =
                    out.unwrap_or_else(|| csv.parent().map(PathBuf::from).unwrap_or_default());
                emit_plots(&csv, k, &dir)
            });
            return match result {
                Ok(paths) => {
                    for p in paths {
                        println!("{}", p.display());
                    }
                    ExitCode::from(EXIT_PASS as u8)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_ERROR as u8)
                }
            };
        }
    };

    let result = mfgc::par::with_workers(cli.workers, || {
        execute(experiment, &args.config, args.seed, args.out)
    });
    match &result {
        Ok(summary) => {
            for c in &summary.checks {
                let status = if c.pass { "pass" } else { "FAIL" };
                println!("{status} {} = {:.6e} ({})", c.name, c.value, c.band);
            }
            println!(
                "{}: {}",
                summary.experiment,
                if summary.pass {
                    "all bands pass"
                } else {
                    "some bands failed"
                }
            );
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
