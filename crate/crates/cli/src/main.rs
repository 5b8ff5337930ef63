use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use liquid_ensemble_cli::commands::{
    cmd_compare, cmd_cost_bound, cmd_datasets_list, cmd_pivotal_bound, cmd_sweep, cmd_trace, cmd_train,
    RunOptions,
};
use liquid_ensemble_cli::{default_data_dir, CliError};

#[derive(Parser)]
#[command(name = "liquid-ensemble", version, about = "Delegation-pruned ensemble experiments")]
struct Cli {
    /// Master seed; overrides the config file's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Trials per configuration; overrides the config file's `trials`.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output directory (run commands default to `out`; analysis commands
    /// print to stdout unless given).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// key=value run configuration.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write summary.json, trace.csv, events.csv.
    Train(ConfigArg),
    /// Accuracy over a parameter grid, written to sweep.csv.
    Sweep(ConfigArg),
    /// Delegating, direct and boosted ensembles side by side, in comparison.csv.
    Compare(ConfigArg),
    /// Per-increment accuracy and minimum majority size for each mechanism.
    Trace(ConfigArg),
    /// Analytic lower bound on incremental training cost.
    CostBound {
        #[arg(long, value_delimiter = ',', default_value = "350")]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "10,25,50")]
        n_final: Vec<usize>,
        /// Delegation rates 1 - r.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45,0.5,0.55,0.6,0.65,0.7,0.75,0.8,0.85,0.9,0.95"
        )]
        rates: Vec<f64>,
    },
    /// Upper bound on the fraction of states where every delegation hurts.
    PivotalBound {
        #[arg(long, value_delimiter = ',', default_value = "11,21,31,41,51")]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "11,21,31,41,51")]
        m: Vec<usize>,
    },
    /// Dataset registry commands.
    Datasets {
        #[command(subcommand)]
        action: DatasetsAction,
    },
}

#[derive(Subcommand)]
enum DatasetsAction {
    /// List datasets found in the data directory.
    List,
}

fn emit(out_dir: Option<&PathBuf>, file: &str, text: String) -> Result<(), CliError> {
    match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(file), text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let run_opts = |config: PathBuf| RunOptions {
        config,
        seed: cli.seed,
        trials: cli.trials,
        out_dir: cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("out")),
        data_dir: default_data_dir(),
    };
    match cli.command {
        Command::Train(a) => cmd_train(&run_opts(a.config)),
        Command::Sweep(a) => cmd_sweep(&run_opts(a.config)),
        Command::Compare(a) => cmd_compare(&run_opts(a.config)),
        Command::Trace(a) => cmd_trace(&run_opts(a.config)),
        Command::CostBound { ref n, ref n_final, ref rates } => {
            emit(cli.out_dir.as_ref(), "cost_bound.csv", cmd_cost_bound(n, n_final, rates)?)
        }
        Command::PivotalBound { ref n, ref m } => {
            emit(cli.out_dir.as_ref(), "pivotal_bound.csv", cmd_pivotal_bound(n, m)?)
        }
        Command::Datasets {
            action: DatasetsAction::List,
        } => emit(cli.out_dir.as_ref(), "datasets.csv", cmd_datasets_list(&default_data_dir())?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("configuration error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
