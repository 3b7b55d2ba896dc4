use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use corrgraph::Slot;
use corrgraph_cli::commands::{self, EvaluateArgs, InspectArgs, PredictArgs, PREDICTIONS_FILE};
use corrgraph_cli::{CliError, RunConfig};

#[derive(Parser)]
#[command(name = "corrgraph", version, about = "Fine-grained prediction from sparse asynchronous sensor streams")]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic deployment, weather, readings and ground truth.
    Simulate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Stream a data directory and write per-node predictions and a state snapshot.
    Predict {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Feature-weight file written by `tune`.
        #[arg(long)]
        beta: Option<PathBuf>,
        /// Continue from a state snapshot, appending to OUT/predictions.csv.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Last anchor slot to predict.
        #[arg(long)]
        until: Option<Slot>,
    },
    /// Fit feature weights on the streamed windows of a data directory.
    Tune {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Weights used while streaming; uniform when omitted.
        #[arg(long)]
        beta: Option<PathBuf>,
    },
    /// Score predictions against ground truth, alongside IDW; or run a sweep manifest.
    Evaluate {
        #[arg(long, required_unless_present = "sweep")]
        data: Option<PathBuf>,
        /// Defaults to OUT/predictions.csv.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Defaults to DATA/truth.csv.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Sweep manifest (TOML with m, windows, seeds, eval_slots).
        #[arg(long, conflicts_with_all = ["data", "predictions", "truth"])]
        sweep: Option<PathBuf>,
    },
    /// Print weight and degree statistics of the graph at one slot.
    InspectGraph {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        slot: Slot,
        #[arg(long)]
        beta: Option<PathBuf>,
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<String, CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match &cli.command {
        Command::Simulate { out } => commands::simulate(&cfg, out),
        Command::Predict { data, out, beta, resume, until } => commands::predict(
            &cfg,
            &PredictArgs { data, out, beta: beta.as_deref(), resume: resume.as_deref(), until: *until },
        ),
        Command::Tune { data, out, beta } => commands::tune(&cfg, data, out, beta.as_deref()),
        Command::Evaluate { sweep: Some(manifest), out, .. } => commands::sweep(&cfg, manifest, out),
        Command::Evaluate { data, predictions, truth, out, sweep: None } => {
            let data = data.as_deref().expect("clap requires --data without --sweep");
            let predictions = predictions.clone().unwrap_or_else(|| out.join(PREDICTIONS_FILE));
            let truth = truth.clone().unwrap_or_else(|| data.join("truth.csv"));
            commands::evaluate(&cfg, &EvaluateArgs { data, predictions: &predictions, truth: &truth, out })
        }
        Command::InspectGraph { data, slot, beta, resume, out } => commands::inspect_graph(
            &cfg,
            &InspectArgs { data, slot: *slot, beta: beta.as_deref(), resume: resume.as_deref(), out: out.as_deref() },
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(msg) => {
            print!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
