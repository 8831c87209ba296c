use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use log::error;
use telgraph::runner::{
    cmd_detect, cmd_evaluate, cmd_generate, cmd_report, cmd_train_central, cmd_train_fed, EdgeMode,
    ExperimentConfig,
};
use telgraph::Error;

#[derive(Parser, Debug)]
#[command(
    name = "telgraph",
    version,
    about = "Graph-based fault detection on cell telemetry"
)]
struct Cli {
    /// Experiment config (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Edges {
    Graph,
    None,
}

impl From<Edges> for EdgeMode {
    fn from(e: Edges) -> Self {
        match e {
            Edges::Graph => EdgeMode::Graph,
            Edges::None => EdgeMode::None,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the (annotated) panel, labels and metadata.
    Generate,
    /// Train centrally, detect, and store reference labels.
    TrainCentral {
        #[arg(long, value_enum, default_value_t = Edges::Graph)]
        edges: Edges,
    },
    /// Run the configured federated strategies.
    TrainFed,
    /// Detect with a stored checkpoint.
    Detect {
        /// Checkpoint stem (without extension); `<out>/gnn` by default.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Edges::Graph)]
        edges: Edges,
    },
    /// Score predicted labels against truth labels.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 0)]
        dataset: u8,
    },
    /// Merge centralized and federated reports.
    Report,
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli)?;
    let out: &Path = &cfg.output;
    match cli.command {
        Command::Generate => {
            for p in cmd_generate(&cfg, out)? {
                println!("{}", p.display());
            }
        }
        Command::TrainCentral { edges } => {
            for run in cmd_train_central(&cfg, out, edges.into())? {
                println!(
                    "{}: mse {:.5} precision {:.3} recall {:.3} f1 {:.3}",
                    run.edges.label(),
                    run.train_mse,
                    run.scores.precision,
                    run.scores.recall,
                    run.scores.f1
                );
            }
        }
        Command::TrainFed => {
            let report = cmd_train_fed(&cfg, out)?;
            print!("{}", report.to_csv_string()?);
        }
        Command::Detect { checkpoint, edges } => {
            let stem = checkpoint.unwrap_or_else(|| out.join("gnn"));
            println!("{}", cmd_detect(&cfg, out, &stem, edges.into())?.display());
        }
        Command::Evaluate {
            pred,
            truth,
            dataset,
        } => {
            let eval = cmd_evaluate(&pred, &truth, dataset)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&eval).context("serializing scores")?
            );
        }
        Command::Report => {
            print!("{}", cmd_report(out)?.to_csv_string()?);
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) => 2,
        Some(Error::Divergence(_)) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
