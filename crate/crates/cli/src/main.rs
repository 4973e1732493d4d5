//! `rttc` command-line tool.
//!
//! Exit codes: 0 success, 1 some queries failed (or a backend was
//! unreachable), 2 invalid configuration or input, 3 I/O failure.

mod backends;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rttc_core::model::DEFAULT_EMBED_DIM;
use rttc_core::Error;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "rttc", version, about = "Reward-gated test-time compute routing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Knowledge-base management.
    #[command(subcommand)]
    Kb(KbCommand),
    /// Route a query stream and write outcomes plus metrics.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        /// Outcome JSONL.
        #[arg(long)]
        out: PathBuf,
        /// Metrics JSON [default: <out stem>.metrics.json].
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Warm-start the query-state cache from a dump.
        #[arg(long)]
        qsc_state: Option<PathBuf>,
        /// Write the final query-state cache here.
        #[arg(long)]
        save_qsc_state: Option<PathBuf>,
        /// Worker threads. Values above 1 make cache hits depend on completion
        /// order, so runs with caching are then not reproducible.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Rerun a stream under several reward thresholds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        /// Comma-separated, strictly ascending.
        #[arg(long, value_delimiter = ',', default_value = "2.0,5.0,8.0")]
        taus: Vec<f64>,
        /// Directory for sweep.csv and sweep.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute metrics from an outcome file and print them.
    Report {
        #[arg(long)]
        outcomes: PathBuf,
        /// Cost parameters JSON [default: 1,1,2,5,0.5].
        #[arg(long)]
        cost_params: Option<PathBuf>,
    },
    /// Simulated model backends.
    #[command(subcommand, name = "model-sim")]
    ModelSim(ModelSimCommand),
}

#[derive(Subcommand)]
enum KbCommand {
    /// Embed a JSONL file of {prompt, completion, domain} records into a knowledge-base directory.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EMBED_DIM)]
        dim: usize,
    },
    /// Serve a knowledge-base directory over HTTP.
    Serve {
        #[arg(long)]
        base: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7300")]
        bind: String,
    },
}

#[derive(Subcommand)]
enum ModelSimCommand {
    /// Serve the simulated generator, scorer, embedder and trainer over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7301")]
        bind: String,
        #[arg(long, default_value_t = DEFAULT_EMBED_DIM)]
        dim: usize,
        #[arg(long)]
        reward_script: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 3,
        Error::BackendUnavailable(_) => 1,
        _ => 2,
    }
}

fn failures(n: usize) -> u8 {
    u8::from(n > 0)
}

fn dispatch(cli: Cli) -> rttc_core::Result<u8> {
    match cli.command {
        Command::Kb(KbCommand::Ingest { input, out, dim }) => commands::kb_ingest(&input, &out, dim).map(|_| 0),
        Command::Kb(KbCommand::Serve { base, bind }) => commands::kb_serve(&base, &bind).map(|_| 0),
        Command::ModelSim(ModelSimCommand::Serve {
            bind,
            dim,
            reward_script,
        }) => commands::model_serve(&bind, dim, reward_script.as_deref()).map(|_| 0),
        Command::Run {
            config,
            queries,
            out,
            metrics,
            qsc_state,
            save_qsc_state,
            parallel,
        } => commands::run(commands::RunArgs {
            config: &config,
            queries: &queries,
            out: &out,
            metrics: metrics.as_deref(),
            qsc_state: qsc_state.as_deref(),
            save_qsc_state: save_qsc_state.as_deref(),
            parallel,
        })
        .map(failures),
        Command::Sweep {
            config,
            queries,
            taus,
            out,
        } => commands::sweep(&config, &queries, &taus, &out).map(failures),
        Command::Report { outcomes, cost_params } => {
            let text = commands::report(&outcomes, cost_params.as_deref())?;
            print!("{text}");
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("RTTC_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
