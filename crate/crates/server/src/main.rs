use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wayfare_server::cli::{run_replay, run_report, CliError};
use wayfare_server::config::{EngineArgs, ServeArgs};
use wayfare_server::reports::ReportKind;

#[derive(Debug, Parser)]
#[command(name = "wayfare", version, about = "Conversational city-trip recommender")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Drive scripted sessions through the engine and store them.
    Replay {
        /// Script file, or a directory of `*.json` scripts.
        #[arg(long)]
        script: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Compute a report over every stored session.
    Report {
        #[arg(long, value_enum)]
        kind: ReportKind,
        #[arg(long, env = "WAYFARE_DATA_DIR", default_value = "wayfare-data")]
        data_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP API.
    Serve(ServeArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Replay { script, engine } => {
            for summary in run_replay(&engine, &script)? {
                println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
            }
        }
        Command::Report { kind, data_dir, out } => {
            run_report(kind, &data_dir, &out)?;
            eprintln!("wrote {kind} report to {}", out.display());
        }
        Command::Serve(args) => {
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::new("serve", e))?;
            runtime
                .block_on(async {
                    let listener = tokio::net::TcpListener::bind(args.bind).await?;
                    wayfare_server::serve(&args, listener, wayfare_server::shutdown_signal()).await
                })
                .map_err(|e| CliError::new("serve", format!("{e:#}")))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("WAYFARE_LOG").unwrap_or_else(|_| "warn,wayfare=info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wayfare: failed at {e}");
            ExitCode::FAILURE
        }
    }
}
