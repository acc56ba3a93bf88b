//! `capfuse`: run the live captioning server, replay or record sessions,
//! and query a running server's metrics.

mod offline;
mod server;

use std::net::{IpAddr, Ipv4Addr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use capfuse_core::FusionConfig;
use clap::{Parser, Subcommand};
use thiserror::Error;
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(name = "capfuse", version, about = "Real-time caption and cue fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Accept source and display connections and fuse captions live.
    Serve {
        #[arg(long, default_value_t = Ipv4Addr::LOCALHOST.into())]
        bind: IpAddr,
        #[arg(long, default_value_t = 7001)]
        ingest_port: u16,
        #[arg(long, default_value_t = 7002)]
        client_port: u16,
        /// Serve `/metrics` and `/profiles/{name}` over HTTP on this port.
        #[arg(long)]
        metrics_port: Option<u16>,
        /// TOML file with a `[fusion]` table.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Falls back to `CAPFUSE_PROFILES_DIR`, then `./profiles`.
        #[arg(long)]
        profiles_dir: Option<PathBuf>,
        /// Also record accepted ingest lines to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a session file through the pipeline and write its transcript.
    Replay {
        #[arg(long)]
        input: PathBuf,
        /// Transcript destination.
        #[arg(long)]
        out: PathBuf,
        /// Pacing relative to session time; 0 runs as fast as possible.
        #[arg(long, default_value_t = 0.0)]
        speed: f64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Accept source connections and record what the pipeline accepts.
    Record {
        #[arg(long, default_value_t = Ipv4Addr::LOCALHOST.into())]
        bind: IpAddr,
        #[arg(long, default_value_t = 7001)]
        ingest_port: u16,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print a running server's metrics report.
    Metrics {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 7003)]
        metrics_port: u16,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Bind(String),
    #[error("{0}")]
    Unreachable(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Bind(_) => 3,
            CliError::Unreachable(_) => 4,
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<FusionConfig, CliError> {
    match path {
        None => Ok(FusionConfig::default()),
        Some(p) if !p.exists() => Err(CliError::Usage(format!("config file not found: {}", p.display()))),
        Some(p) => FusionConfig::load(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display()))),
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Failed(format!("cannot start runtime: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Serve {
            bind,
            ingest_port,
            client_port,
            metrics_port,
            config,
            profiles_dir,
            out,
        } => {
            let options = server::Options {
                bind,
                ingest_port,
                client_port: Some(client_port),
                metrics_port,
                config: load_config(config.as_deref())?,
                profiles_dir: profiles_dir.as_deref().map(Path::to_path_buf),
                record: out,
            };
            runtime()?.block_on(server::run(options))
        }
        Command::Record {
            bind,
            ingest_port,
            out,
            config,
        } => {
            let options = server::Options {
                bind,
                ingest_port,
                client_port: None,
                metrics_port: None,
                config: load_config(config.as_deref())?,
                profiles_dir: None,
                record: Some(out),
            };
            runtime()?.block_on(server::run(options))
        }
        Command::Replay {
            input,
            out,
            speed,
            config,
        } => offline::replay(&input, &out, speed, load_config(config.as_deref())?),
        Command::Metrics { host, metrics_port } => runtime()?.block_on(offline::fetch_metrics(&host, metrics_port)),
    }
}

fn main() -> ExitCode {
    let filter = EnvFilter::try_from_env("CAPFUSE_LOG").unwrap_or_else(|_| EnvFilter::new("info"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("capfuse: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
