use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use puffer_core::Constants;
use puffer_server::config::{default_rooms, load_rooms, parse_constants};

#[derive(Debug, Parser)]
#[command(name = "puffer-server", version, about = "Run the safety arena server")]
struct Args {
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:7878")]
    bind: SocketAddr,
    /// Room configuration (JSON array of {room_id, name, theme_tags, capacity}).
    #[arg(long, env = "PUFFER_CONFIG")]
    rooms: Option<PathBuf>,
    /// Simulation rate in ticks per second.
    #[arg(long, default_value_t = 20)]
    tick_hz: u32,
    /// Constant overrides: a TOML file or inline `key=value,key=value`.
    #[arg(long)]
    constants: Option<String>,
    /// Log filter, e.g. `info` or `puffer_server=debug`.
    #[arg(long, default_value = "info")]
    log_level: String,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_new(&args.log_level)?)
        .init();
    let mut constants = match &args.constants {
        Some(spec) => parse_constants(spec)?,
        None => Constants::default(),
    };
    anyhow::ensure!(args.tick_hz > 0, "--tick-hz must be positive");
    constants.tick_hz = args.tick_hz;
    let seeds = match &args.rooms {
        Some(path) => load_rooms(path).with_context(|| format!("loading {}", path.display()))?,
        None => default_rooms(),
    };
    let server = puffer_server::net::start(args.bind, constants, seeds).await?;
    tokio::select! {
        r = server.handle => r?,
        _ = tokio::signal::ctrl_c() => tracing::info!("shutting down"),
    }
    Ok(())
}
