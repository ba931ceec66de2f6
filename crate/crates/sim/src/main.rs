use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::Context as _;
use clap::{Parser, Subcommand};
use puffer_sim::{aggregate, report, run_many, AccessPath, ScenarioScript};

#[derive(Parser)]
#[command(
    version,
    about = "Run scripted bot scenarios against the safety arena server"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and print a summary.
    Run {
        scenario: PathBuf,
        /// Base seed; run i uses seed + i. Defaults to the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        runs: u32,
        /// Override the scenario's access path.
        #[arg(long)]
        path: Option<AccessPath>,
        /// Remove every badge from the cast.
        #[arg(long)]
        no_badges: bool,
        /// Write the aggregate table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write the event log as JSON lines.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Run the bots against a live server at this WebSocket URL instead.
        #[arg(long, value_name = "URL")]
        over_wire: Option<String>,
    },
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let Command::Run {
        scenario,
        seed,
        runs,
        path,
        no_badges,
        csv,
        log,
        over_wire,
    } = Cli::parse().command;
    let mut script = ScenarioScript::load(&scenario)?;
    if let Some(s) = seed {
        script.seed = s;
    }
    if let Some(p) = path {
        script.access_path = p;
    }
    script.strip_badges |= no_badges;
    anyhow::ensure!(runs >= 1, "--runs must be at least 1");

    if let Some(url) = over_wire {
        let rt = tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .build()?;
        let summary = rt.block_on(puffer_sim::wire::run_over_wire(&script, &url))?;
        println!("{}", serde_json::to_string_pretty(&summary)?);
        return Ok(());
    }

    let outputs = run_many(&script, runs)?;
    if let Some(p) = log {
        let mut w =
            BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?);
        for line in outputs.iter().flat_map(|o| &o.log) {
            writeln!(w, "{line}")?;
        }
        w.flush()?;
    }
    let metrics: Vec<_> = outputs.into_iter().map(|o| o.metrics).collect();
    let aggs = aggregate(&metrics);
    if let Some(p) = csv {
        let f = File::create(&p).with_context(|| format!("creating {}", p.display()))?;
        report::write_csv(&aggs, f)?;
    }
    print!("{}", report::summary(&aggs));
    Ok(())
}
