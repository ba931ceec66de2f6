//! Headless scenario harness: scripted bots drive the server through the
//! same protocol a client uses, and the harness records what happened.

pub mod bots;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod wire;

pub use bots::{Bot, Signals};
pub use report::{aggregate, Aggregate, Estimate};
pub use runner::{run_probed, run_scenario, run_with, RunMetrics, RunOutput};
pub use scenario::{AccessPath, InvalidScript, Role, ScenarioScript};

/// Runs `runs` copies of `script`, run `i` seeded with `seed + i`.
pub fn run_many(script: &ScenarioScript, runs: u32) -> Result<Vec<RunOutput>, InvalidScript> {
    (0..runs)
        .map(|i| {
            let mut s = script.clone();
            s.seed = script.seed.wrapping_add(u64::from(i));
            run_scenario(&s, i)
        })
        .collect()
}
