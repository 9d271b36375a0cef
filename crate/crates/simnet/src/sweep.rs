//! Many independent runs, optionally spread over a thread pool.

use anonbft::par;
use anonbft::Execution;

use crate::config::{ConfigError, SimConfig};
use crate::props::{assert_properties, PropertyReport};
use crate::sim::run;
use crate::trace::Metrics;

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub seed: u64,
    pub report: PropertyReport,
    pub metrics: Metrics,
    pub exhausted: bool,
}

/// Runs `base` once per seed and checks properties for each run. Results
/// come back in seed order whatever the execution mode.
pub fn sweep(
    base: &SimConfig,
    seeds: &[u64],
    exec: Execution,
) -> Result<Vec<SweepResult>, ConfigError> {
    base.validate()?;
    let results = par::map_coarse(exec, seeds, |&seed| {
        let cfg = SimConfig {
            seed,
            ..base.clone()
        };
        let out = run(&cfg).expect("validated above");
        SweepResult {
            seed,
            report: assert_properties(&out),
            metrics: out.metrics,
            exhausted: out.exhausted,
        }
    });
    Ok(results)
}
