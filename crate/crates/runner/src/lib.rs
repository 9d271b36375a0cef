//! Scenario execution, scaling tables and crypto microbenchmarks behind the
//! `anonbft` command-line tool.

pub mod bench;
pub mod report;

use std::ops::RangeInclusive;
use std::str::FromStr;

use anonbft::Execution;
use anonbft_simnet::{sweep, ConfigError, Protocol, SimConfig, SweepResult, TraceLevel};
use thiserror::Error;

pub use report::{RunRow, ScalingRow};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ArgError {
    #[error("expected a seed range A..B, got {0:?}")]
    SeedRange(String),
    #[error("expected `max` or an integer, got {0:?}")]
    TRule(String),
}

/// Inclusive seed range written `A..B`.
pub fn parse_seeds(s: &str) -> Result<RangeInclusive<u64>, ArgError> {
    let err = || ArgError::SeedRange(s.to_string());
    let (a, b) = s.split_once("..").ok_or_else(err)?;
    let (a, b): (u64, u64) = (
        a.trim().parse().map_err(|_| err())?,
        b.trim().parse().map_err(|_| err())?,
    );
    if a > b {
        return Err(err());
    }
    Ok(a..=b)
}

/// How `t` is chosen for each `n` in scaling and bench tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TRule {
    /// Largest `t` with `n > 3t`.
    Max,
    Fixed(usize),
}

impl TRule {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            TRule::Max => n.saturating_sub(1) / 3,
            TRule::Fixed(t) => t,
        }
    }
}

impl FromStr for TRule {
    type Err = ArgError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "max" {
            return Ok(TRule::Max);
        }
        s.parse()
            .map(TRule::Fixed)
            .map_err(|_| ArgError::TRule(s.to_string()))
    }
}

/// Runs `cfg` once per seed and checks properties.
pub fn run_seeds(
    cfg: &SimConfig,
    seeds: &[u64],
    exec: Execution,
) -> Result<Vec<SweepResult>, ConfigError> {
    sweep(cfg, seeds, exec)
}

/// Fault-free message totals per `n`.
pub fn scaling(
    protocol: Protocol,
    ns: &[usize],
    t: TRule,
    seed: u64,
    exec: Execution,
) -> Result<Vec<ScalingRow>, ConfigError> {
    let configs: Vec<SimConfig> = ns
        .iter()
        .map(|&n| SimConfig {
            trace_level: TraceLevel::Summary,
            ..SimConfig::new(protocol, n, t.resolve(n), seed)
        })
        .collect();
    for c in &configs {
        c.validate()?;
    }
    let rows = anonbft::par::map_coarse(exec, &configs, |c| {
        let out = anonbft_simnet::run(c).expect("validated above");
        let passed = anonbft_simnet::assert_properties(&out).all_passed();
        ScalingRow::new(c, &out.metrics, passed)
    });
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seeds("1..100").unwrap(), 1..=100);
        assert_eq!(parse_seeds("5..5").unwrap(), 5..=5);
        assert!(parse_seeds("5..4").is_err());
        assert!(parse_seeds("7").is_err());
        assert!(parse_seeds("a..b").is_err());
    }

    #[test]
    fn t_rules() {
        assert_eq!("max".parse::<TRule>().unwrap().resolve(10), 3);
        assert_eq!("max".parse::<TRule>().unwrap().resolve(4), 1);
        assert_eq!("2".parse::<TRule>().unwrap().resolve(10), 2);
        assert!("many".parse::<TRule>().is_err());
    }

    #[test]
    fn scaling_is_monotone() {
        let rows = scaling(
            Protocol::Vector,
            &[4, 5, 7],
            TRule::Max,
            0,
            Execution::default(),
        )
        .unwrap();
        assert!(rows
            .windows(2)
            .all(|w| w[0].total_messages < w[1].total_messages));
        assert!(rows.iter().all(|r| r.faulty == 0 && r.properties_passed));
    }
}
