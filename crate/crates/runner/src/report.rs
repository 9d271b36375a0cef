//! CSV rows. Column names are the serde field names.

use std::io::Write;

use anonbft_simnet::{Metrics, PropertyReport, SimConfig, SweepResult};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub scenario: String,
    pub protocol: String,
    pub n: usize,
    pub t: usize,
    pub seed: u64,
    pub faulty: usize,
    pub total_messages: u64,
    pub total_bytes: u64,
    /// Empty when some non-faulty process produced no output.
    pub decide_step: Option<u64>,
    pub vector_size: Option<usize>,
    pub end_step: u64,
    pub exhausted: bool,
    pub properties_passed: bool,
    /// Space-separated names of failing properties.
    pub failed_properties: String,
    pub init: u64,
    pub echo: u64,
    pub ready: u64,
    pub request: u64,
    pub reply: u64,
    pub est: u64,
    pub aux: u64,
    pub coord_value: u64,
    pub est_ones: u64,
    pub aux_ones: u64,
    pub decs: u64,
}

fn kind(m: &Metrics, name: &str) -> u64 {
    m.per_kind.get(name).copied().unwrap_or(0)
}

fn failed(report: &PropertyReport) -> String {
    report
        .failures()
        .map(|f| f.name)
        .collect::<Vec<_>>()
        .join(" ")
}

impl RunRow {
    pub fn new(scenario: &str, cfg: &SimConfig, result: &SweepResult) -> RunRow {
        let m = &result.metrics;
        RunRow {
            scenario: scenario.to_string(),
            protocol: format!("{:?}", cfg.protocol).to_lowercase(),
            n: cfg.n,
            t: cfg.t,
            seed: result.seed,
            faulty: cfg
                .faults
                .iter()
                .filter(|f| !f.behavior.is_honest())
                .count(),
            total_messages: m.total_messages,
            total_bytes: m.total_bytes,
            decide_step: m.decide_step,
            vector_size: m.vector_size,
            end_step: m.end_step,
            exhausted: result.exhausted,
            properties_passed: result.report.all_passed(),
            failed_properties: failed(&result.report),
            init: kind(m, "INIT"),
            echo: kind(m, "ECHO"),
            ready: kind(m, "READY"),
            request: kind(m, "REQUEST"),
            reply: kind(m, "REPLY"),
            est: kind(m, "EST"),
            aux: kind(m, "AUX"),
            coord_value: kind(m, "COORD_VALUE"),
            est_ones: kind(m, "EST_ONES"),
            aux_ones: kind(m, "AUX_ONES"),
            decs: kind(m, "DECS"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub protocol: String,
    pub n: usize,
    pub t: usize,
    pub faulty: usize,
    pub total_messages: u64,
    pub total_bytes: u64,
    pub decide_step: Option<u64>,
    pub messages_per_n3: f64,
    pub properties_passed: bool,
}

impl ScalingRow {
    pub fn new(cfg: &SimConfig, m: &Metrics, passed: bool) -> ScalingRow {
        ScalingRow {
            protocol: format!("{:?}", cfg.protocol).to_lowercase(),
            n: cfg.n,
            t: cfg.t,
            faulty: cfg.faults.len(),
            total_messages: m.total_messages,
            total_bytes: m.total_bytes,
            decide_step: m.decide_step,
            messages_per_n3: m.total_messages as f64 / (cfg.n as f64).powi(3),
            properties_passed: passed,
        }
    }
}

pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
