//! Deterministic discrete-event simulator for the anonbft protocols.
//!
//! A run is a pure function of its [`SimConfig`]: the same seed yields a
//! byte-identical trace.

pub mod config;
pub mod props;
pub mod scenario;
pub mod sim;
pub mod sweep;
pub mod trace;

pub use config::{Adversary, Behavior, ConfigError, Fault, Protocol, SimConfig, TraceLevel};
pub use props::{assert_properties, PropertyReport, PropertyResult};
pub use sim::{run, Oracle, ProcessOutcome, RunOutput};
pub use sweep::{sweep, SweepResult};
pub use trace::{Direction, Metrics, TraceRecord, TRACE_HEADER};
