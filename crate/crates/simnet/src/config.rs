use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("need n > 3t (got n={n}, t={t})")]
    Resilience { n: usize, t: usize },
    #[error("delta must be at least 1")]
    Delta,
    #[error("anonymous delay range [{0}, {1}] is empty or starts at 0")]
    AnonRange(u64, u64),
    #[error("fault plan names process {0}, outside 1..=n")]
    FaultIndex(usize),
    #[error("fault plan lists process {0} twice")]
    FaultDuplicate(usize),
    #[error("{faults} faulty processes exceed t={t}")]
    FaultBudget { faults: usize, t: usize },
    #[error("binary proposals: expected {expected} bits, got {got}")]
    Proposals { expected: usize, got: usize },
    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Broadcast,
    Binary,
    Vector,
    Election,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Behavior {
    Honest,
    /// Stops sending and receiving from step `at` on.
    Crash {
        at: u64,
    },
    /// Receives but never sends.
    Mute,
    /// Proposes two different payloads under one key.
    DoubleSign,
    /// Sends ECHO/READY for a bogus digest to half of the processes.
    EchoEquivocate,
    /// Pushes zeros: every EST/AUX bit cleared, every ONES set emptied, plus
    /// unsolicited zero batches for the first rounds.
    ZeroSpam,
    /// Broadcasts decryption shares with invalid proofs.
    ShareForge,
    /// Proposes a copy of the first honest ciphertext it sees.
    CiphertextReplay,
}

impl Behavior {
    pub fn is_honest(&self) -> bool {
        matches!(self, Behavior::Honest)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Behavior::Honest => "honest",
            Behavior::Crash { .. } => "crash",
            Behavior::Mute => "mute",
            Behavior::DoubleSign => "double_sign",
            Behavior::EchoEquivocate => "echo_equivocate",
            Behavior::ZeroSpam => "zero_spam",
            Behavior::ShareForge => "share_forge",
            Behavior::CiphertextReplay => "ciphertext_replay",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fault {
    pub process: usize,
    pub behavior: Behavior,
}

/// How the adversary delays regular messages sent before GST. Every choice
/// still delivers by `gst + delta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adversary {
    /// Unit delay, FIFO per step.
    Fifo,
    /// Uniform delay up to the GST bound.
    #[default]
    Random,
    /// Later sends overtake earlier ones.
    FifoInversion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceLevel {
    #[default]
    Full,
    SendsOnly,
    /// Counters only.
    Summary,
}

fn default_delta() -> u64 {
    1
}

fn default_anon() -> (u64, u64) {
    (1, 1)
}

fn default_true() -> bool {
    true
}

fn default_payload() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub protocol: Protocol,
    pub n: usize,
    pub t: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub gst: u64,
    #[serde(default = "default_delta")]
    pub delta: u64,
    #[serde(default = "default_anon")]
    pub anon_delay_range: (u64, u64),
    #[serde(default)]
    pub faults: Vec<Fault>,
    #[serde(default)]
    pub adversary: Adversary,
    /// Binary consensus inputs, one per process; default all ones.
    #[serde(default)]
    pub proposals: Option<Vec<bool>>,
    #[serde(default = "default_true")]
    pub hashing: bool,
    /// Coordinator wait in steps; `None` means `2·delta`.
    #[serde(default)]
    pub coord_timeout: Option<u64>,
    #[serde(default)]
    pub zero_delay: u64,
    #[serde(default)]
    pub reduced_broadcasters: bool,
    #[serde(default = "default_payload")]
    pub payload_size: usize,
    #[serde(default)]
    pub step_budget: Option<u64>,
    #[serde(default)]
    pub trace_level: TraceLevel,
}

impl SimConfig {
    pub fn new(protocol: Protocol, n: usize, t: usize, seed: u64) -> Self {
        SimConfig {
            protocol,
            n,
            t,
            seed,
            gst: 0,
            delta: 1,
            anon_delay_range: (1, 1),
            faults: Vec::new(),
            adversary: Adversary::Random,
            proposals: None,
            hashing: true,
            coord_timeout: None,
            zero_delay: 0,
            reduced_broadcasters: false,
            payload_size: 32,
            step_budget: None,
            trace_level: TraceLevel::Full,
        }
    }

    pub fn from_json(text: &str) -> Result<SimConfig, ConfigError> {
        let cfg: SimConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn with_fault(mut self, process: usize, behavior: Behavior) -> Self {
        self.faults.push(Fault { process, behavior });
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n <= 3 * self.t || self.n < 2 {
            return Err(ConfigError::Resilience {
                n: self.n,
                t: self.t,
            });
        }
        if self.delta == 0 {
            return Err(ConfigError::Delta);
        }
        let (lo, hi) = self.anon_delay_range;
        if lo == 0 || lo > hi {
            return Err(ConfigError::AnonRange(lo, hi));
        }
        let mut seen = vec![false; self.n + 1];
        let mut faulty = 0;
        for f in &self.faults {
            if f.process == 0 || f.process > self.n {
                return Err(ConfigError::FaultIndex(f.process));
            }
            if std::mem::replace(&mut seen[f.process], true) {
                return Err(ConfigError::FaultDuplicate(f.process));
            }
            if !f.behavior.is_honest() {
                faulty += 1;
            }
        }
        if faulty > self.t {
            return Err(ConfigError::FaultBudget {
                faults: faulty,
                t: self.t,
            });
        }
        if let Some(p) = &self.proposals {
            if p.len() != self.n {
                return Err(ConfigError::Proposals {
                    expected: self.n,
                    got: p.len(),
                });
            }
        }
        Ok(())
    }

    pub fn coord_timeout(&self) -> u64 {
        self.coord_timeout.unwrap_or(2 * self.delta)
    }

    pub fn behavior(&self, process: usize) -> Behavior {
        self.faults
            .iter()
            .find(|f| f.process == process)
            .map_or(Behavior::Honest, |f| f.behavior)
    }

    pub fn is_honest(&self, process: usize) -> bool {
        self.behavior(process).is_honest()
    }

    /// Steps allowed before a run counts as non-terminating: the GST and
    /// anonymity offsets plus ten rounds per process.
    pub fn step_budget(&self) -> u64 {
        self.step_budget.unwrap_or_else(|| {
            let round = 3 * self.delta + self.coord_timeout();
            self.gst + self.anon_delay_range.1 + 10 * self.n as u64 * round
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let ok = SimConfig::new(Protocol::Vector, 4, 1, 0);
        ok.validate().unwrap();
        assert!(matches!(
            SimConfig::new(Protocol::Vector, 3, 1, 0).validate(),
            Err(ConfigError::Resilience { .. })
        ));
        let two = ok
            .clone()
            .with_fault(1, Behavior::Mute)
            .with_fault(2, Behavior::Mute);
        assert!(matches!(
            two.validate(),
            Err(ConfigError::FaultBudget { faults: 2, t: 1 })
        ));
        let dup = ok
            .clone()
            .with_fault(1, Behavior::Mute)
            .with_fault(1, Behavior::Honest);
        assert!(matches!(
            dup.validate(),
            Err(ConfigError::FaultDuplicate(1))
        ));
        let bad = SimConfig {
            anon_delay_range: (3, 2),
            ..ok.clone()
        };
        assert!(matches!(bad.validate(), Err(ConfigError::AnonRange(3, 2))));
        let bad = SimConfig { delta: 0, ..ok };
        assert!(matches!(bad.validate(), Err(ConfigError::Delta)));
    }

    #[test]
    fn json_round_trip_and_defaults() {
        let cfg =
            SimConfig::new(Protocol::Election, 7, 2, 9).with_fault(3, Behavior::Crash { at: 4 });
        assert_eq!(SimConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        let minimal = r#"{"protocol": "vector", "n": 4, "t": 1, "faults": [{"process": 2, "behavior": {"kind": "zero_spam"}}]}"#;
        let parsed = SimConfig::from_json(minimal).unwrap();
        assert_eq!(parsed.delta, 1);
        assert_eq!(parsed.behavior(2), Behavior::ZeroSpam);
        assert!(SimConfig::from_json(r#"{"protocol": "vector", "n": 4}"#).is_err());
        assert!(
            SimConfig::from_json(r#"{"protocol": "vector", "n": 4, "t": 1, "bogus": 1}"#).is_err()
        );
    }

    #[test]
    fn budget_formula() {
        let cfg = SimConfig::new(Protocol::Vector, 4, 1, 0);
        assert_eq!(cfg.step_budget(), 1 + 10 * 4 * (3 + 2));
    }
}
