use std::collections::BTreeMap;
use std::fmt::Write as _;

use anonbft::crypto::Digest;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Send,
    Recv,
    /// A protocol output such as a delivery or decision.
    Output,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Send => "send",
            Direction::Recv => "recv",
            Direction::Output => "output",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub step: u64,
    pub process: usize,
    pub direction: Direction,
    pub kind: &'static str,
    pub label: Option<Digest>,
    pub bytes_len: usize,
}

impl TraceRecord {
    /// `step,process,direction,kind,label,bytes_len`
    pub fn to_line(&self) -> String {
        let label = self.label.map_or_else(|| "-".to_string(), |d| d.to_hex());
        format!(
            "{},{},{},{},{},{}",
            self.step,
            self.process,
            self.direction.as_str(),
            self.kind,
            label,
            self.bytes_len
        )
    }
}

pub const TRACE_HEADER: &str = "step,process,direction,kind,label,bytes_len";

pub fn export(records: &[TraceRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{}", r.to_line());
    }
    out
}

/// Message statistics. Counts are point-to-point: a broadcast to n
/// processes counts n times.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Metrics {
    pub total_messages: u64,
    pub total_bytes: u64,
    pub per_kind: BTreeMap<&'static str, u64>,
    /// Latest step at which an honest process produced its final output.
    pub decide_step: Option<u64>,
    pub vector_size: Option<usize>,
    pub end_step: u64,
}

impl Metrics {
    pub(crate) fn record_send(&mut self, kind: &'static str, bytes: usize, copies: u64) {
        self.total_messages += copies;
        self.total_bytes += bytes as u64 * copies;
        *self.per_kind.entry(kind).or_default() += copies;
    }

    /// Recomputes the message counters from exported send records.
    pub fn from_records(records: &[TraceRecord]) -> Metrics {
        let mut m = Metrics::default();
        for r in records.iter().filter(|r| r.direction == Direction::Send) {
            m.record_send(r.kind, r.bytes_len, 1);
        }
        m
    }

    pub fn same_counts(&self, other: &Metrics) -> bool {
        self.total_messages == other.total_messages
            && self.total_bytes == other.total_bytes
            && self.per_kind == other.per_kind
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_format() {
        let r = TraceRecord {
            step: 3,
            process: 2,
            direction: Direction::Send,
            kind: "ECHO",
            label: Some(Digest([0xab; 32])),
            bytes_len: 40,
        };
        let line = r.to_line();
        assert!(line.starts_with("3,2,send,ECHO,abab"));
        assert!(line.ends_with(",40"));
        let r2 = TraceRecord {
            label: None,
            ..r.clone()
        };
        assert_eq!(r2.to_line(), "3,2,send,ECHO,-,40");
        let text = export(&[r, r2]);
        assert_eq!(text.lines().count(), 3);
        assert_eq!(text.lines().next(), Some(TRACE_HEADER));
    }

    #[test]
    fn metrics_from_records() {
        let mk = |kind, dir| TraceRecord {
            step: 0,
            process: 1,
            direction: dir,
            kind,
            label: None,
            bytes_len: 10,
        };
        let recs = vec![
            mk("EST", Direction::Send),
            mk("EST", Direction::Recv),
            mk("AUX", Direction::Send),
        ];
        let m = Metrics::from_records(&recs);
        assert_eq!(m.total_messages, 2);
        assert_eq!(m.total_bytes, 20);
        assert_eq!(m.per_kind["EST"], 1);
    }
}
