use std::sync::Arc;

use crate::crypto::Digest;
use crate::trs::TraceOutcome;
use crate::wire::{Envelope, InstanceId, Payload};

/// 1-based process index; doubles as the ring position and the threshold
/// key-share index.
pub type ProcessId = usize;

/// What a state machine asks its host to do.
#[derive(Debug, Clone)]
pub enum Effect {
    /// Regular authenticated channel to every process, including the sender.
    Broadcast(Arc<Envelope>),
    Send {
        to: ProcessId,
        msg: Arc<Envelope>,
    },
    /// Anonymous channel to every process, including the sender.
    AnonBroadcast(Arc<Envelope>),
    /// Call back `on_timer(id, key)` after `delay` steps.
    SetTimer {
        id: InstanceId,
        key: u64,
        delay: u64,
    },
    Output(Output),
}

#[derive(Debug, Clone)]
pub enum Output {
    ArbDelivered {
        id: InstanceId,
        payload: Arc<Payload>,
    },
    BinDecided {
        id: InstanceId,
        label: Digest,
        value: bool,
        round: u32,
    },
    VectorDecided {
        id: InstanceId,
        vector: Arc<Vec<Arc<Payload>>>,
    },
    Ballots {
        id: InstanceId,
        ballots: Arc<Vec<Vec<u8>>>,
    },
    Evidence(Evidence),
}

/// Misbehaviour observed by an honest process. Reported, never acted on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Evidence {
    /// Two INITs under the same tag that are not independent.
    DoubleSign {
        id: InstanceId,
        kept: Digest,
        dropped: Digest,
        outcome: TraceOutcome,
    },
    /// A DECS batch that was malformed, incomplete or carried a bad share.
    InvalidShareBatch { id: InstanceId, from: ProcessId },
}

impl Effect {
    pub fn output(&self) -> Option<&Output> {
        match self {
            Effect::Output(o) => Some(o),
            _ => None,
        }
    }
}
