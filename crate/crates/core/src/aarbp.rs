//! Reliable broadcast with anonymous, ring-signed INITs.
//!
//! One [`Broadcast`] per instance identifier runs all n broadcasts of that
//! identifier at once. Payloads are keyed by their digest since proposers
//! are not known. Double proposals are caught by tracing every INIT against
//! the payloads already buffered or delivered.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::crypto::Digest;
use crate::effect::{Effect, Evidence, Output, ProcessId};
use crate::par::Execution;
use crate::trs::{self, IssueTag, Ring, SecretKey, TraceIndex, TrsError};
use crate::wire::{BroadcastBody, Envelope, InstanceId, MessageBody, Payload};

pub const INIT_TYPE: &str = "INIT";

#[derive(Debug, Error)]
pub enum AarbpError {
    #[error("already proposed for this instance")]
    AlreadyProposed,
    #[error(transparent)]
    Signature(#[from] TrsError),
}

#[derive(Debug, Clone, Copy)]
pub struct AarbpConfig {
    pub n: usize,
    pub t: usize,
    /// ECHO and READY carry payload digests instead of payloads.
    pub hashing: bool,
    pub exec: Execution,
}

impl AarbpConfig {
    pub fn new(n: usize, t: usize) -> Self {
        AarbpConfig {
            n,
            t,
            hashing: true,
            exec: Execution::default(),
        }
    }

    /// Distinct ECHOs needed before sending READY: more than `(n+t)/2`.
    pub fn echo_quorum(&self) -> usize {
        (self.n + self.t) / 2 + 1
    }

    pub fn ready_amplify(&self) -> usize {
        self.t + 1
    }

    pub fn deliver_quorum(&self) -> usize {
        2 * self.t + 1
    }
}

/// Distinct-sender set over `1..=n`.
#[derive(Debug, Clone)]
pub(crate) struct Senders {
    seen: Vec<bool>,
    count: usize,
}

impl Senders {
    pub(crate) fn new(n: usize) -> Self {
        Senders {
            seen: vec![false; n + 1],
            count: 0,
        }
    }

    /// False for duplicates and out-of-range senders.
    pub(crate) fn insert(&mut self, p: ProcessId) -> bool {
        match self.seen.get_mut(p) {
            Some(slot) if p > 0 && !*slot => {
                *slot = true;
                self.count += 1;
                true
            }
            _ => false,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.count
    }
}

#[derive(Debug)]
struct Tally {
    echoes: Senders,
    readies: Senders,
    sent_echo: bool,
    sent_ready: bool,
    requested: bool,
    delivered: bool,
}

impl Tally {
    fn new(n: usize) -> Self {
        Tally {
            echoes: Senders::new(n),
            readies: Senders::new(n),
            sent_echo: false,
            sent_ready: false,
            requested: false,
            delivered: false,
        }
    }
}

pub struct Broadcast {
    id: InstanceId,
    self_id: ProcessId,
    cfg: AarbpConfig,
    tag: IssueTag,
    proposed: bool,
    seen_init: HashSet<Digest>,
    preimages: HashMap<Digest, Arc<Payload>>,
    tallies: HashMap<Digest, Tally>,
    index: TraceIndex,
    index_entries: Vec<Digest>,
    indexed: HashSet<Digest>,
    buffer: Vec<Digest>,
    delivered: Vec<Arc<Payload>>,
    answered: HashSet<(ProcessId, Digest)>,
}

impl Broadcast {
    pub fn new(
        id: InstanceId,
        self_id: ProcessId,
        cfg: AarbpConfig,
        ring: Arc<Ring>,
    ) -> Result<Broadcast, TrsError> {
        let tag = IssueTag::for_message_type(ring, &id, INIT_TYPE, None)?;
        Ok(Broadcast {
            id,
            self_id,
            cfg,
            tag,
            proposed: false,
            seen_init: HashSet::new(),
            preimages: HashMap::new(),
            tallies: HashMap::new(),
            index: TraceIndex::new(),
            index_entries: Vec::new(),
            indexed: HashSet::new(),
            buffer: Vec::new(),
            delivered: Vec::new(),
            answered: HashSet::new(),
        })
    }

    pub fn id(&self) -> &InstanceId {
        &self.id
    }

    pub fn config(&self) -> &AarbpConfig {
        &self.cfg
    }

    pub fn issue_tag(&self) -> &IssueTag {
        &self.tag
    }

    pub fn has_proposed(&self) -> bool {
        self.proposed
    }

    pub fn delivered(&self) -> &[Arc<Payload>] {
        &self.delivered
    }

    /// Digests of INITs accepted into the buffer, in arrival order.
    pub fn buffered(&self) -> &[Digest] {
        &self.buffer
    }

    /// Signs `message` and returns the INIT envelope without touching state.
    pub fn sign_init<R: RngCore + CryptoRng>(
        &self,
        message: Vec<u8>,
        secret: &SecretKey,
        rng: &mut R,
    ) -> Result<Arc<Envelope>, TrsError> {
        let sig = trs::sign_with(
            self.cfg.exec,
            &self.tag,
            self.self_id,
            secret,
            &message,
            rng,
        )?;
        let payload = Arc::new(Payload::new(message, sig));
        Ok(Arc::new(Envelope::new(
            self.id.clone(),
            MessageBody::Init(payload),
        )))
    }

    pub fn propose<R: RngCore + CryptoRng>(
        &mut self,
        message: Vec<u8>,
        secret: &SecretKey,
        rng: &mut R,
    ) -> Result<Vec<Effect>, AarbpError> {
        if self.proposed {
            return Err(AarbpError::AlreadyProposed);
        }
        let env = self.sign_init(message, secret, rng)?;
        self.propose_envelope(env)
    }

    /// Emits an INIT produced by [`Broadcast::sign_init`].
    pub fn propose_envelope(&mut self, env: Arc<Envelope>) -> Result<Vec<Effect>, AarbpError> {
        if self.proposed {
            return Err(AarbpError::AlreadyProposed);
        }
        self.proposed = true;
        Ok(vec![Effect::AnonBroadcast(env)])
    }

    /// Feeds one message. `from` is `None` on the anonymous channel.
    pub fn handle(&mut self, from: Option<ProcessId>, body: &MessageBody, out: &mut Vec<Effect>) {
        match (body, from) {
            (MessageBody::Init(p), _) => self.on_init(p, out),
            (MessageBody::Echo(b), Some(s)) => self.on_echo(s, b, out),
            (MessageBody::Ready(b), Some(s)) => self.on_ready(s, b, out),
            (MessageBody::Request(d), Some(s)) => self.on_request(s, *d, out),
            (MessageBody::Reply(p), Some(_)) => self.on_reply(p, out),
            _ => {}
        }
    }

    fn envelope(&self, body: MessageBody) -> Arc<Envelope> {
        Arc::new(Envelope::new(self.id.clone(), body))
    }

    fn body_for(&self, d: Digest) -> BroadcastBody {
        match self.preimages.get(&d) {
            Some(p) if !self.cfg.hashing => BroadcastBody::Full(p.clone()),
            _ => BroadcastBody::Digest(d),
        }
    }

    fn tally(&mut self, d: Digest) -> &mut Tally {
        let n = self.cfg.n;
        self.tallies.entry(d).or_insert_with(|| Tally::new(n))
    }

    fn learn(&mut self, body: &BroadcastBody) {
        if let BroadcastBody::Full(p) = body {
            self.preimages
                .entry(p.digest())
                .or_insert_with(|| p.clone());
        }
    }

    fn on_init(&mut self, p: &Arc<Payload>, out: &mut Vec<Effect>) {
        let d = p.digest();
        if !self.seen_init.insert(d) {
            return;
        }
        if !self.indexed.contains(&d) {
            let Ok(trace_tag) =
                trs::verify_with(self.cfg.exec, &self.tag, p.message(), p.signature())
            else {
                return;
            };
            if let Some((entry, outcome)) = self.index.check(&trace_tag) {
                self.preimages.entry(d).or_insert_with(|| p.clone());
                out.push(Effect::Output(Output::Evidence(Evidence::DoubleSign {
                    id: self.id.clone(),
                    kept: self.index_entries[entry],
                    dropped: d,
                    outcome,
                })));
                return;
            }
            self.index.insert(trace_tag);
            self.index_entries.push(d);
            self.indexed.insert(d);
        }
        self.preimages.entry(d).or_insert_with(|| p.clone());
        self.buffer.push(d);
        let t = self.tally(d);
        if !t.sent_echo {
            t.sent_echo = true;
            let env = self.envelope(MessageBody::Echo(self.body_for(d)));
            out.push(Effect::Broadcast(env));
        }
        self.try_deliver(d, out);
    }

    fn on_echo(&mut self, from: ProcessId, body: &BroadcastBody, out: &mut Vec<Effect>) {
        self.learn(body);
        let d = body.digest();
        let quorum = self.cfg.echo_quorum();
        let t = self.tally(d);
        if !t.echoes.insert(from) {
            return;
        }
        if t.echoes.len() >= quorum && !t.sent_ready {
            t.sent_ready = true;
            let env = self.envelope(MessageBody::Ready(self.body_for(d)));
            out.push(Effect::Broadcast(env));
        }
    }

    fn on_ready(&mut self, from: ProcessId, body: &BroadcastBody, out: &mut Vec<Effect>) {
        self.learn(body);
        let d = body.digest();
        let amplify = self.cfg.ready_amplify();
        let t = self.tally(d);
        if !t.readies.insert(from) {
            return;
        }
        if t.readies.len() >= amplify && !t.sent_ready {
            t.sent_ready = true;
            let env = self.envelope(MessageBody::Ready(self.body_for(d)));
            out.push(Effect::Broadcast(env));
        }
        self.try_deliver(d, out);
    }

    fn on_request(&mut self, from: ProcessId, d: Digest, out: &mut Vec<Effect>) {
        let Some(p) = self.preimages.get(&d).cloned() else {
            return;
        };
        if self.answered.insert((from, d)) {
            let env = self.envelope(MessageBody::Reply(p));
            out.push(Effect::Send { to: from, msg: env });
        }
    }

    fn on_reply(&mut self, p: &Arc<Payload>, out: &mut Vec<Effect>) {
        let d = p.digest();
        match self.tallies.get(&d) {
            Some(t) if t.requested && !t.delivered => {}
            _ => return,
        }
        self.preimages.entry(d).or_insert_with(|| p.clone());
        self.try_deliver(d, out);
    }

    fn try_deliver(&mut self, d: Digest, out: &mut Vec<Effect>) {
        let quorum = self.cfg.deliver_quorum();
        let known = self.preimages.contains_key(&d);
        let Some(t) = self.tallies.get_mut(&d) else {
            return;
        };
        if t.delivered || t.readies.len() < quorum {
            return;
        }
        if !known {
            if !t.requested {
                t.requested = true;
                let env = self.envelope(MessageBody::Request(d));
                out.push(Effect::Broadcast(env));
            }
            return;
        }
        t.delivered = true;
        let p = self.preimages[&d].clone();
        if !self.indexed.contains(&d) {
            if let Ok(tag) = trs::verify_with(self.cfg.exec, &self.tag, p.message(), p.signature())
            {
                self.index.insert(tag);
                self.index_entries.push(d);
                self.indexed.insert(d);
            }
        }
        self.delivered.push(p.clone());
        out.push(Effect::Output(Output::ArbDelivered {
            id: self.id.clone(),
            payload: p,
        }));
    }
}
