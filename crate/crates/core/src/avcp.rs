//! Vector consensus over anonymously broadcast proposals.
//!
//! Each process runs n binary consensus instances. An instance is named
//! (labelled) by the digest of the payload whose delivery created it;
//! instances without a delivery yet are unlabelled and, since nobody can
//! address them individually, they only ever see zeros carried by the
//! batched EST_ONES/AUX_ONES messages. The decided vector holds the
//! payloads whose instances decided 1, ordered by label.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::aarbp::{AarbpConfig, AarbpError, Broadcast};
use crate::bincons::{BinAction, BinConfig, BinCons};
use crate::crypto::Digest;
use crate::effect::{Effect, Output, ProcessId};
use crate::par::Execution;
use crate::trs::{Ring, SecretKey, TrsError};
use crate::wire::{Envelope, InstanceId, MessageBody, Payload, Phase};

/// Deterministic predicate every process applies to delivered payloads.
/// An instance's label, if known, and its `(value, round)` decision.
pub type InstanceView = (Option<Digest>, Option<(bool, u32)>);

pub type Validity = Arc<dyn Fn(&Payload) -> bool + Send + Sync>;

const ZERO_TIMER: u64 = 0;

#[derive(Debug, Error)]
pub enum AvcpError {
    #[error("proposal rejected by the validity predicate")]
    InvalidProposal,
    #[error(transparent)]
    Broadcast(#[from] AarbpError),
}

impl From<TrsError> for AvcpError {
    fn from(e: TrsError) -> Self {
        AvcpError::Broadcast(AarbpError::Signature(e))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AvcpConfig {
    pub n: usize,
    pub t: usize,
    pub hashing: bool,
    pub coord_timeout: u64,
    /// Steps to keep proposing 1 on late deliveries after `n-t` instances
    /// decided 1, before proposing 0 everywhere else.
    pub zero_delay: u64,
    pub exec: Execution,
}

impl AvcpConfig {
    pub fn new(n: usize, t: usize) -> Self {
        AvcpConfig {
            n,
            t,
            hashing: true,
            coord_timeout: 0,
            zero_delay: 0,
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum BinMsg {
    Est(u32, bool),
    Aux(u32, bool),
    Coord(u32, bool),
}

struct Slot {
    cons: BinCons,
    label: Option<Digest>,
    deferred_relays: Vec<(u32, bool)>,
}

pub struct Avcp {
    id: InstanceId,
    cfg: AvcpConfig,
    arb: Broadcast,
    valid: Validity,
    slots: Vec<Slot>,
    by_label: HashMap<Digest, usize>,
    unlabelled: Vec<usize>,
    proposals: HashMap<Digest, Arc<Payload>>,
    decided_ones: BTreeSet<Digest>,
    decision_count: usize,
    max_decide_round: u32,
    zeros_started: bool,
    zero_timer_set: bool,
    ones: HashMap<(Phase, u32), Vec<Digest>>,
    counts: HashMap<(Phase, u32), usize>,
    pending: HashMap<Digest, Vec<(ProcessId, BinMsg)>>,
    pending_labels: HashMap<ProcessId, HashSet<Digest>>,
    ones_seen: HashSet<(ProcessId, Phase, u32)>,
    parked: Vec<(ProcessId, Phase, u32, Arc<Vec<Digest>>)>,
    parked_count: HashMap<ProcessId, usize>,
    decided: Option<Arc<Vec<Arc<Payload>>>>,
}

impl Avcp {
    pub fn new(
        id: InstanceId,
        self_id: ProcessId,
        cfg: AvcpConfig,
        ring: Arc<Ring>,
        valid: Validity,
    ) -> Result<Avcp, TrsError> {
        let arb_cfg = AarbpConfig {
            n: cfg.n,
            t: cfg.t,
            hashing: cfg.hashing,
            exec: cfg.exec,
        };
        let arb = Broadcast::new(id.clone(), self_id, arb_cfg, ring)?;
        let bin_cfg = BinConfig {
            n: cfg.n,
            t: cfg.t,
            self_id,
            coord_timeout: cfg.coord_timeout,
            auto_halt: false,
        };
        let slots = (0..cfg.n)
            .map(|_| Slot {
                cons: BinCons::new(bin_cfg),
                label: None,
                deferred_relays: Vec::new(),
            })
            .collect();
        Ok(Avcp {
            id,
            cfg,
            arb,
            valid,
            slots,
            by_label: HashMap::new(),
            unlabelled: (0..cfg.n).rev().collect(),
            proposals: HashMap::new(),
            decided_ones: BTreeSet::new(),
            decision_count: 0,
            max_decide_round: 0,
            zeros_started: false,
            zero_timer_set: false,
            ones: HashMap::new(),
            counts: HashMap::new(),
            pending: HashMap::new(),
            pending_labels: HashMap::new(),
            ones_seen: HashSet::new(),
            parked: Vec::new(),
            parked_count: HashMap::new(),
            decided: None,
        })
    }

    pub fn id(&self) -> &InstanceId {
        &self.id
    }

    pub fn config(&self) -> &AvcpConfig {
        &self.cfg
    }

    pub fn broadcast(&self) -> &Broadcast {
        &self.arb
    }

    pub fn decided(&self) -> Option<&Arc<Vec<Arc<Payload>>>> {
        self.decided.as_ref()
    }

    pub fn decision_count(&self) -> usize {
        self.decision_count
    }

    pub fn labelled_count(&self) -> usize {
        self.by_label.len()
    }

    /// Labels decided 1 so far, ascending.
    pub fn decided_ones(&self) -> impl Iterator<Item = &Digest> {
        self.decided_ones.iter()
    }

    /// Per-instance `(label, decision)` in instance order.
    pub fn instances(&self) -> Vec<InstanceView> {
        self.slots
            .iter()
            .map(|s| (s.label, s.cons.decided()))
            .collect()
    }

    /// True once every instance has halted.
    pub fn halted(&self) -> bool {
        self.slots.iter().all(|s| s.cons.halted())
    }

    pub fn propose<R: RngCore + CryptoRng>(
        &mut self,
        message: Vec<u8>,
        secret: &SecretKey,
        rng: &mut R,
    ) -> Result<Vec<Effect>, AvcpError> {
        if self.arb.has_proposed() {
            return Err(AarbpError::AlreadyProposed.into());
        }
        let env = self.arb.sign_init(message, secret, rng)?;
        let MessageBody::Init(p) = &env.body else {
            unreachable!("sign_init returns an INIT")
        };
        if !(self.valid)(p) {
            return Err(AvcpError::InvalidProposal);
        }
        Ok(self.arb.propose_envelope(env)?)
    }

    pub fn handle(&mut self, from: Option<ProcessId>, body: &MessageBody, out: &mut Vec<Effect>) {
        match body {
            MessageBody::Init(_)
            | MessageBody::Echo(_)
            | MessageBody::Ready(_)
            | MessageBody::Request(_)
            | MessageBody::Reply(_) => {
                let mut arb_out = Vec::new();
                self.arb.handle(from, body, &mut arb_out);
                for e in arb_out {
                    if let Effect::Output(Output::ArbDelivered { payload, .. }) = &e {
                        let payload = payload.clone();
                        out.push(e);
                        self.on_arb_deliver(payload, out);
                    } else {
                        out.push(e);
                    }
                }
            }
            &MessageBody::Est { round, label, bit } => {
                self.on_bin(from, label, BinMsg::Est(round, bit), out)
            }
            &MessageBody::Aux { round, label, bit } => {
                self.on_bin(from, label, BinMsg::Aux(round, bit), out)
            }
            &MessageBody::CoordValue { round, label, bit } => {
                self.on_bin(from, label, BinMsg::Coord(round, bit), out)
            }
            MessageBody::Ones { phase, round, ones } => {
                if let Some(s) = from {
                    self.on_ones(s, *phase, *round, ones.clone(), out);
                }
            }
            MessageBody::Decs(_) => {}
        }
    }

    pub fn on_timer(&mut self, key: u64, out: &mut Vec<Effect>) {
        if key == ZERO_TIMER {
            self.start_zeros(out);
            return;
        }
        let slot = (key >> 32) as usize - 1;
        let round = key as u32;
        if slot < self.slots.len() {
            let mut actions = Vec::new();
            self.slots[slot].cons.on_timer(round, &mut actions);
            self.apply(slot, actions, out);
        }
    }

    fn envelope(&self, body: MessageBody) -> Effect {
        Effect::Broadcast(Arc::new(Envelope::new(self.id.clone(), body)))
    }

    fn on_arb_deliver(&mut self, payload: Arc<Payload>, out: &mut Vec<Effect>) {
        let label = payload.digest();
        if self.by_label.contains_key(&label) {
            return;
        }
        let Some(i) = self.unlabelled.pop() else {
            debug_assert!(false, "more deliveries than instances");
            return;
        };
        self.slots[i].label = Some(label);
        self.by_label.insert(label, i);
        let valid = (self.valid)(&payload);
        if valid {
            self.proposals.insert(label, payload);
        }

        if let Some(msgs) = self.pending.remove(&label) {
            for (from, _) in &msgs {
                if let Some(set) = self.pending_labels.get_mut(from) {
                    set.remove(&label);
                }
            }
            for (from, m) in msgs {
                self.feed(i, from, m, out);
            }
        }
        let relays = std::mem::take(&mut self.slots[i].deferred_relays);
        for (round, bit) in relays {
            out.push(self.envelope(MessageBody::Est { round, label, bit }));
        }
        self.retry_parked(out);

        if valid && !self.zeros_started && !self.slots[i].cons.proposed() {
            let mut actions = Vec::new();
            let _ = self.slots[i].cons.propose(true, &mut actions);
            self.apply(i, actions, out);
        }
        self.try_output(out);
    }

    fn on_bin(&mut self, from: Option<ProcessId>, label: Digest, m: BinMsg, out: &mut Vec<Effect>) {
        let Some(from) = from else {
            return;
        };
        if let Some(&i) = self.by_label.get(&label) {
            self.feed(i, from, m, out);
            return;
        }
        let quota = self.cfg.n;
        let labels = self.pending_labels.entry(from).or_default();
        if labels.contains(&label) || labels.len() < quota {
            labels.insert(label);
            self.pending.entry(label).or_default().push((from, m));
        }
    }

    fn feed(&mut self, i: usize, from: ProcessId, m: BinMsg, out: &mut Vec<Effect>) {
        let mut actions = Vec::new();
        let cons = &mut self.slots[i].cons;
        match m {
            BinMsg::Est(r, b) => cons.on_est(from, r, b, &mut actions),
            BinMsg::Aux(r, b) => cons.on_aux(from, r, b, &mut actions),
            BinMsg::Coord(r, b) => cons.on_coord(from, r, b, &mut actions),
        }
        self.apply(i, actions, out);
    }

    fn on_ones(
        &mut self,
        from: ProcessId,
        phase: Phase,
        round: u32,
        ones: Arc<Vec<Digest>>,
        out: &mut Vec<Effect>,
    ) {
        if round == 0 || !self.ones_seen.insert((from, phase, round)) {
            return;
        }
        if ones.iter().all(|l| self.by_label.contains_key(l)) {
            self.apply_ones(from, phase, round, &ones, out);
            return;
        }
        let parked = self.parked_count.entry(from).or_default();
        if *parked < self.cfg.n {
            *parked += 1;
            self.parked.push((from, phase, round, ones));
        }
    }

    fn retry_parked(&mut self, out: &mut Vec<Effect>) {
        loop {
            let Some(k) = self
                .parked
                .iter()
                .position(|(_, _, _, ones)| ones.iter().all(|l| self.by_label.contains_key(l)))
            else {
                return;
            };
            let (from, phase, round, ones) = self.parked.swap_remove(k);
            if let Some(c) = self.parked_count.get_mut(&from) {
                *c -= 1;
            }
            self.apply_ones(from, phase, round, &ones, out);
        }
    }

    /// A zero from `from` in every instance not named in `ones`.
    fn apply_ones(
        &mut self,
        from: ProcessId,
        phase: Phase,
        round: u32,
        ones: &[Digest],
        out: &mut Vec<Effect>,
    ) {
        let named: HashSet<usize> = ones
            .iter()
            .filter_map(|l| self.by_label.get(l).copied())
            .collect();
        for i in 0..self.slots.len() {
            if named.contains(&i) {
                continue;
            }
            let m = match phase {
                Phase::Est => BinMsg::Est(round, false),
                Phase::Aux => BinMsg::Aux(round, false),
            };
            self.feed(i, from, m, out);
        }
    }

    fn apply(&mut self, i: usize, actions: Vec<BinAction>, out: &mut Vec<Effect>) {
        for a in actions {
            match a {
                BinAction::Est {
                    round,
                    bit,
                    initial: true,
                    fresh,
                } => self.handler_broadcast(i, Phase::Est, round, bit, fresh, out),
                BinAction::Est {
                    round,
                    bit,
                    initial: false,
                    ..
                } => match self.slots[i].label {
                    Some(label) => out.push(self.envelope(MessageBody::Est { round, label, bit })),
                    None => self.slots[i].deferred_relays.push((round, bit)),
                },
                BinAction::Aux { round, bit } => {
                    self.handler_broadcast(i, Phase::Aux, round, bit, true, out)
                }
                BinAction::Coord { round, bit } => {
                    if let Some(label) = self.slots[i].label {
                        out.push(self.envelope(MessageBody::CoordValue { round, label, bit }));
                    }
                }
                BinAction::Timer { round, delay } => out.push(Effect::SetTimer {
                    id: self.id.clone(),
                    key: ((i as u64 + 1) << 32) | round as u64,
                    delay,
                }),
                BinAction::Decide { round, bit } => self.on_bin_decide(i, bit, round, out),
            }
        }
    }

    /// Ones go out individually; zeros are only counted, and once all n
    /// instances have spoken for `(phase, round)` a single ONES message
    /// stands in for every zero.
    fn handler_broadcast(
        &mut self,
        i: usize,
        phase: Phase,
        round: u32,
        bit: bool,
        fresh: bool,
        out: &mut Vec<Effect>,
    ) {
        if bit {
            match self.slots[i].label {
                Some(label) => {
                    if fresh {
                        let body = match phase {
                            Phase::Est => MessageBody::Est { round, label, bit },
                            Phase::Aux => MessageBody::Aux { round, label, bit },
                        };
                        out.push(self.envelope(body));
                    }
                    self.ones.entry((phase, round)).or_default().push(label);
                }
                None => debug_assert!(false, "unlabelled instance voted 1"),
            }
        }
        let n = self.cfg.n;
        let count = self.counts.entry((phase, round)).or_default();
        *count += 1;
        if *count == n {
            let ones = self.ones.remove(&(phase, round)).unwrap_or_default();
            if ones.len() < n {
                out.push(self.envelope(MessageBody::Ones {
                    phase,
                    round,
                    ones: Arc::new(ones),
                }));
            }
        }
    }

    fn on_bin_decide(&mut self, i: usize, bit: bool, round: u32, out: &mut Vec<Effect>) {
        self.decision_count += 1;
        self.max_decide_round = self.max_decide_round.max(round);
        if bit {
            if let Some(label) = self.slots[i].label {
                self.decided_ones.insert(label);
            }
        }
        if self.decided_ones.len() >= self.cfg.n - self.cfg.t && !self.zeros_started {
            if self.cfg.zero_delay == 0 {
                self.start_zeros(out);
            } else if !self.zero_timer_set {
                self.zero_timer_set = true;
                out.push(Effect::SetTimer {
                    id: self.id.clone(),
                    key: ZERO_TIMER,
                    delay: self.cfg.zero_delay,
                });
            }
        }
        if self.decision_count == self.cfg.n {
            let h = self.max_decide_round + 2;
            for s in &mut self.slots {
                s.cons.set_halt_round(h);
            }
        }
        self.try_output(out);
    }

    fn start_zeros(&mut self, out: &mut Vec<Effect>) {
        if self.zeros_started {
            return;
        }
        self.zeros_started = true;
        for i in 0..self.slots.len() {
            if !self.slots[i].cons.proposed() {
                let mut actions = Vec::new();
                let _ = self.slots[i].cons.propose(false, &mut actions);
                self.apply(i, actions, out);
            }
        }
    }

    fn try_output(&mut self, out: &mut Vec<Effect>) {
        if self.decided.is_some() || self.decision_count < self.cfg.n {
            return;
        }
        let Some(vector) = self
            .decided_ones
            .iter()
            .map(|l| self.proposals.get(l).cloned())
            .collect::<Option<Vec<_>>>()
        else {
            return;
        };
        let vector = Arc::new(vector);
        self.decided = Some(vector.clone());
        out.push(Effect::Output(Output::VectorDecided {
            id: self.id.clone(),
            vector,
        }));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trs::{keygen, PublicKey};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn always() -> Validity {
        Arc::new(|_: &Payload| true)
    }

    struct Net {
        nodes: Vec<Avcp>,
        sks: Vec<SecretKey>,
        rng: ChaCha20Rng,
        pool: Vec<(Option<ProcessId>, ProcessId, Arc<Envelope>)>,
        messages: usize,
    }

    impl Net {
        fn new(n: usize, t: usize, seed: u64, valid: Validity) -> Net {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let (sks, pks): (Vec<SecretKey>, Vec<PublicKey>) =
                (0..n).map(|_| keygen(&mut rng)).unzip();
            let ring = Arc::new(Ring::new(pks).unwrap());
            let nodes = (1..=n)
                .map(|i| {
                    Avcp::new(
                        Arc::from(&b"v"[..]),
                        i,
                        AvcpConfig::new(n, t),
                        ring.clone(),
                        valid.clone(),
                    )
                    .unwrap()
                })
                .collect();
            Net {
                nodes,
                sks,
                rng,
                pool: Vec::new(),
                messages: 0,
            }
        }

        fn push(&mut self, from: ProcessId, out: Vec<Effect>) {
            let n = self.nodes.len();
            for e in out {
                match e {
                    Effect::Broadcast(m) => {
                        self.messages += n;
                        (1..=n).for_each(|to| self.pool.push((Some(from), to, m.clone())))
                    }
                    Effect::AnonBroadcast(m) => {
                        self.messages += n;
                        (1..=n).for_each(|to| self.pool.push((None, to, m.clone())))
                    }
                    Effect::Send { to, msg } => {
                        self.messages += 1;
                        self.pool.push((Some(from), to, msg))
                    }
                    _ => {}
                }
            }
        }

        /// Random-order delivery; processes in `silent` never send.
        fn run(&mut self, proposers: &[ProcessId], silent: &[ProcessId]) {
            for &p in proposers {
                let sk = self.sks[p - 1].clone();
                let out = self.nodes[p - 1]
                    .propose(vec![p as u8; 8], &sk, &mut self.rng)
                    .unwrap();
                self.push(p, out);
            }
            while !self.pool.is_empty() {
                let k = self.rng.gen_range(0..self.pool.len());
                let (from, to, m) = self.pool.swap_remove(k);
                if silent.contains(&to) {
                    continue;
                }
                let mut out = Vec::new();
                self.nodes[to - 1].handle(from, &m.body, &mut out);
                self.push(to, out);
            }
        }
    }

    #[test]
    fn fault_free_agreement() {
        for seed in 0..10 {
            let mut net = Net::new(4, 1, seed, always());
            net.run(&[1, 2, 3, 4], &[]);
            let first = net.nodes[0].decided().expect("decided").clone();
            assert!(first.len() >= 3);
            for nd in &net.nodes {
                assert_eq!(nd.decided().unwrap().as_slice(), first.as_slice());
                assert!(nd.halted());
            }
            let labels: Vec<Digest> = first.iter().map(|p| p.digest()).collect();
            let mut sorted = labels.clone();
            sorted.sort();
            assert_eq!(labels, sorted);
        }
    }

    #[test]
    fn silent_process_instance_decides_zero() {
        for seed in 0..10 {
            let mut net = Net::new(4, 1, seed, always());
            net.run(&[1, 2, 3], &[4]);
            let v = net.nodes[0].decided().expect("decided").clone();
            assert_eq!(v.len(), 3);
            for nd in &net.nodes[..3] {
                assert_eq!(nd.decided().unwrap().as_slice(), v.as_slice());
            }
        }
    }

    #[test]
    fn invalid_proposals_rejected_locally() {
        let valid: Validity = Arc::new(|p: &Payload| p.message().first() != Some(&0xff));
        let mut net = Net::new(4, 1, 1, valid);
        let sk = net.sks[0].clone();
        let err = net.nodes[0]
            .propose(vec![0xff], &sk, &mut net.rng)
            .unwrap_err();
        assert!(matches!(err, AvcpError::InvalidProposal));
        assert!(!net.nodes[0].broadcast().has_proposed());
    }

    #[test]
    fn unanimous_timely_proposals_skip_ones_messages() {
        let mut net = Net::new(4, 1, 2, always());
        net.run(&[1, 2, 3, 4], &[]);
        assert!(net.nodes.iter().all(|n| n.decided().is_some()));
        assert!(net.messages > 0);
    }

    #[test]
    fn handler_counts_and_ones_batch() {
        let mut net = Net::new(4, 1, 3, always());
        let node = &mut net.nodes[0];
        let mut out = Vec::new();
        // three labelled instances vote 1, the unlabelled one votes 0
        for (k, l) in [b"a", b"b", b"c"].iter().enumerate() {
            let label = crate::crypto::digest(*l);
            node.slots[k].label = Some(label);
            node.by_label.insert(label, k);
        }
        node.unlabelled = vec![3];
        for k in 0..3 {
            node.handler_broadcast(k, Phase::Aux, 1, true, true, &mut out);
        }
        assert_eq!(out.len(), 3);
        node.handler_broadcast(3, Phase::Aux, 1, false, true, &mut out);
        assert_eq!(out.len(), 4);
        let Effect::Broadcast(m) = &out[3] else {
            panic!()
        };
        let MessageBody::Ones {
            phase: Phase::Aux,
            round: 1,
            ones,
        } = &m.body
        else {
            panic!()
        };
        assert_eq!(ones.len(), 3);

        // all ones: no batch
        out.clear();
        for k in 0..3 {
            node.handler_broadcast(k, Phase::Est, 2, true, true, &mut out);
        }
        node.slots[3].label = Some(crate::crypto::digest(b"d"));
        node.handler_broadcast(3, Phase::Est, 2, true, true, &mut out);
        assert_eq!(out.len(), 4);
        assert!(out
            .iter()
            .all(|e| matches!(e, Effect::Broadcast(m) if m.body.kind_name() == "EST")));
    }

    #[test]
    fn ones_deposit_zero_outside_set() {
        let mut net = Net::new(4, 1, 4, always());
        let node = &mut net.nodes[0];
        let a = crate::crypto::digest(b"a");
        node.slots[0].label = Some(a);
        node.by_label.insert(a, 0);
        node.unlabelled = vec![3, 2, 1];
        let mut out = Vec::new();
        for s in 2..=4 {
            node.on_ones(s, Phase::Est, 1, Arc::new(vec![a]), &mut out);
        }
        // duplicate ignored
        node.on_ones(4, Phase::Est, 1, Arc::new(vec![a]), &mut out);
        for k in 1..4 {
            assert_eq!(node.slots[k].cons.bin_values(1), [true, false]);
        }
        assert_eq!(node.slots[0].cons.bin_values(1), [false, false]);

        // unknown label parks until labelled
        let b = crate::crypto::digest(b"b");
        node.on_ones(2, Phase::Est, 2, Arc::new(vec![b]), &mut out);
        assert_eq!(node.parked.len(), 1);
    }
}
