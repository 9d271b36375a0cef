//! The event loop: processes, channels and faulty behaviours.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use anonbft::aarbp::{AarbpConfig, Broadcast};
use anonbft::avcp::{Avcp, AvcpConfig, Validity};
use anonbft::bincons::{BinConfig, BinNode};
use anonbft::crypto::{self, Digest};
use anonbft::election::{Election, ElectionConfig};
use anonbft::tenc::{self, Ciphertext, DecryptionShare, TencPublic};
use anonbft::trs::{self, IssueTag, Ring, SecretKey};
use anonbft::wire::{BroadcastBody, Envelope, InstanceId, MessageBody, Payload, Phase};
use anonbft::{Effect, Evidence, Execution, Output, ProcessId};

use crate::config::{Adversary, Behavior, ConfigError, Protocol, SimConfig, TraceLevel};
use crate::trace::{Direction, Metrics, TraceRecord};

/// Rounds for which a zero-spamming process volunteers zero batches.
const SPAM_ROUNDS: u32 = 3;

pub const VECTOR_PREFIX: &[u8] = b"proposal/";

/// Validity used by vector scenarios.
pub fn vector_validity() -> Validity {
    Arc::new(|p: &Payload| p.message().starts_with(VECTOR_PREFIX))
}

/// Dealer output plus the secrets only the harness may see.
pub struct Oracle {
    pub id: InstanceId,
    pub ring: Arc<Ring>,
    pub secrets: Vec<SecretKey>,
    pub init_tag: IssueTag,
    pub tenc_public: Option<Arc<TencPublic>>,
}

impl Oracle {
    /// Ring position that signed `p`, if the signature verifies.
    pub fn signer(&self, p: &Payload) -> Option<ProcessId> {
        trs::oracle::find_index(&self.init_tag, p.message(), p.signature(), &self.secrets).ok()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ProcessOutcome {
    pub id: ProcessId,
    pub behavior: Option<Behavior>,
    /// Digests of the INITs this process emitted.
    pub proposed: Vec<Digest>,
    pub bin_proposal: Option<bool>,
    pub ballot_content: Option<Vec<u8>>,
    pub delivered: Vec<(u64, Arc<Payload>)>,
    /// `(value, round, step)`.
    pub bin_decision: Option<(bool, u32, u64)>,
    pub vector: Option<(u64, Arc<Vec<Arc<Payload>>>)>,
    pub unique_encs: Option<Vec<Ciphertext>>,
    pub ballots: Option<(u64, Arc<Vec<Vec<u8>>>)>,
    pub evidence: Vec<(u64, Evidence)>,
    pub decs_sent: Option<u64>,
    /// The foreign INIT a replaying process copied.
    pub replayed: Option<Arc<Payload>>,
    pub halted: bool,
}

impl ProcessOutcome {
    pub fn is_honest(&self) -> bool {
        self.behavior.is_none_or(|b| b.is_honest())
    }

    /// Step of the protocol's final output, if produced.
    pub fn finish_step(&self, protocol: Protocol) -> Option<u64> {
        match protocol {
            Protocol::Broadcast => self.delivered.last().map(|(s, _)| *s),
            Protocol::Binary => self.bin_decision.map(|(_, _, s)| s),
            Protocol::Vector => self.vector.as_ref().map(|(s, _)| *s),
            Protocol::Election => self.ballots.as_ref().map(|(s, _)| *s),
        }
    }
}

pub struct RunOutput {
    pub config: SimConfig,
    pub trace: Vec<TraceRecord>,
    pub metrics: Metrics,
    pub processes: Vec<ProcessOutcome>,
    pub budget: u64,
    /// True if events were still pending past the step budget.
    pub exhausted: bool,
    /// Largest `deliver - max(send, gst)` over regular messages.
    pub max_regular_lateness: u64,
    pub oracle: Oracle,
}

impl RunOutput {
    pub fn honest(&self) -> impl Iterator<Item = &ProcessOutcome> {
        self.processes.iter().filter(|p| p.is_honest())
    }

    pub fn trace_text(&self) -> String {
        crate::trace::export(&self.trace)
    }
}

enum Node {
    Broadcast(Box<Broadcast>),
    Binary(BinNode),
    Vector(Box<Avcp>),
    Election(Box<Election>),
}

struct Process {
    id: ProcessId,
    behavior: Behavior,
    node: Node,
    rng: ChaCha20Rng,
    secret: SecretKey,
    replayed: Option<Arc<Payload>>,
}

impl Process {
    fn active(&self, now: u64) -> bool {
        !matches!(self.behavior, Behavior::Crash { at } if now >= at)
    }

    fn start(&mut self, cfg: &SimConfig, out: &mut Vec<Effect>) {
        let i = self.id;
        let mut random_tail = vec![0u8; cfg.payload_size];
        self.rng.fill_bytes(&mut random_tail);
        let rng = &mut self.rng;
        match &mut self.node {
            Node::Broadcast(b) => {
                let msg = [format!("msg/{i}/").into_bytes(), random_tail].concat();
                if self.behavior == Behavior::DoubleSign {
                    out.extend(double_sign(b, &msg, &self.secret, rng));
                } else if self.behavior != Behavior::CiphertextReplay {
                    out.extend(b.propose(msg, &self.secret, rng).expect("first proposal"));
                }
            }
            Node::Binary(b) => {
                let bit = cfg.proposals.as_ref().is_none_or(|p| p[i - 1]);
                out.extend(b.propose(bit).expect("first proposal"));
            }
            Node::Vector(a) => {
                let msg = [
                    VECTOR_PREFIX.to_vec(),
                    format!("{i}/").into_bytes(),
                    random_tail,
                ]
                .concat();
                if self.behavior == Behavior::DoubleSign {
                    let env1 = a
                        .broadcast()
                        .sign_init(msg.clone(), &self.secret, rng)
                        .unwrap();
                    let mut msg2 = msg;
                    msg2.extend_from_slice(b"/second");
                    let env2 = a.broadcast().sign_init(msg2, &self.secret, rng).unwrap();
                    out.push(Effect::AnonBroadcast(env1));
                    out.push(Effect::AnonBroadcast(env2));
                } else if self.behavior != Behavior::CiphertextReplay {
                    out.extend(a.propose(msg, &self.secret, rng).expect("first proposal"));
                }
            }
            Node::Election(e) => {
                let content = format!("ballot-{i}").into_bytes();
                match self.behavior {
                    Behavior::CiphertextReplay => {}
                    Behavior::DoubleSign => {
                        let public = e.public().clone();
                        let id = e.avcp().id().clone();
                        for extra in [&b""[..], b"/second"] {
                            let c = anonbft::election::prepare_ballot(
                                &public,
                                &id,
                                &[content.as_slice(), extra].concat(),
                                rng,
                            )
                            .unwrap();
                            let env = e
                                .avcp()
                                .broadcast()
                                .sign_init(c.to_bytes(), &self.secret, rng)
                                .unwrap();
                            out.push(Effect::AnonBroadcast(env));
                        }
                    }
                    _ => out.extend(
                        e.propose(&content, &self.secret, rng)
                            .expect("first proposal"),
                    ),
                }
            }
        }
        if self.behavior == Behavior::ZeroSpam {
            out.extend(zero_spam(&self.node));
        }
    }

    fn handle(&mut self, from: Option<ProcessId>, msg: &Envelope, out: &mut Vec<Effect>) {
        if self.behavior == Behavior::CiphertextReplay && self.replayed.is_none() {
            if let MessageBody::Init(p) = &msg.body {
                self.replayed = Some(p.clone());
                let rng = &mut self.rng;
                match &mut self.node {
                    Node::Election(e) => {
                        if let Ok(c) = Ciphertext::from_bytes(p.message()) {
                            out.extend(
                                e.propose_ciphertext(&c, &self.secret, rng)
                                    .unwrap_or_default(),
                            );
                        }
                    }
                    Node::Vector(a) => out.extend(
                        a.propose(p.message().to_vec(), &self.secret, rng)
                            .unwrap_or_default(),
                    ),
                    Node::Broadcast(b) => out.extend(
                        b.propose(p.message().to_vec(), &self.secret, rng)
                            .unwrap_or_default(),
                    ),
                    Node::Binary(_) => {}
                }
            }
        }
        match &mut self.node {
            Node::Broadcast(b) => b.handle(from, &msg.body, out),
            Node::Binary(b) => b.handle(from, &msg.body, out),
            Node::Vector(a) => a.handle(from, &msg.body, out),
            Node::Election(e) => e.handle(from, &msg.body, &mut self.rng, out),
        }
    }

    fn on_timer(&mut self, key: u64, out: &mut Vec<Effect>) {
        match &mut self.node {
            Node::Broadcast(_) => {}
            Node::Binary(b) => b.on_timer(key, out),
            Node::Vector(a) => a.on_timer(key, out),
            Node::Election(e) => e.on_timer(key, &mut self.rng, out),
        }
    }
}

fn double_sign(
    b: &mut Broadcast,
    msg: &[u8],
    sk: &SecretKey,
    rng: &mut ChaCha20Rng,
) -> Vec<Effect> {
    let first = b.sign_init(msg.to_vec(), sk, rng).unwrap();
    let second = b.sign_init([msg, b"/second"].concat(), sk, rng).unwrap();
    let mut out = b.propose_envelope(first).unwrap();
    out.push(Effect::AnonBroadcast(second));
    out
}

fn zero_spam(node: &Node) -> Vec<Effect> {
    let id = match node {
        Node::Broadcast(_) => return Vec::new(),
        Node::Binary(_) => None,
        Node::Vector(a) => Some(a.id().clone()),
        Node::Election(e) => Some(e.avcp().id().clone()),
    };
    let mut out = Vec::new();
    for round in 1..=SPAM_ROUNDS {
        let bodies = match &id {
            Some(_) => vec![
                MessageBody::Ones {
                    phase: Phase::Est,
                    round,
                    ones: Arc::new(Vec::new()),
                },
                MessageBody::Ones {
                    phase: Phase::Aux,
                    round,
                    ones: Arc::new(Vec::new()),
                },
            ],
            None => vec![
                MessageBody::Est {
                    round,
                    label: Digest::default(),
                    bit: false,
                },
                MessageBody::Aux {
                    round,
                    label: Digest::default(),
                    bit: false,
                },
            ],
        };
        let id = id.clone().unwrap_or_else(binary_id);
        for body in bodies {
            out.push(Effect::Broadcast(Arc::new(Envelope::new(id.clone(), body))));
        }
    }
    out
}

fn binary_id() -> InstanceId {
    Arc::from(&b"bin"[..])
}

/// Outgoing rewrite for faulty senders; `None` drops the message.
fn corrupt(
    behavior: Behavior,
    to: ProcessId,
    msg: &Arc<Envelope>,
    rng: &mut ChaCha20Rng,
) -> Option<Arc<Envelope>> {
    let rebuild = |body| Some(Arc::new(Envelope::new(msg.id.clone(), body)));
    match (behavior, &msg.body) {
        (Behavior::Mute, _) => None,
        (Behavior::EchoEquivocate, MessageBody::Echo(b)) if to.is_multiple_of(2) => rebuild(
            MessageBody::Echo(BroadcastBody::Digest(bogus(b.digest(), to))),
        ),
        (Behavior::EchoEquivocate, MessageBody::Ready(b)) if to.is_multiple_of(2) => rebuild(
            MessageBody::Ready(BroadcastBody::Digest(bogus(b.digest(), to))),
        ),
        (Behavior::ZeroSpam, &MessageBody::Est { round, label, .. }) => rebuild(MessageBody::Est {
            round,
            label,
            bit: false,
        }),
        (Behavior::ZeroSpam, &MessageBody::Aux { round, label, .. }) => rebuild(MessageBody::Aux {
            round,
            label,
            bit: false,
        }),
        (Behavior::ZeroSpam, &MessageBody::CoordValue { round, label, .. }) => {
            rebuild(MessageBody::CoordValue {
                round,
                label,
                bit: false,
            })
        }
        (Behavior::ZeroSpam, MessageBody::Ones { phase, round, .. }) => {
            rebuild(MessageBody::Ones {
                phase: *phase,
                round: *round,
                ones: Arc::new(Vec::new()),
            })
        }
        (Behavior::ShareForge, MessageBody::Decs(entries)) => {
            let forged = entries
                .iter()
                .map(|(c, s)| (c.clone(), DecryptionShare::forged(s.index, rng)))
                .collect();
            rebuild(MessageBody::Decs(Arc::new(forged)))
        }
        _ => Some(msg.clone()),
    }
}

fn bogus(d: Digest, to: ProcessId) -> Digest {
    crypto::digest_with(
        b"simnet/bogus",
        &[d.as_bytes().as_slice(), &(to as u64).to_be_bytes()].concat(),
    )
}

enum EventKind {
    Deliver {
        to: ProcessId,
        from: Option<ProcessId>,
        msg: Arc<Envelope>,
        sent: u64,
    },
    Timer {
        to: ProcessId,
        key: u64,
    },
}

struct Event {
    step: u64,
    prio: u64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.step, self.prio, self.seq).cmp(&(other.step, other.prio, other.seq))
    }
}

struct Network<'a> {
    cfg: &'a SimConfig,
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    net_rng: ChaCha20Rng,
    anon_rng: ChaCha20Rng,
    corrupt_rng: ChaCha20Rng,
    trace: Vec<TraceRecord>,
    metrics: Metrics,
    max_lateness: u64,
}

fn stream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl<'a> Network<'a> {
    fn push(&mut self, step: u64, prio: Option<u64>, kind: EventKind) {
        self.seq += 1;
        let prio = prio.unwrap_or(self.seq);
        self.queue.push(Reverse(Event {
            step,
            prio,
            seq: self.seq,
            kind,
        }));
    }

    /// Delivery step and tie-break priority for a regular message.
    fn regular_slot(&mut self, now: u64) -> (u64, Option<u64>) {
        let (gst, delta) = (self.cfg.gst, self.cfg.delta);
        if now >= gst {
            return (now + self.net_rng.gen_range(1..=delta), None);
        }
        let latest = gst + delta;
        match self.cfg.adversary {
            Adversary::Fifo => (now + 1, None),
            Adversary::Random => (now + self.net_rng.gen_range(1..=latest - now), None),
            Adversary::FifoInversion => {
                let at = (2 * gst - now).clamp(now + 1, latest);
                (at, Some(u64::MAX - self.seq))
            }
        }
    }

    fn record(&mut self, rec: TraceRecord) {
        let keep = match self.cfg.trace_level {
            TraceLevel::Full => true,
            TraceLevel::SendsOnly => rec.direction != Direction::Recv,
            TraceLevel::Summary => false,
        };
        if keep {
            self.trace.push(rec);
        }
    }

    fn send(&mut self, now: u64, from: ProcessId, to: ProcessId, msg: Arc<Envelope>) {
        let len = msg.encoded_len();
        let kind = msg.body.kind_name();
        self.metrics.record_send(kind, len, 1);
        self.record(TraceRecord {
            step: now,
            process: from,
            direction: Direction::Send,
            kind,
            label: msg.body.label(),
            bytes_len: len,
        });
        let (at, prio) = self.regular_slot(now);
        self.push(
            at,
            prio,
            EventKind::Deliver {
                to,
                from: Some(from),
                msg,
                sent: now,
            },
        );
    }

    fn anon_send(&mut self, now: u64, from: ProcessId, to: ProcessId, msg: Arc<Envelope>) {
        let len = msg.encoded_len();
        let kind = msg.body.kind_name();
        self.metrics.record_send(kind, len, 1);
        self.record(TraceRecord {
            step: now,
            process: from,
            direction: Direction::Send,
            kind,
            label: msg.body.label(),
            bytes_len: len,
        });
        let (lo, hi) = self.cfg.anon_delay_range;
        let at = now + self.anon_rng.gen_range(lo..=hi);
        self.push(
            at,
            None,
            EventKind::Deliver {
                to,
                from: None,
                msg,
                sent: u64::MAX,
            },
        );
    }
}

struct Setup {
    oracle: Oracle,
    processes: Vec<Process>,
}

fn setup(cfg: &SimConfig) -> Setup {
    let mut rng = stream(cfg.seed, 0);
    let (secrets, keys): (Vec<SecretKey>, Vec<_>) =
        (0..cfg.n).map(|_| trs::keygen(&mut rng)).unzip();
    let ring = Arc::new(Ring::new(keys).expect("distinct keys"));
    let id: InstanceId = match cfg.protocol {
        Protocol::Binary => binary_id(),
        _ => Arc::from(
            format!("{:?}/{}", cfg.protocol, cfg.seed)
                .to_lowercase()
                .as_bytes(),
        ),
    };
    let init_tag =
        IssueTag::for_message_type(ring.clone(), &id, anonbft::aarbp::INIT_TYPE, None).unwrap();
    let dealt = (cfg.protocol == Protocol::Election)
        .then(|| tenc::deal(cfg.n, cfg.t, &mut rng).expect("n > 3t checked"));
    let tenc_public = dealt.as_ref().map(|(p, _)| Arc::new(p.clone()));
    let exec = Execution::default();
    let avcp_cfg = AvcpConfig {
        n: cfg.n,
        t: cfg.t,
        hashing: cfg.hashing,
        coord_timeout: cfg.coord_timeout(),
        zero_delay: cfg.zero_delay,
        exec,
    };
    let processes = (1..=cfg.n)
        .map(|i| {
            let node = match cfg.protocol {
                Protocol::Broadcast => {
                    let c = AarbpConfig {
                        n: cfg.n,
                        t: cfg.t,
                        hashing: cfg.hashing,
                        exec,
                    };
                    Node::Broadcast(Box::new(
                        Broadcast::new(id.clone(), i, c, ring.clone()).unwrap(),
                    ))
                }
                Protocol::Binary => {
                    let c = BinConfig {
                        coord_timeout: cfg.coord_timeout(),
                        ..BinConfig::new(cfg.n, cfg.t, i)
                    };
                    Node::Binary(BinNode::new(id.clone(), c))
                }
                Protocol::Vector => Node::Vector(Box::new(
                    Avcp::new(id.clone(), i, avcp_cfg, ring.clone(), vector_validity()).unwrap(),
                )),
                Protocol::Election => {
                    let shares = &dealt.as_ref().unwrap().1;
                    let c = ElectionConfig {
                        avcp: avcp_cfg,
                        reduced_broadcasters: cfg.reduced_broadcasters,
                    };
                    Node::Election(Box::new(
                        Election::new(
                            id.clone(),
                            i,
                            c,
                            ring.clone(),
                            tenc_public.clone().unwrap(),
                            shares[i - 1].clone(),
                        )
                        .unwrap(),
                    ))
                }
            };
            Process {
                id: i,
                behavior: cfg.behavior(i),
                node,
                rng: stream(cfg.seed, 16 + i as u64),
                secret: secrets[i - 1].clone(),
                replayed: None,
            }
        })
        .collect();
    Setup {
        oracle: Oracle {
            id,
            ring,
            secrets,
            init_tag,
            tenc_public,
        },
        processes,
    }
}

/// Runs one simulation to quiescence or until the step budget runs out.
pub fn run(cfg: &SimConfig) -> Result<RunOutput, ConfigError> {
    cfg.validate()?;
    let Setup {
        oracle,
        mut processes,
    } = setup(cfg);
    let budget = cfg.step_budget();
    let mut net = Network {
        cfg,
        queue: BinaryHeap::new(),
        seq: 0,
        net_rng: stream(cfg.seed, 1),
        anon_rng: stream(cfg.seed, 2),
        corrupt_rng: stream(cfg.seed, 3),
        trace: Vec::new(),
        metrics: Metrics::default(),
        max_lateness: 0,
    };
    let mut outcomes: Vec<ProcessOutcome> = processes
        .iter()
        .map(|p| ProcessOutcome {
            id: p.id,
            behavior: Some(p.behavior),
            bin_proposal: (cfg.protocol == Protocol::Binary)
                .then(|| cfg.proposals.as_ref().is_none_or(|v| v[p.id - 1])),
            ballot_content: (cfg.protocol == Protocol::Election && p.behavior.is_honest())
                .then(|| format!("ballot-{}", p.id).into_bytes()),
            ..Default::default()
        })
        .collect();

    for p in processes.iter_mut() {
        if !p.active(0) {
            continue;
        }
        let mut out = Vec::new();
        p.start(cfg, &mut out);
        dispatch(&mut net, p, &mut outcomes[p.id - 1], 0, out);
    }

    let mut exhausted = false;
    while let Some(Reverse(ev)) = net.queue.pop() {
        if ev.step > budget {
            exhausted = true;
            break;
        }
        let now = ev.step;
        net.metrics.end_step = now;
        let (to, out) = match ev.kind {
            EventKind::Deliver {
                to,
                from,
                msg,
                sent,
            } => {
                if from.is_some() {
                    let lateness = now.saturating_sub(sent.max(cfg.gst));
                    net.max_lateness = net.max_lateness.max(lateness);
                }
                net.record(TraceRecord {
                    step: now,
                    process: to,
                    direction: Direction::Recv,
                    kind: msg.body.kind_name(),
                    label: msg.body.label(),
                    bytes_len: msg.encoded_len(),
                });
                let p = &mut processes[to - 1];
                if !p.active(now) {
                    continue;
                }
                let mut out = Vec::new();
                p.handle(from, &msg, &mut out);
                (to, out)
            }
            EventKind::Timer { to, key } => {
                let p = &mut processes[to - 1];
                if !p.active(now) {
                    continue;
                }
                let mut out = Vec::new();
                p.on_timer(key, &mut out);
                (to, out)
            }
        };
        dispatch(
            &mut net,
            &mut processes[to - 1],
            &mut outcomes[to - 1],
            now,
            out,
        );
    }

    for (p, o) in processes.iter().zip(outcomes.iter_mut()) {
        o.replayed = p.replayed.clone();
        match &p.node {
            Node::Election(e) => {
                o.unique_encs = e.unique_encs().map(|u| u.to_vec());
                o.halted = e.avcp().halted();
            }
            Node::Vector(a) => o.halted = a.halted(),
            Node::Binary(b) => o.halted = b.cons().halted(),
            Node::Broadcast(_) => {}
        }
    }

    let finish: Vec<Option<u64>> = outcomes
        .iter()
        .filter(|o| o.is_honest())
        .map(|o| o.finish_step(cfg.protocol))
        .collect();
    net.metrics.decide_step = finish
        .iter()
        .copied()
        .collect::<Option<Vec<u64>>>()
        .and_then(|v| v.into_iter().max());
    net.metrics.vector_size = outcomes
        .iter()
        .find(|o| o.is_honest())
        .and_then(|o| o.vector.as_ref().map(|(_, v)| v.len()));

    Ok(RunOutput {
        config: cfg.clone(),
        trace: net.trace,
        metrics: net.metrics,
        processes: outcomes,
        budget,
        exhausted,
        max_regular_lateness: net.max_lateness,
        oracle,
    })
}

fn dispatch(
    net: &mut Network<'_>,
    p: &mut Process,
    outcome: &mut ProcessOutcome,
    now: u64,
    effects: Vec<Effect>,
) {
    let n = net.cfg.n;
    let sending = p.active(now) && p.behavior != Behavior::Mute;
    for e in effects {
        match e {
            Effect::Broadcast(msg) => {
                if !sending {
                    continue;
                }
                note_send(outcome, &msg, now);
                for to in 1..=n {
                    if let Some(m) = corrupt(p.behavior, to, &msg, &mut net.corrupt_rng) {
                        net.send(now, p.id, to, m);
                    }
                }
            }
            Effect::Send { to, msg } => {
                if !sending {
                    continue;
                }
                if let Some(m) = corrupt(p.behavior, to, &msg, &mut net.corrupt_rng) {
                    net.send(now, p.id, to, m);
                }
            }
            Effect::AnonBroadcast(msg) => {
                if !sending {
                    continue;
                }
                if let MessageBody::Init(payload) = &msg.body {
                    outcome.proposed.push(payload.digest());
                }
                for to in 1..=n {
                    net.anon_send(now, p.id, to, msg.clone());
                }
            }
            Effect::SetTimer { key, delay, .. } => {
                net.push(now + delay.max(1), None, EventKind::Timer { to: p.id, key });
            }
            Effect::Output(o) => record_output(net, outcome, p.id, now, o),
        }
    }
}

fn note_send(outcome: &mut ProcessOutcome, msg: &Envelope, now: u64) {
    if matches!(msg.body, MessageBody::Decs(_)) && outcome.decs_sent.is_none() {
        outcome.decs_sent = Some(now);
    }
}

fn record_output(
    net: &mut Network<'_>,
    outcome: &mut ProcessOutcome,
    id: ProcessId,
    now: u64,
    o: Output,
) {
    let (kind, label) = match o {
        Output::ArbDelivered { payload, .. } => {
            let d = payload.digest();
            outcome.delivered.push((now, payload));
            ("ARB_DELIVER", Some(d))
        }
        Output::BinDecided { value, round, .. } => {
            outcome.bin_decision.get_or_insert((value, round, now));
            ("BIN_DECIDE", None)
        }
        Output::VectorDecided { vector, .. } => {
            outcome.vector.get_or_insert((now, vector));
            ("AVC_DECIDE", None)
        }
        Output::Ballots { ballots, .. } => {
            outcome.ballots.get_or_insert((now, ballots));
            ("BALLOTS", None)
        }
        Output::Evidence(ev) => {
            let label = match &ev {
                Evidence::DoubleSign { dropped, .. } => Some(*dropped),
                Evidence::InvalidShareBatch { .. } => None,
            };
            outcome.evidence.push((now, ev));
            ("EVIDENCE", label)
        }
    };
    net.record(TraceRecord {
        step: now,
        process: id,
        direction: Direction::Output,
        kind,
        label,
        bytes_len: 0,
    });
}
