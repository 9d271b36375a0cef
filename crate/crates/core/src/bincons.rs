//! Binary Byzantine consensus: BV-broadcast, single-bit AUX exchange and a
//! rotating coordinator for termination after stabilisation.
//!
//! [`BinCons`] is transport-agnostic. It emits [`BinAction`]s that the owner
//! turns into messages: [`BinNode`] sends them directly, while the vector
//! consensus handler batches zeros across instances.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::aarbp::Senders;
use crate::crypto::Digest;
use crate::effect::{Effect, Output, ProcessId};
use crate::wire::{Envelope, InstanceId, MessageBody};

/// Upper bound on coordinator timeout growth, as a power of two.
const MAX_TIMEOUT_DOUBLINGS: u32 = 6;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BinError {
    #[error("already proposed in this instance")]
    AlreadyProposed,
}

#[derive(Debug, Clone, Copy)]
pub struct BinConfig {
    pub n: usize,
    pub t: usize,
    pub self_id: ProcessId,
    /// Steps a non-coordinator waits for the coordinator's value before
    /// sending AUX; `0` sends AUX on the first BV-delivery.
    pub coord_timeout: u64,
    /// Halt two rounds after deciding. Vector consensus turns this off and
    /// sets a common halting round instead.
    pub auto_halt: bool,
}

impl BinConfig {
    pub fn new(n: usize, t: usize, self_id: ProcessId) -> Self {
        BinConfig {
            n,
            t,
            self_id,
            coord_timeout: 0,
            auto_halt: true,
        }
    }
}

/// Coordinator of round `r >= 1`.
pub fn coordinator(r: u32, n: usize) -> ProcessId {
    ((r as usize - 1) % n) + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinAction {
    /// BV-broadcast of `bit`. `initial` marks the once-per-round broadcast
    /// of the estimate, as opposed to the relay at `t+1`; `fresh` is false
    /// when the same bit already went out in this round.
    Est {
        round: u32,
        bit: bool,
        initial: bool,
        fresh: bool,
    },
    Aux {
        round: u32,
        bit: bool,
    },
    Coord {
        round: u32,
        bit: bool,
    },
    Timer {
        round: u32,
        delay: u64,
    },
    Decide {
        round: u32,
        bit: bool,
    },
}

#[derive(Debug)]
struct RoundState {
    est_from: [Senders; 2],
    est_sent: [bool; 2],
    bin_values: [bool; 2],
    first_bv: Option<bool>,
    aux: Vec<bool>,
    aux_senders: Senders,
    aux_sent: bool,
    coord_sent: bool,
    coord_value: Option<bool>,
    timer_set: bool,
    timer_fired: bool,
}

impl RoundState {
    fn new(n: usize) -> Self {
        RoundState {
            est_from: [Senders::new(n), Senders::new(n)],
            est_sent: [false; 2],
            bin_values: [false; 2],
            first_bv: None,
            aux: Vec::new(),
            aux_senders: Senders::new(n),
            aux_sent: false,
            coord_sent: false,
            coord_value: None,
            timer_set: false,
            timer_fired: false,
        }
    }
}

#[derive(Debug)]
pub struct BinCons {
    cfg: BinConfig,
    round: u32,
    est: bool,
    rounds: BTreeMap<u32, RoundState>,
    decided: Option<(bool, u32)>,
    halt_round: Option<u32>,
    halted: bool,
    misses: u32,
}

impl BinCons {
    pub fn new(cfg: BinConfig) -> Self {
        BinCons {
            cfg,
            round: 0,
            est: false,
            rounds: BTreeMap::new(),
            decided: None,
            halt_round: None,
            halted: false,
            misses: 0,
        }
    }

    pub fn config(&self) -> &BinConfig {
        &self.cfg
    }

    /// Current round; `0` before proposing.
    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn proposed(&self) -> bool {
        self.round > 0
    }

    pub fn estimate(&self) -> bool {
        self.est
    }

    /// `(value, round)` once decided.
    pub fn decided(&self) -> Option<(bool, u32)> {
        self.decided
    }

    pub fn halted(&self) -> bool {
        self.halted
    }

    pub fn halt_round(&self) -> Option<u32> {
        self.halt_round
    }

    pub fn bin_values(&self, r: u32) -> [bool; 2] {
        self.rounds.get(&r).map_or([false; 2], |s| s.bin_values)
    }

    pub fn propose(&mut self, b: bool, out: &mut Vec<BinAction>) -> Result<(), BinError> {
        if self.round != 0 {
            return Err(BinError::AlreadyProposed);
        }
        self.round = 1;
        self.est = b;
        self.start_round(out);
        Ok(())
    }

    /// Participation ends after round `h`; halts now if already past it.
    pub fn set_halt_round(&mut self, h: u32) {
        self.halt_round = Some(h);
        if self.round > h {
            self.halt();
        }
    }

    fn halt(&mut self) {
        self.halted = true;
        self.rounds.clear();
    }

    fn state(&mut self, r: u32) -> &mut RoundState {
        let n = self.cfg.n;
        self.rounds.entry(r).or_insert_with(|| RoundState::new(n))
    }

    fn start_round(&mut self, out: &mut Vec<BinAction>) {
        let r = self.round;
        let b = self.est;
        let st = self.state(r);
        let fresh = !st.est_sent[b as usize];
        st.est_sent[b as usize] = true;
        out.push(BinAction::Est {
            round: r,
            bit: b,
            initial: true,
            fresh,
        });
        self.progress(r, out);
    }

    pub fn on_est(&mut self, from: ProcessId, r: u32, b: bool, out: &mut Vec<BinAction>) {
        if self.halted || r == 0 {
            return;
        }
        let t = self.cfg.t;
        let st = self.state(r);
        if !st.est_from[b as usize].insert(from) {
            return;
        }
        let c = st.est_from[b as usize].len();
        if c > t && !st.est_sent[b as usize] {
            st.est_sent[b as usize] = true;
            out.push(BinAction::Est {
                round: r,
                bit: b,
                initial: false,
                fresh: true,
            });
        }
        if c > 2 * t && !st.bin_values[b as usize] {
            st.bin_values[b as usize] = true;
            st.first_bv.get_or_insert(b);
            self.progress(r, out);
        }
    }

    pub fn on_aux(&mut self, from: ProcessId, r: u32, b: bool, out: &mut Vec<BinAction>) {
        if self.halted || r == 0 {
            return;
        }
        let st = self.state(r);
        if !st.aux_senders.insert(from) {
            return;
        }
        st.aux.push(b);
        self.progress(r, out);
    }

    pub fn on_coord(&mut self, from: ProcessId, r: u32, b: bool, out: &mut Vec<BinAction>) {
        if self.halted || r == 0 || from != coordinator(r, self.cfg.n) {
            return;
        }
        let st = self.state(r);
        if st.coord_value.is_some() {
            return;
        }
        st.coord_value = Some(b);
        self.progress(r, out);
    }

    pub fn on_timer(&mut self, r: u32, out: &mut Vec<BinAction>) {
        if self.halted {
            return;
        }
        let Some(st) = self.rounds.get_mut(&r) else {
            return;
        };
        if st.timer_fired {
            return;
        }
        st.timer_fired = true;
        if st.coord_value.is_none() {
            self.misses = (self.misses + 1).min(MAX_TIMEOUT_DOUBLINGS);
        }
        self.progress(r, out);
    }

    fn progress(&mut self, r: u32, out: &mut Vec<BinAction>) {
        if self.halted || r != self.round || r == 0 {
            return;
        }
        let cfg = self.cfg;
        let timeout = cfg.coord_timeout << self.misses;
        let st = self.rounds.get_mut(&r).expect("current round exists");
        let Some(first) = st.first_bv else {
            return;
        };
        let is_coord = coordinator(r, cfg.n) == cfg.self_id;
        if is_coord && !st.coord_sent {
            st.coord_sent = true;
            out.push(BinAction::Coord {
                round: r,
                bit: first,
            });
        }
        if !st.aux_sent {
            let suggested = st.coord_value.filter(|w| st.bin_values[*w as usize]);
            let bit = if is_coord {
                Some(first)
            } else if suggested.is_some() {
                suggested
            } else if cfg.coord_timeout == 0 || st.timer_fired {
                Some(first)
            } else {
                if !st.timer_set {
                    st.timer_set = true;
                    out.push(BinAction::Timer {
                        round: r,
                        delay: timeout,
                    });
                }
                None
            };
            let Some(bit) = bit else {
                return;
            };
            st.aux_sent = true;
            out.push(BinAction::Aux { round: r, bit });
        }

        let need = cfg.n - cfg.t;
        let mut seen = [false; 2];
        let mut count = 0;
        for &v in &st.aux {
            if st.bin_values[v as usize] {
                seen[v as usize] = true;
                count += 1;
                if count == need {
                    break;
                }
            }
        }
        if count < need {
            return;
        }
        let parity = r % 2 == 1;
        if seen[0] != seen[1] {
            let w = seen[1];
            self.est = w;
            if w == parity && self.decided.is_none() {
                self.decided = Some((w, r));
                out.push(BinAction::Decide { round: r, bit: w });
                if cfg.auto_halt {
                    self.halt_round = Some(r + 2);
                }
            }
        } else {
            self.est = parity;
        }
        if self.halt_round.is_some_and(|h| r >= h) {
            self.halt();
            return;
        }
        self.round += 1;
        self.start_round(out);
    }
}

/// A stand-alone binary consensus participant on the unlabelled instance.
pub struct BinNode {
    id: InstanceId,
    cons: BinCons,
}

impl BinNode {
    pub fn new(id: InstanceId, cfg: BinConfig) -> Self {
        BinNode {
            id,
            cons: BinCons::new(cfg),
        }
    }

    pub fn cons(&self) -> &BinCons {
        &self.cons
    }

    pub fn propose(&mut self, b: bool) -> Result<Vec<Effect>, BinError> {
        let mut actions = Vec::new();
        self.cons.propose(b, &mut actions)?;
        let mut out = Vec::new();
        self.apply(actions, &mut out);
        Ok(out)
    }

    pub fn handle(&mut self, from: Option<ProcessId>, body: &MessageBody, out: &mut Vec<Effect>) {
        let Some(from) = from else {
            return;
        };
        let mut actions = Vec::new();
        match *body {
            MessageBody::Est { round, bit, .. } => self.cons.on_est(from, round, bit, &mut actions),
            MessageBody::Aux { round, bit, .. } => self.cons.on_aux(from, round, bit, &mut actions),
            MessageBody::CoordValue { round, bit, .. } => {
                self.cons.on_coord(from, round, bit, &mut actions)
            }
            _ => return,
        }
        self.apply(actions, out);
    }

    pub fn on_timer(&mut self, key: u64, out: &mut Vec<Effect>) {
        let mut actions = Vec::new();
        self.cons.on_timer(key as u32, &mut actions);
        self.apply(actions, out);
    }

    fn apply(&self, actions: Vec<BinAction>, out: &mut Vec<Effect>) {
        let label = Digest::default();
        let env = |body| Effect::Broadcast(Arc::new(Envelope::new(self.id.clone(), body)));
        for a in actions {
            match a {
                BinAction::Est {
                    round,
                    bit,
                    fresh: true,
                    ..
                } => out.push(env(MessageBody::Est { round, label, bit })),
                BinAction::Est { .. } => {}
                BinAction::Aux { round, bit } => {
                    out.push(env(MessageBody::Aux { round, label, bit }))
                }
                BinAction::Coord { round, bit } => {
                    out.push(env(MessageBody::CoordValue { round, label, bit }))
                }
                BinAction::Timer { round, delay } => out.push(Effect::SetTimer {
                    id: self.id.clone(),
                    key: round as u64,
                    delay,
                }),
                BinAction::Decide { round, bit } => out.push(Effect::Output(Output::BinDecided {
                    id: self.id.clone(),
                    label,
                    value: bit,
                    round,
                })),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn coordinator_rotates() {
        assert_eq!(coordinator(1, 4), 1);
        assert_eq!(coordinator(4, 4), 4);
        assert_eq!(coordinator(5, 4), 1);
        assert_eq!(coordinator(101, 100), 1);
    }

    #[test]
    fn propose_twice_rejected() {
        let mut c = BinCons::new(BinConfig::new(4, 1, 1));
        let mut out = Vec::new();
        c.propose(true, &mut out).unwrap();
        assert_eq!(
            out,
            vec![BinAction::Est {
                round: 1,
                bit: true,
                initial: true,
                fresh: true
            }]
        );
        assert_eq!(c.propose(false, &mut out), Err(BinError::AlreadyProposed));
    }

    #[test]
    fn bv_relay_and_deliver_thresholds() {
        let mut c = BinCons::new(BinConfig::new(4, 1, 3));
        let mut out = Vec::new();
        c.on_est(1, 1, false, &mut out);
        c.on_est(1, 1, false, &mut out);
        assert!(out.is_empty());
        c.on_est(2, 1, false, &mut out);
        assert_eq!(
            out,
            vec![BinAction::Est {
                round: 1,
                bit: false,
                initial: false,
                fresh: true
            }]
        );
        c.on_est(4, 1, false, &mut out);
        assert_eq!(c.bin_values(1), [true, false]);
        // not started, so no AUX yet
        assert_eq!(out.len(), 1);
        out.clear();
        c.propose(false, &mut out).unwrap();
        assert_eq!(
            out,
            vec![
                BinAction::Est {
                    round: 1,
                    bit: false,
                    initial: true,
                    fresh: false
                },
                BinAction::Aux {
                    round: 1,
                    bit: false
                },
            ]
        );
    }

    fn bv_deliver(c: &mut BinCons, r: u32, b: bool, out: &mut Vec<BinAction>) {
        for s in 1..=3 {
            c.on_est(s, r, b, out);
        }
    }

    #[test]
    fn round_end_rules() {
        // uniform {1} in round 1 decides
        let mut c = BinCons::new(BinConfig::new(4, 1, 2));
        let mut out = Vec::new();
        c.propose(true, &mut out).unwrap();
        bv_deliver(&mut c, 1, true, &mut out);
        for s in [1, 3, 4] {
            c.on_aux(s, 1, true, &mut out);
        }
        assert_eq!(c.decided(), Some((true, 1)));
        assert_eq!(c.round(), 2);

        // uniform {0} in round 1: est 0, no decision
        let mut c = BinCons::new(BinConfig::new(4, 1, 2));
        c.propose(false, &mut out).unwrap();
        bv_deliver(&mut c, 1, false, &mut out);
        for s in [1, 3, 4] {
            c.on_aux(s, 1, false, &mut out);
        }
        assert_eq!(c.decided(), None);
        assert!(!c.estimate());
        assert_eq!(c.round(), 2);

        // mixed: est becomes r mod 2
        let mut c = BinCons::new(BinConfig::new(4, 1, 2));
        c.propose(false, &mut out).unwrap();
        bv_deliver(&mut c, 1, false, &mut out);
        bv_deliver(&mut c, 1, true, &mut out);
        c.on_aux(1, 1, false, &mut out);
        c.on_aux(3, 1, true, &mut out);
        c.on_aux(4, 1, true, &mut out);
        assert_eq!(c.decided(), None);
        assert!(c.estimate());
    }

    #[test]
    fn aux_outside_bin_values_waits() {
        let mut c = BinCons::new(BinConfig::new(4, 1, 2));
        let mut out = Vec::new();
        c.propose(true, &mut out).unwrap();
        bv_deliver(&mut c, 1, true, &mut out);
        c.on_aux(1, 1, false, &mut out);
        c.on_aux(3, 1, true, &mut out);
        assert_eq!(c.round(), 1);
        c.on_aux(4, 1, true, &mut out);
        // two eligible values so far
        assert_eq!(c.round(), 1);
        c.on_aux(2, 1, true, &mut out);
        assert_eq!(c.decided(), Some((true, 1)));
    }

    #[test]
    fn coordinator_and_timer() {
        let mut cfg = BinConfig::new(4, 1, 2);
        cfg.coord_timeout = 5;
        let mut c = BinCons::new(cfg);
        let mut out = Vec::new();
        c.propose(true, &mut out).unwrap();
        bv_deliver(&mut c, 1, true, &mut out);
        assert!(out.contains(&BinAction::Timer { round: 1, delay: 5 }));
        assert!(!out.iter().any(|a| matches!(a, BinAction::Aux { .. })));
        // non-coordinator value ignored
        c.on_coord(3, 1, true, &mut out);
        assert!(!out.iter().any(|a| matches!(a, BinAction::Aux { .. })));
        c.on_coord(1, 1, true, &mut out);
        assert!(out.contains(&BinAction::Aux {
            round: 1,
            bit: true
        }));

        // the coordinator itself sends COORD_VALUE and AUX at once
        let mut c = BinCons::new(BinConfig { self_id: 1, ..cfg });
        out.clear();
        c.propose(false, &mut out).unwrap();
        bv_deliver(&mut c, 1, false, &mut out);
        assert_eq!(
            out.iter()
                .filter(|a| matches!(a, BinAction::Coord { .. }))
                .count(),
            1
        );
        assert!(out.contains(&BinAction::Aux {
            round: 1,
            bit: false
        }));

        // timer expiry falls back to own value and doubles the next timeout
        let mut c = BinCons::new(BinConfig { self_id: 3, ..cfg });
        out.clear();
        c.propose(true, &mut out).unwrap();
        bv_deliver(&mut c, 1, true, &mut out);
        c.on_timer(1, &mut out);
        assert!(out.contains(&BinAction::Aux {
            round: 1,
            bit: true
        }));
        for s in [1, 2, 4] {
            c.on_aux(s, 1, true, &mut out);
        }
        bv_deliver(&mut c, 2, true, &mut out);
        assert!(out.contains(&BinAction::Timer {
            round: 2,
            delay: 10
        }));
    }

    #[test]
    fn halting_after_two_rounds() {
        let mut c = BinCons::new(BinConfig::new(4, 1, 2));
        let mut out = Vec::new();
        c.propose(true, &mut out).unwrap();
        for r in 1..=3 {
            bv_deliver(&mut c, r, true, &mut out);
            for s in [1, 3, 4] {
                c.on_aux(s, r, true, &mut out);
            }
        }
        assert_eq!(c.decided(), Some((true, 1)));
        assert!(c.halted());
        assert_eq!(c.round(), 3);
        let before = out.len();
        c.on_est(1, 4, true, &mut out);
        c.on_aux(1, 4, true, &mut out);
        assert_eq!(out.len(), before);

        let mut c = BinCons::new(BinConfig {
            auto_halt: false,
            ..BinConfig::new(4, 1, 2)
        });
        c.propose(true, &mut out).unwrap();
        for r in 1..=4 {
            bv_deliver(&mut c, r, true, &mut out);
            for s in [1, 3, 4] {
                c.on_aux(s, r, true, &mut out);
            }
        }
        assert!(!c.halted());
        c.set_halt_round(3);
        assert!(c.halted());
    }

    /// All-to-all network of `n` processes, `faulty` of which are silent,
    /// with a random delivery order.
    fn simulate(
        proposals: &[bool],
        t: usize,
        faulty: usize,
        seed: u64,
    ) -> Vec<Option<(bool, u32)>> {
        let n = proposals.len();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut nodes: Vec<BinCons> = (1..=n)
            .map(|i| BinCons::new(BinConfig::new(n, t, i)))
            .collect();
        let mut pool: Vec<(ProcessId, ProcessId, BinAction)> = Vec::new();
        let push = |pool: &mut Vec<_>, from, actions: Vec<BinAction>| {
            for a in actions {
                if from <= faulty {
                    continue;
                }
                for to in 1..=n {
                    pool.push((from, to, a));
                }
            }
        };
        for i in 0..n {
            let mut out = Vec::new();
            nodes[i].propose(proposals[i], &mut out).unwrap();
            push(&mut pool, i + 1, out);
        }
        let mut steps = 0;
        while !pool.is_empty() && steps < 1_000_000 {
            steps += 1;
            let k = rng.gen_range(0..pool.len());
            let (from, to, a) = pool.swap_remove(k);
            let mut out = Vec::new();
            let node = &mut nodes[to - 1];
            match a {
                BinAction::Est {
                    round,
                    bit,
                    fresh: true,
                    ..
                } => node.on_est(from, round, bit, &mut out),
                BinAction::Aux { round, bit } => node.on_aux(from, round, bit, &mut out),
                BinAction::Coord { round, bit } => node.on_coord(from, round, bit, &mut out),
                _ => {}
            }
            push(&mut pool, to, out);
        }
        nodes.iter().map(|c| c.decided()).collect()
    }

    #[test]
    fn canonical_runs() {
        for seed in 0..20 {
            let d = simulate(&[true; 4], 1, 0, seed);
            assert!(d.iter().all(|x| *x == Some((true, 1))));
            let d = simulate(&[false; 4], 1, 0, seed);
            assert!(d.iter().all(|x| *x == Some((false, 2))));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn agreement_and_validity(
            bits in proptest::collection::vec(any::<bool>(), 7),
            faulty in 0usize..=2,
            seed in any::<u64>(),
        ) {
            let d = simulate(&bits, 2, faulty, seed);
            let honest: Vec<_> = d[faulty..].iter().collect();
            let mut decided: Vec<_> = honest.iter().filter_map(|x| x.map(|(v, _)| v)).collect();
            decided.dedup();
            prop_assert!(decided.len() <= 1);
            if let Some(v) = decided.first() {
                prop_assert!(bits[faulty..].contains(v));
            }
            let rounds: Vec<u32> = honest.iter().filter_map(|x| x.map(|(_, r)| r)).collect();
            if let (Some(lo), Some(hi)) = (rounds.iter().min(), rounds.iter().max()) {
                prop_assert!(hi - lo <= 2);
            }
        }
    }

    #[test]
    fn shuffled_delivery_terminates_when_unanimous() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..10 {
            let mut bits = vec![true; 7];
            bits.shuffle(&mut rng);
            let d = simulate(&bits, 2, 2, rng.gen());
            assert!(d[2..].iter().all(|x| x.map(|(v, _)| v) == Some(true)));
        }
    }
}
