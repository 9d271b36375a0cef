//! Arbitrary-ballot elections: each voter encrypts a nonce-prefixed ballot
//! under the threshold key, vector consensus fixes the set of ciphertexts,
//! and shares are then exchanged to decrypt them.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::avcp::{Avcp, AvcpConfig, AvcpError, Validity};
use crate::effect::{Effect, Evidence, Output, ProcessId};
use crate::tenc::{self, Ciphertext, DecryptionShare, TencError, TencPublic, TencShareKey};
use crate::trs::{Ring, SecretKey, TrsError};
use crate::wire::{Envelope, InstanceId, MessageBody, Payload};

pub const NONCE_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum ElectionError {
    #[error(transparent)]
    Encryption(#[from] TencError),
    #[error(transparent)]
    Consensus(#[from] AvcpError),
    #[error(transparent)]
    Signature(#[from] TrsError),
}

/// `nonce || content`, encrypted under the election key with the instance
/// identifier as label.
pub fn prepare_ballot<R: RngCore + CryptoRng>(
    public: &TencPublic,
    id: &[u8],
    content: &[u8],
    rng: &mut R,
) -> Result<Ciphertext, TencError> {
    if content.len() + NONCE_LEN > tenc::MAX_PLAINTEXT {
        return Err(TencError::PlaintextTooLong(content.len()));
    }
    let mut plaintext = vec![0u8; NONCE_LEN];
    rng.fill_bytes(&mut plaintext);
    plaintext.extend_from_slice(content);
    tenc::encrypt(public, id, &plaintext, rng)
}

/// Byte-equal ciphertexts collapse to their first occurrence.
pub fn dedupe(cts: &[Ciphertext]) -> Vec<Ciphertext> {
    let mut seen = HashSet::new();
    cts.iter()
        .filter(|c| seen.insert(c.to_bytes()))
        .cloned()
        .collect()
}

/// Accepts payloads that decode to a well-formed ciphertext for `id`.
pub fn ballot_validity(public: Arc<TencPublic>, id: InstanceId) -> Validity {
    Arc::new(
        move |p: &Payload| match Ciphertext::from_bytes(p.message()) {
            Ok(c) => c.label == *id && tenc::verify_enc(&public, &c),
            Err(_) => false,
        },
    )
}

#[derive(Debug, Clone, Copy)]
pub struct ElectionConfig {
    pub avcp: AvcpConfig,
    /// Only processes `1..=2t+1` broadcast decryption shares.
    pub reduced_broadcasters: bool,
}

impl ElectionConfig {
    pub fn new(n: usize, t: usize) -> Self {
        ElectionConfig {
            avcp: AvcpConfig::new(n, t),
            reduced_broadcasters: false,
        }
    }
}

type ShareBatch = Arc<Vec<(Ciphertext, DecryptionShare)>>;

pub struct Election {
    id: InstanceId,
    self_id: ProcessId,
    cfg: ElectionConfig,
    public: Arc<TencPublic>,
    key: TencShareKey,
    avcp: Avcp,
    unique: Option<Vec<Ciphertext>>,
    shares: Vec<BTreeMap<u16, DecryptionShare>>,
    has_broadcast: bool,
    buffered: Vec<(ProcessId, ShareBatch)>,
    batches_from: HashSet<ProcessId>,
    ballots: Option<Arc<Vec<Vec<u8>>>>,
}

impl Election {
    pub fn new(
        id: InstanceId,
        self_id: ProcessId,
        cfg: ElectionConfig,
        ring: Arc<Ring>,
        public: Arc<TencPublic>,
        key: TencShareKey,
    ) -> Result<Election, TrsError> {
        let valid = ballot_validity(public.clone(), id.clone());
        let avcp = Avcp::new(id.clone(), self_id, cfg.avcp, ring, valid)?;
        Ok(Election {
            id,
            self_id,
            cfg,
            public,
            key,
            avcp,
            unique: None,
            shares: Vec::new(),
            has_broadcast: false,
            buffered: Vec::new(),
            batches_from: HashSet::new(),
            ballots: None,
        })
    }

    pub fn avcp(&self) -> &Avcp {
        &self.avcp
    }

    pub fn public(&self) -> &Arc<TencPublic> {
        &self.public
    }

    /// Deduplicated decided ciphertexts, once consensus is reached.
    pub fn unique_encs(&self) -> Option<&[Ciphertext]> {
        self.unique.as_deref()
    }

    pub fn has_broadcast(&self) -> bool {
        self.has_broadcast
    }

    /// Plaintext ballots, nonces removed.
    pub fn ballots(&self) -> Option<&Arc<Vec<Vec<u8>>>> {
        self.ballots.as_ref()
    }

    pub fn propose<R: RngCore + CryptoRng>(
        &mut self,
        content: &[u8],
        secret: &SecretKey,
        rng: &mut R,
    ) -> Result<Vec<Effect>, ElectionError> {
        let ballot = prepare_ballot(&self.public, &self.id, content, rng)?;
        self.propose_ciphertext(&ballot, secret, rng)
    }

    /// Proposes an already prepared ciphertext.
    pub fn propose_ciphertext<R: RngCore + CryptoRng>(
        &mut self,
        ballot: &Ciphertext,
        secret: &SecretKey,
        rng: &mut R,
    ) -> Result<Vec<Effect>, ElectionError> {
        Ok(self.avcp.propose(ballot.to_bytes(), secret, rng)?)
    }

    pub fn handle<R: RngCore + CryptoRng>(
        &mut self,
        from: Option<ProcessId>,
        body: &MessageBody,
        rng: &mut R,
        out: &mut Vec<Effect>,
    ) {
        if let MessageBody::Decs(entries) = body {
            if let Some(from) = from {
                self.on_decs(from, entries.clone(), out);
            }
            return;
        }
        let mut inner = Vec::new();
        self.avcp.handle(from, body, &mut inner);
        self.absorb(inner, rng, out);
    }

    pub fn on_timer<R: RngCore + CryptoRng>(
        &mut self,
        key: u64,
        rng: &mut R,
        out: &mut Vec<Effect>,
    ) {
        let mut inner = Vec::new();
        self.avcp.on_timer(key, &mut inner);
        self.absorb(inner, rng, out);
    }

    fn absorb<R: RngCore + CryptoRng>(
        &mut self,
        inner: Vec<Effect>,
        rng: &mut R,
        out: &mut Vec<Effect>,
    ) {
        for e in inner {
            let decided = match &e {
                Effect::Output(Output::VectorDecided { vector, .. }) => Some(vector.clone()),
                _ => None,
            };
            out.push(e);
            if let Some(v) = decided {
                self.on_vector_decided(&v, rng, out);
            }
        }
    }

    fn is_broadcaster(&self) -> bool {
        !self.cfg.reduced_broadcasters || self.self_id <= 2 * self.cfg.avcp.t + 1
    }

    fn on_vector_decided<R: RngCore + CryptoRng>(
        &mut self,
        vector: &[Arc<Payload>],
        rng: &mut R,
        out: &mut Vec<Effect>,
    ) {
        if self.unique.is_some() {
            return;
        }
        let cts: Vec<Ciphertext> = vector
            .iter()
            .filter_map(|p| Ciphertext::from_bytes(p.message()).ok())
            .collect();
        let unique = dedupe(&cts);
        self.shares = vec![BTreeMap::new(); unique.len()];
        if self.is_broadcaster() {
            let entries: Vec<(Ciphertext, DecryptionShare)> = unique
                .iter()
                .filter_map(|c| {
                    tenc::share_decrypt(&self.public, &self.key, c, rng)
                        .ok()
                        .map(|s| (c.clone(), s))
                })
                .collect();
            let env = Envelope::new(self.id.clone(), MessageBody::Decs(Arc::new(entries)));
            out.push(Effect::Broadcast(Arc::new(env)));
        }
        self.unique = Some(unique);
        self.has_broadcast = true;
        for (from, entries) in std::mem::take(&mut self.buffered) {
            self.on_decs(from, entries, out);
        }
        self.try_combine(out);
    }

    fn on_decs(&mut self, from: ProcessId, entries: ShareBatch, out: &mut Vec<Effect>) {
        if self.ballots.is_some() {
            return;
        }
        if !self.has_broadcast {
            if self.buffered.iter().all(|(f, _)| *f != from) {
                self.buffered.push((from, entries));
            }
            return;
        }
        if !self.batches_from.insert(from) {
            return;
        }
        let unique = self.unique.as_ref().expect("set with has_broadcast");
        let well_formed = entries.len() == unique.len()
            && entries
                .iter()
                .zip(unique)
                .all(|((c, s), u)| c == u && s.index as usize == from);
        let pairs: Vec<(&Ciphertext, &DecryptionShare)> =
            entries.iter().map(|(c, s)| (c, s)).collect();
        if !well_formed || !tenc::verify_shares_batch(self.cfg.avcp.exec, &self.public, &pairs) {
            out.push(Effect::Output(Output::Evidence(
                Evidence::InvalidShareBatch {
                    id: self.id.clone(),
                    from,
                },
            )));
            return;
        }
        for (slot, (_, s)) in self.shares.iter_mut().zip(entries.iter()) {
            slot.insert(s.index, s.clone());
        }
        self.try_combine(out);
    }

    fn try_combine(&mut self, out: &mut Vec<Effect>) {
        if self.ballots.is_some() {
            return;
        }
        let Some(unique) = &self.unique else {
            return;
        };
        let k = self.public.threshold;
        if self.shares.iter().any(|s| s.len() < k) {
            return;
        }
        let mut ballots = Vec::with_capacity(unique.len());
        for (c, shares) in unique.iter().zip(&self.shares) {
            match tenc::combine_verified(&self.public, c, shares) {
                Ok(p) if p.len() >= NONCE_LEN => ballots.push(p[NONCE_LEN..].to_vec()),
                _ => return,
            }
        }
        let ballots = Arc::new(ballots);
        self.ballots = Some(ballots.clone());
        out.push(Effect::Output(Output::Ballots {
            id: self.id.clone(),
            ballots,
        }));
    }
}
