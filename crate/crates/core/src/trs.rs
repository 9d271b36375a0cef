//! Traceable ring signatures (Fujisaki–Suzuki).
//!
//! A signature on `message` under an [`IssueTag`] proves that one ring member
//! signed it without saying which. Verification additionally yields a
//! [`TraceTag`] of `n` group elements. For the signer `i` the `i`-th element
//! is `x_i · H(tag)`, independent of the message, and the remaining elements
//! lie on a line determined by the message. Two signatures by the same key
//! therefore agree at exactly one position (different messages) or at all
//! positions (same message), which is what [`trace`] checks.

use std::collections::HashMap;
use std::sync::Arc;

use curve25519_dalek::traits::VartimeMultiscalarMul;
use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::crypto::{
    self, element_from_bytes, element_to_bytes, generator, scalar_from_bytes, scalar_random,
    GroupElement, Scalar, Transcript,
};
use crate::par::{self, Execution};

/// Field separator inside issue strings.
pub const ISSUE_SEPARATOR: u8 = 0x1F;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrsError {
    #[error("ring must have at least two distinct keys")]
    BadRing,
    #[error("issue string must be non-empty")]
    EmptyIssue,
    #[error("signer index {0} outside ring")]
    BadIndex(usize),
    #[error("secret key does not match ring position {0}")]
    KeyMismatch(usize),
    #[error("signature rejected")]
    InvalidSignature,
    #[error("malformed signature encoding")]
    Malformed,
    #[error("no ring member produced this signature")]
    NotFound,
}

#[derive(Clone)]
pub struct SecretKey(pub(crate) Scalar);

impl SecretKey {
    pub fn public(&self) -> PublicKey {
        PublicKey(self.0 * generator())
    }

    pub fn scalar(&self) -> &Scalar {
        &self.0
    }
}

impl std::fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PublicKey(pub GroupElement);

pub fn keygen<R: RngCore + CryptoRng>(rng: &mut R) -> (SecretKey, PublicKey) {
    let sk = SecretKey(scalar_random(rng));
    let pk = sk.public();
    (sk, pk)
}

/// Ordered public keys; position `i - 1` belongs to process `p_i`.
#[derive(Debug, Clone)]
pub struct Ring {
    keys: Vec<GroupElement>,
    encoded: Vec<[u8; 32]>,
}

impl Ring {
    pub fn new(keys: Vec<PublicKey>) -> Result<Ring, TrsError> {
        if keys.len() < 2 {
            return Err(TrsError::BadRing);
        }
        let encoded: Vec<[u8; 32]> = keys.iter().map(|k| element_to_bytes(&k.0)).collect();
        let mut sorted = encoded.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(TrsError::BadRing);
        }
        Ok(Ring {
            keys: keys.into_iter().map(|k| k.0).collect(),
            encoded,
        })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Key of `p_index` (1-based).
    pub fn key(&self, index: usize) -> Option<&GroupElement> {
        index.checked_sub(1).and_then(|i| self.keys.get(i))
    }
}

/// Ring plus issue string; signatures are traceable only under the same tag.
#[derive(Debug, Clone)]
pub struct IssueTag {
    ring: Arc<Ring>,
    issue: Vec<u8>,
    tag_digest: [u8; 32],
    base: GroupElement,
}

impl IssueTag {
    pub fn new(ring: Arc<Ring>, issue: Vec<u8>) -> Result<IssueTag, TrsError> {
        if issue.is_empty() {
            return Err(TrsError::EmptyIssue);
        }
        let mut framed = Vec::with_capacity(8 + issue.len() + 32 * ring.len());
        framed.extend_from_slice(&(issue.len() as u64).to_le_bytes());
        framed.extend_from_slice(&issue);
        for k in &ring.encoded {
            framed.extend_from_slice(k);
        }
        let tag_digest = crypto::digest_with(b"anonbft/trs/tag", &framed).0;
        let base = crypto::hash_to_group(b"anonbft/trs/base", &tag_digest);
        Ok(IssueTag {
            ring,
            issue,
            tag_digest,
            base,
        })
    }

    /// Canonical issue `id || 0x1F || message_type [|| 0x1F || label]`.
    pub fn for_message_type(
        ring: Arc<Ring>,
        id: &[u8],
        message_type: &str,
        label: Option<&[u8]>,
    ) -> Result<IssueTag, TrsError> {
        let mut issue = id.to_vec();
        issue.push(ISSUE_SEPARATOR);
        issue.extend_from_slice(message_type.as_bytes());
        if let Some(label) = label {
            issue.push(ISSUE_SEPARATOR);
            issue.extend_from_slice(label);
        }
        IssueTag::new(ring, issue)
    }

    pub fn ring(&self) -> &Arc<Ring> {
        &self.ring
    }

    pub fn issue(&self) -> &[u8] {
        &self.issue
    }

    pub fn n(&self) -> usize {
        self.ring.len()
    }

    fn line_offset(&self, message: &[u8]) -> GroupElement {
        Transcript::new(b"anonbft/trs/offset")
            .bytes(&self.tag_digest)
            .bytes(message)
            .to_group()
    }

    fn challenge(
        &self,
        offset: &GroupElement,
        slope: &GroupElement,
        commitments: &[([u8; 32], [u8; 32])],
    ) -> Scalar {
        let mut t = Transcript::new(b"anonbft/trs/challenge")
            .bytes(&self.tag_digest)
            .point(offset)
            .point(slope);
        for (a, b) in commitments {
            t = t.compressed(a).compressed(b);
        }
        t.to_scalar()
    }
}

/// Points on the line `offset + j·slope` for `j = 1..=n`.
fn line_points(offset: GroupElement, slope: GroupElement, n: usize) -> Vec<GroupElement> {
    let mut out = Vec::with_capacity(n);
    let mut acc = offset;
    for _ in 0..n {
        acc += slope;
        out.push(acc);
    }
    out
}

/// Per-position values produced on verification.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TraceTag(pub Vec<[u8; 32]>);

impl TraceTag {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceOutcome {
    Independent,
    Linked,
    /// The same key signed two different messages; 1-based signer index.
    Traced(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RingSignature {
    slope: GroupElement,
    challenges: Vec<Scalar>,
    responses: Vec<Scalar>,
}

impl RingSignature {
    pub fn ring_size(&self) -> usize {
        self.challenges.len()
    }

    /// `u32 scalar count || scalars || u32 element count || elements`, big-endian counts.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.write_to(&mut out);
        out
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        let count = (self.challenges.len() + self.responses.len()) as u32;
        out.extend_from_slice(&count.to_be_bytes());
        for s in self.challenges.iter().chain(&self.responses) {
            out.extend_from_slice(s.as_bytes());
        }
        out.extend_from_slice(&1u32.to_be_bytes());
        out.extend_from_slice(&element_to_bytes(&self.slope));
    }

    pub fn encoded_len(&self) -> usize {
        8 + 32 * (1 + self.challenges.len() + self.responses.len())
    }

    /// Decodes a signature, returning it and the number of bytes consumed.
    pub fn read_from(bytes: &[u8]) -> Result<(RingSignature, usize), TrsError> {
        let count = read_u32(bytes, 0)? as usize;
        if !count.is_multiple_of(2) || count < 4 {
            return Err(TrsError::Malformed);
        }
        let mut pos = 4;
        let mut scalars = Vec::with_capacity(count);
        for _ in 0..count {
            let s = bytes.get(pos..pos + 32).ok_or(TrsError::Malformed)?;
            scalars.push(scalar_from_bytes(s).ok_or(TrsError::Malformed)?);
            pos += 32;
        }
        if read_u32(bytes, pos)? != 1 {
            return Err(TrsError::Malformed);
        }
        pos += 4;
        let p = bytes.get(pos..pos + 32).ok_or(TrsError::Malformed)?;
        let slope = element_from_bytes(p).ok_or(TrsError::Malformed)?;
        pos += 32;
        let responses = scalars.split_off(count / 2);
        Ok((
            RingSignature {
                slope,
                challenges: scalars,
                responses,
            },
            pos,
        ))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<RingSignature, TrsError> {
        let (sig, used) = RingSignature::read_from(bytes)?;
        if used != bytes.len() {
            return Err(TrsError::Malformed);
        }
        Ok(sig)
    }
}

fn read_u32(bytes: &[u8], pos: usize) -> Result<u32, TrsError> {
    let b = bytes.get(pos..pos + 4).ok_or(TrsError::Malformed)?;
    Ok(u32::from_be_bytes(b.try_into().unwrap()))
}

pub fn sign<R: RngCore + CryptoRng>(
    tag: &IssueTag,
    signer_index: usize,
    secret: &SecretKey,
    message: &[u8],
    rng: &mut R,
) -> Result<RingSignature, TrsError> {
    sign_with(
        Execution::default(),
        tag,
        signer_index,
        secret,
        message,
        rng,
    )
}

pub fn sign_with<R: RngCore + CryptoRng>(
    exec: Execution,
    tag: &IssueTag,
    signer_index: usize,
    secret: &SecretKey,
    message: &[u8],
    rng: &mut R,
) -> Result<RingSignature, TrsError> {
    let n = tag.n();
    let own_key = tag
        .ring
        .key(signer_index)
        .ok_or(TrsError::BadIndex(signer_index))?;
    if secret.0 * generator() != *own_key {
        return Err(TrsError::KeyMismatch(signer_index));
    }
    let own_point = secret.0 * tag.base;
    let offset = tag.line_offset(message);
    let slope = (own_point - offset) * Scalar::from(signer_index as u64).invert();
    let points = line_points(offset, slope, n);

    // All randomness is drawn up front so the parallel path stays deterministic.
    let nonce = scalar_random(rng);
    let mut challenges: Vec<Scalar> = Vec::with_capacity(n);
    let mut responses: Vec<Scalar> = Vec::with_capacity(n);
    for _ in 0..n {
        challenges.push(scalar_random(rng));
        responses.push(scalar_random(rng));
    }
    let me = signer_index - 1;
    let positions: Vec<usize> = (0..n).collect();
    let commitments = par::map(exec, &positions, |&j| {
        if j == me {
            (
                element_to_bytes(&(nonce * generator())),
                element_to_bytes(&(nonce * tag.base)),
            )
        } else {
            commit(
                tag,
                &tag.ring.keys[j],
                &points[j],
                &challenges[j],
                &responses[j],
            )
        }
    });
    let total = tag.challenge(&offset, &slope, &commitments);
    let others: Scalar = challenges
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != me)
        .map(|(_, c)| c)
        .sum();
    challenges[me] = total - others;
    responses[me] = nonce - challenges[me] * secret.0;
    Ok(RingSignature {
        slope,
        challenges,
        responses,
    })
}

fn commit(
    tag: &IssueTag,
    key: &GroupElement,
    point: &GroupElement,
    challenge: &Scalar,
    response: &Scalar,
) -> ([u8; 32], [u8; 32]) {
    let a = GroupElement::vartime_double_scalar_mul_basepoint(challenge, key, response);
    let b = GroupElement::vartime_multiscalar_mul([response, challenge], [&tag.base, point]);
    (element_to_bytes(&a), element_to_bytes(&b))
}

/// Verifies `sig` and returns its trace tag.
pub fn verify(tag: &IssueTag, message: &[u8], sig: &RingSignature) -> Result<TraceTag, TrsError> {
    verify_with(Execution::default(), tag, message, sig)
}

pub fn verify_with(
    exec: Execution,
    tag: &IssueTag,
    message: &[u8],
    sig: &RingSignature,
) -> Result<TraceTag, TrsError> {
    let n = tag.n();
    if sig.challenges.len() != n || sig.responses.len() != n {
        return Err(TrsError::InvalidSignature);
    }
    let offset = tag.line_offset(message);
    let points = line_points(offset, sig.slope, n);
    let positions: Vec<usize> = (0..n).collect();
    let per_position = par::map(exec, &positions, |&j| {
        let c = commit(
            tag,
            &tag.ring.keys[j],
            &points[j],
            &sig.challenges[j],
            &sig.responses[j],
        );
        (c, element_to_bytes(&points[j]))
    });
    let commitments: Vec<([u8; 32], [u8; 32])> = per_position.iter().map(|(c, _)| *c).collect();
    let total: Scalar = sig.challenges.iter().sum();
    if tag.challenge(&offset, &sig.slope, &commitments) != total {
        return Err(TrsError::InvalidSignature);
    }
    Ok(TraceTag(per_position.into_iter().map(|(_, p)| p).collect()))
}

/// Element-wise comparison of two trace tags from the same issue tag.
pub fn trace_tags(a: &TraceTag, b: &TraceTag) -> TraceOutcome {
    let mut equal = 0usize;
    let mut last = 0usize;
    for (j, (x, y)) in a.0.iter().zip(&b.0).enumerate() {
        if x == y {
            equal += 1;
            last = j;
        }
    }
    classify(equal, last, a.len())
}

fn classify(equal: usize, last_position: usize, n: usize) -> TraceOutcome {
    if equal == n {
        TraceOutcome::Linked
    } else if equal == 1 {
        TraceOutcome::Traced(last_position + 1)
    } else {
        TraceOutcome::Independent
    }
}

pub fn trace(
    tag: &IssueTag,
    m1: &[u8],
    sig1: &RingSignature,
    m2: &[u8],
    sig2: &RingSignature,
) -> Result<TraceOutcome, TrsError> {
    let t1 = verify(tag, m1, sig1)?;
    let t2 = verify(tag, m2, sig2)?;
    Ok(trace_tags(&t1, &t2))
}

/// Hash index over the individual values of stored trace tags, so tracing a
/// new tag against everything seen costs `n` expected lookups.
#[derive(Debug, Default, Clone)]
pub struct TraceIndex {
    tags: Vec<TraceTag>,
    by_value: HashMap<(u32, [u8; 32]), Vec<usize>>,
}

impl TraceIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// First stored entry that is not independent of `tag`, if any.
    pub fn check(&self, tag: &TraceTag) -> Option<(usize, TraceOutcome)> {
        let mut hits: HashMap<usize, (usize, usize)> = HashMap::new();
        for (j, value) in tag.0.iter().enumerate() {
            if let Some(entries) = self.by_value.get(&(j as u32, *value)) {
                for &e in entries {
                    let h = hits.entry(e).or_insert((0, 0));
                    h.0 += 1;
                    h.1 = j;
                }
            }
        }
        let mut found: Vec<(usize, TraceOutcome)> = hits
            .into_iter()
            .filter(|(e, _)| self.tags[*e].len() == tag.len())
            .map(|(e, (count, last))| (e, classify(count, last, tag.len())))
            .filter(|(_, o)| *o != TraceOutcome::Independent)
            .collect();
        found.sort_by_key(|(e, _)| *e);
        found.into_iter().next()
    }

    pub fn insert(&mut self, tag: TraceTag) -> usize {
        let id = self.tags.len();
        for (j, value) in tag.0.iter().enumerate() {
            self.by_value
                .entry((j as u32, *value))
                .or_default()
                .push(id);
        }
        self.tags.push(tag);
        id
    }
}

/// Signer identification from the dealer's secrets. Protocol code never has
/// these; only test harnesses enable this module.
#[cfg(any(test, feature = "oracle"))]
pub mod oracle {
    use super::*;

    /// 1-based index of the key that produced `sig`.
    pub fn find_index(
        tag: &IssueTag,
        message: &[u8],
        sig: &RingSignature,
        secrets: &[SecretKey],
    ) -> Result<usize, TrsError> {
        let trace_tag = verify(tag, message, sig)?;
        find_index_from_tag(tag, &trace_tag, secrets)
    }

    /// As [`find_index`] for an already verified trace tag.
    pub fn find_index_from_tag(
        tag: &IssueTag,
        trace_tag: &TraceTag,
        secrets: &[SecretKey],
    ) -> Result<usize, TrsError> {
        secrets
            .iter()
            .enumerate()
            .find(|(j, sk)| trace_tag.0.get(*j) == Some(&element_to_bytes(&(sk.0 * tag.base))))
            .map(|(j, _)| j + 1)
            .ok_or(TrsError::NotFound)
    }
}
