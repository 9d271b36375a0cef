//! `(t+1)`-out-of-`n` threshold encryption after Shoup and Gennaro (TDH2),
//! in hybrid form so plaintexts can be arbitrary byte strings.
//!
//! A ciphertext carries `u = r·G`, `ū = r·Ḡ` and a Chaum–Pedersen style proof
//! that both share the exponent `r`; the plaintext is masked with a stream
//! derived from `r·PK`. Decryption shares `x_i·u` come with a proof of
//! equality to `log_G VK_i`. Any `k` valid shares recover `r·PK` by Lagrange
//! interpolation in the exponent.

use std::collections::BTreeMap;

use curve25519_dalek::traits::VartimeMultiscalarMul;
use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::crypto::{
    self, element_from_bytes, element_to_bytes, generator, scalar_from_bytes, scalar_random,
    GroupElement, Scalar, Transcript,
};
use crate::par::{self, Execution};

/// Largest accepted plaintext.
pub const MAX_PLAINTEXT: usize = 64 * 1024;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TencError {
    #[error("need n > 3t (got n={n}, t={t})")]
    BadParameters { n: usize, t: usize },
    #[error("plaintext of {0} bytes exceeds the {MAX_PLAINTEXT}-byte limit")]
    PlaintextTooLong(usize),
    #[error("ciphertext failed verification")]
    InvalidCiphertext,
    #[error("have {have} distinct valid shares, need {need}")]
    InsufficientShares { have: usize, need: usize },
    #[error("share from index {0} failed verification")]
    InvalidShare(u16),
    #[error("malformed encoding")]
    Malformed,
}

fn second_generator() -> GroupElement {
    crypto::hash_to_group(b"anonbft/tenc/gbar", b"")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TencPublic {
    pub n: usize,
    pub threshold: usize,
    pub public_key: GroupElement,
    pub verification_keys: Vec<GroupElement>,
}

impl TencPublic {
    /// `VK_i` for 1-based `index`.
    pub fn verification_key(&self, index: u16) -> Option<&GroupElement> {
        (index as usize)
            .checked_sub(1)
            .and_then(|i| self.verification_keys.get(i))
    }
}

#[derive(Clone)]
pub struct TencShareKey {
    pub index: u16,
    share: Scalar,
}

impl TencShareKey {
    pub fn share(&self) -> &Scalar {
        &self.share
    }
}

impl std::fmt::Debug for TencShareKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "TencShareKey({})", self.index)
    }
}

/// Trusted-dealer setup: a degree-`t` polynomial whose constant term is the
/// group secret, shares at `1..=n`.
pub fn deal<R: RngCore + CryptoRng>(
    n: usize,
    t: usize,
    rng: &mut R,
) -> Result<(TencPublic, Vec<TencShareKey>), TencError> {
    if n <= 3 * t || n > u16::MAX as usize {
        return Err(TencError::BadParameters { n, t });
    }
    let coefficients: Vec<Scalar> = (0..=t).map(|_| scalar_random(rng)).collect();
    let eval = |x: u64| -> Scalar {
        let x = Scalar::from(x);
        coefficients
            .iter()
            .rev()
            .fold(Scalar::ZERO, |acc, c| acc * x + c)
    };
    let keys: Vec<TencShareKey> = (1..=n as u64)
        .map(|i| TencShareKey {
            index: i as u16,
            share: eval(i),
        })
        .collect();
    let public = TencPublic {
        n,
        threshold: t + 1,
        public_key: coefficients[0] * generator(),
        verification_keys: keys.iter().map(|k| k.share * generator()).collect(),
    };
    Ok((public, keys))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ciphertext {
    pub label: Vec<u8>,
    pub body: Vec<u8>,
    u: GroupElement,
    u_bar: GroupElement,
    e: Scalar,
    f: Scalar,
}

impl Ciphertext {
    /// `u32 label len || label || u32 body len || body || u || ū || e || f`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.write_to(&mut out);
        out
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.label.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.label);
        out.extend_from_slice(&(self.body.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.body);
        out.extend_from_slice(&element_to_bytes(&self.u));
        out.extend_from_slice(&element_to_bytes(&self.u_bar));
        out.extend_from_slice(self.e.as_bytes());
        out.extend_from_slice(self.f.as_bytes());
    }

    pub fn encoded_len(&self) -> usize {
        8 + self.label.len() + self.body.len() + 128
    }

    pub fn read_from(bytes: &[u8]) -> Result<(Ciphertext, usize), TencError> {
        let mut r = Reader { bytes, pos: 0 };
        let label_len = r.u32()? as usize;
        let label = r.take(label_len)?.to_vec();
        let body_len = r.u32()? as usize;
        if body_len > MAX_PLAINTEXT {
            return Err(TencError::Malformed);
        }
        let body = r.take(body_len)?.to_vec();
        let u = r.element()?;
        let u_bar = r.element()?;
        let e = r.scalar()?;
        let f = r.scalar()?;
        Ok((
            Ciphertext {
                label,
                body,
                u,
                u_bar,
                e,
                f,
            },
            r.pos,
        ))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Ciphertext, TencError> {
        let (c, used) = Ciphertext::read_from(bytes)?;
        if used != bytes.len() {
            return Err(TencError::Malformed);
        }
        Ok(c)
    }

    fn binding(&self) -> [u8; 32] {
        crypto::digest_with(b"anonbft/tenc/ct", &self.to_bytes()).0
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecryptionShare {
    pub index: u16,
    value: GroupElement,
    e: Scalar,
    f: Scalar,
}

pub const SHARE_LEN: usize = 2 + 96;

impl DecryptionShare {
    /// `u16 BE index || x_i·u || e_i || f_i`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(SHARE_LEN);
        self.write_to(&mut out);
        out
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.index.to_be_bytes());
        out.extend_from_slice(&element_to_bytes(&self.value));
        out.extend_from_slice(self.e.as_bytes());
        out.extend_from_slice(self.f.as_bytes());
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<DecryptionShare, TencError> {
        if bytes.len() != SHARE_LEN {
            return Err(TencError::Malformed);
        }
        let mut r = Reader { bytes, pos: 0 };
        let index = r.u16()?;
        let value = r.element()?;
        let e = r.scalar()?;
        let f = r.scalar()?;
        Ok(DecryptionShare { index, value, e, f })
    }

    /// A syntactically valid share with random contents, for adversarial tests.
    pub fn forged<R: RngCore + CryptoRng>(index: u16, rng: &mut R) -> DecryptionShare {
        DecryptionShare {
            index,
            value: scalar_random(rng) * generator(),
            e: scalar_random(rng),
            f: scalar_random(rng),
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], TencError> {
        let end = self.pos.checked_add(len).ok_or(TencError::Malformed)?;
        let s = self.bytes.get(self.pos..end).ok_or(TencError::Malformed)?;
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, TencError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, TencError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn element(&mut self) -> Result<GroupElement, TencError> {
        element_from_bytes(self.take(32)?).ok_or(TencError::Malformed)
    }

    fn scalar(&mut self) -> Result<Scalar, TencError> {
        scalar_from_bytes(self.take(32)?).ok_or(TencError::Malformed)
    }
}

fn mask(shared: &GroupElement, len: usize) -> Vec<u8> {
    Transcript::new(b"anonbft/tenc/mask")
        .point(shared)
        .to_stream(len)
}

fn encryption_challenge(
    label: &[u8],
    body: &[u8],
    u: &GroupElement,
    w: &GroupElement,
    u_bar: &GroupElement,
    w_bar: &GroupElement,
) -> Scalar {
    Transcript::new(b"anonbft/tenc/enc")
        .bytes(label)
        .bytes(body)
        .point(u)
        .point(w)
        .point(u_bar)
        .point(w_bar)
        .to_scalar()
}

/// Encrypts `plaintext` bound to `label` (the instance identifier).
pub fn encrypt<R: RngCore + CryptoRng>(
    public: &TencPublic,
    label: &[u8],
    plaintext: &[u8],
    rng: &mut R,
) -> Result<Ciphertext, TencError> {
    if plaintext.len() > MAX_PLAINTEXT {
        return Err(TencError::PlaintextTooLong(plaintext.len()));
    }
    let r = scalar_random(rng);
    let s = scalar_random(rng);
    let g_bar = second_generator();
    let shared = r * public.public_key;
    let body: Vec<u8> = plaintext
        .iter()
        .zip(mask(&shared, plaintext.len()))
        .map(|(p, k)| p ^ k)
        .collect();
    let u = r * generator();
    let w = s * generator();
    let u_bar = r * g_bar;
    let w_bar = s * g_bar;
    let e = encryption_challenge(label, &body, &u, &w, &u_bar, &w_bar);
    let f = s + r * e;
    Ok(Ciphertext {
        label: label.to_vec(),
        body,
        u,
        u_bar,
        e,
        f,
    })
}

pub fn verify_enc(_public: &TencPublic, c: &Ciphertext) -> bool {
    if c.body.len() > MAX_PLAINTEXT {
        return false;
    }
    let neg_e = -c.e;
    let w = GroupElement::vartime_double_scalar_mul_basepoint(&neg_e, &c.u, &c.f);
    let w_bar = GroupElement::vartime_multiscalar_mul([c.f, neg_e], [second_generator(), c.u_bar]);
    encryption_challenge(&c.label, &c.body, &c.u, &w, &c.u_bar, &w_bar) == c.e
}

fn share_challenge(
    binding: &[u8; 32],
    index: u16,
    value: &GroupElement,
    u_hat: &GroupElement,
    h_hat: &GroupElement,
) -> Scalar {
    Transcript::new(b"anonbft/tenc/share")
        .bytes(binding)
        .bytes(&index.to_be_bytes())
        .point(value)
        .point(u_hat)
        .point(h_hat)
        .to_scalar()
}

pub fn share_decrypt<R: RngCore + CryptoRng>(
    public: &TencPublic,
    key: &TencShareKey,
    c: &Ciphertext,
    rng: &mut R,
) -> Result<DecryptionShare, TencError> {
    if !verify_enc(public, c) {
        return Err(TencError::InvalidCiphertext);
    }
    let value = key.share * c.u;
    let s = scalar_random(rng);
    let u_hat = s * c.u;
    let h_hat = s * generator();
    let e = share_challenge(&c.binding(), key.index, &value, &u_hat, &h_hat);
    let f = s + key.share * e;
    Ok(DecryptionShare {
        index: key.index,
        value,
        e,
        f,
    })
}

pub fn verify_share(public: &TencPublic, c: &Ciphertext, share: &DecryptionShare) -> bool {
    verify_share_bound(public, c, &c.binding(), share)
}

fn verify_share_bound(
    public: &TencPublic,
    c: &Ciphertext,
    binding: &[u8; 32],
    share: &DecryptionShare,
) -> bool {
    let Some(vk) = public.verification_key(share.index) else {
        return false;
    };
    let neg_e = -share.e;
    let u_hat = GroupElement::vartime_multiscalar_mul([share.f, neg_e], [c.u, share.value]);
    let h_hat = GroupElement::vartime_double_scalar_mul_basepoint(&neg_e, vk, &share.f);
    share_challenge(binding, share.index, &share.value, &u_hat, &h_hat) == share.e
}

/// Verifies many shares against their ciphertexts, in parallel when enabled.
pub fn verify_shares_batch(
    exec: Execution,
    public: &TencPublic,
    pairs: &[(&Ciphertext, &DecryptionShare)],
) -> bool {
    par::all(exec, pairs, |(c, s)| verify_share(public, c, s))
}

/// Lagrange coefficients at zero for the given distinct evaluation points.
pub fn lagrange_at_zero(indices: &[u16]) -> Vec<Scalar> {
    indices
        .iter()
        .map(|&i| {
            let xi = Scalar::from(i as u64);
            let (num, den) = indices.iter().filter(|&&j| j != i).fold(
                (Scalar::ONE, Scalar::ONE),
                |(num, den), &j| {
                    let xj = Scalar::from(j as u64);
                    (num * xj, den * (xj - xi))
                },
            );
            num * den.invert()
        })
        .collect()
}

/// Recovers the plaintext from at least `k` valid shares with distinct
/// indices. The lowest `k` indices are used, so every valid `k`-subset yields
/// the same output.
pub fn combine(
    public: &TencPublic,
    c: &Ciphertext,
    shares: &[DecryptionShare],
) -> Result<Vec<u8>, TencError> {
    combine_with(Execution::default(), public, c, shares)
}

pub fn combine_with(
    exec: Execution,
    public: &TencPublic,
    c: &Ciphertext,
    shares: &[DecryptionShare],
) -> Result<Vec<u8>, TencError> {
    if !verify_enc(public, c) {
        return Err(TencError::InvalidCiphertext);
    }
    let mut distinct: BTreeMap<u16, &DecryptionShare> = BTreeMap::new();
    for s in shares {
        distinct.entry(s.index).or_insert(s);
    }
    let need = public.threshold;
    if distinct.len() < need {
        return Err(TencError::InsufficientShares {
            have: distinct.len(),
            need,
        });
    }
    let binding = c.binding();
    let chosen: Vec<&DecryptionShare> = distinct.values().copied().take(need).collect();
    let checks = par::map(exec, &chosen, |s| {
        verify_share_bound(public, c, &binding, s)
    });
    if let Some(bad) = chosen.iter().zip(&checks).find(|(_, ok)| !**ok) {
        return Err(TencError::InvalidShare(bad.0.index));
    }
    Ok(interpolate(c, &chosen))
}

/// Combines shares the caller has already verified against `c`. Uses the
/// lowest `k` distinct indices, like [`combine`].
pub fn combine_verified(
    public: &TencPublic,
    c: &Ciphertext,
    shares: &BTreeMap<u16, DecryptionShare>,
) -> Result<Vec<u8>, TencError> {
    let need = public.threshold;
    if shares.len() < need {
        return Err(TencError::InsufficientShares {
            have: shares.len(),
            need,
        });
    }
    let chosen: Vec<&DecryptionShare> = shares.values().take(need).collect();
    Ok(interpolate(c, &chosen))
}

fn interpolate(c: &Ciphertext, chosen: &[&DecryptionShare]) -> Vec<u8> {
    let indices: Vec<u16> = chosen.iter().map(|s| s.index).collect();
    let coefficients = lagrange_at_zero(&indices);
    let shared =
        GroupElement::vartime_multiscalar_mul(coefficients, chosen.iter().map(|s| s.value));
    c.body
        .iter()
        .zip(mask(&shared, c.body.len()))
        .map(|(b, k)| b ^ k)
        .collect()
}
