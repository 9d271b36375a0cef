//! Prime-order group arithmetic and hashing shared by the signature and
//! encryption schemes.
//!
//! The group is Ristretto255. Scalars encode as 32 little-endian bytes and
//! group elements as their 32-byte compressed Ristretto encoding.

use std::fmt;

use curve25519_dalek::constants::RISTRETTO_BASEPOINT_POINT;
use curve25519_dalek::ristretto::CompressedRistretto;
use curve25519_dalek::traits::Identity;
use rand::{CryptoRng, RngCore};
use sha2::{Digest as _, Sha256, Sha512};

pub use curve25519_dalek::ristretto::RistrettoPoint as GroupElement;
pub use curve25519_dalek::scalar::Scalar;

/// Length of every canonical scalar, element and digest encoding.
pub const ENCODED_LEN: usize = 32;

/// The fixed generator `G`.
pub fn generator() -> GroupElement {
    RISTRETTO_BASEPOINT_POINT
}

pub fn identity() -> GroupElement {
    GroupElement::identity()
}

/// Uniform scalar in `[0, q)`.
pub fn scalar_random<R: RngCore + CryptoRng>(rng: &mut R) -> Scalar {
    let mut wide = [0u8; 64];
    rng.fill_bytes(&mut wide);
    Scalar::from_bytes_mod_order_wide(&wide)
}

/// Domain-separated hash into `Z_q`.
pub fn hash_to_scalar(domain: &[u8], payload: &[u8]) -> Scalar {
    Transcript::new(domain).bytes(payload).to_scalar()
}

/// Domain-separated hash into the group. Never returns the identity.
pub fn hash_to_group(domain: &[u8], payload: &[u8]) -> GroupElement {
    Transcript::new(domain).bytes(payload).to_group()
}

/// 32-byte SHA-256 digest, used for consensus labels and ECHO/READY hashing.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Digest> {
        let arr: [u8; 32] = bytes.try_into().ok()?;
        Some(Digest(arr))
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({}..)", &self.to_hex()[..12])
    }
}

const LABEL_DOMAIN: &[u8] = b"anonbft/label/v1";

/// The protocol digest `H`.
pub fn digest(payload: &[u8]) -> Digest {
    digest_with(LABEL_DOMAIN, payload)
}

/// SHA-256 with an explicit domain prefix.
pub fn digest_with(domain: &[u8], payload: &[u8]) -> Digest {
    let mut h = Sha256::new();
    h.update((domain.len() as u64).to_le_bytes());
    h.update(domain);
    h.update(payload);
    Digest(h.finalize().into())
}

/// Length-prefixed hash input builder. Every item is framed with its length
/// so that distinct item sequences never produce the same byte stream.
#[derive(Clone)]
pub struct Transcript {
    hasher: Sha512,
}

impl Transcript {
    pub fn new(domain: &[u8]) -> Self {
        let mut hasher = Sha512::new();
        hasher.update(b"anonbft/transcript/v1");
        hasher.update((domain.len() as u64).to_le_bytes());
        hasher.update(domain);
        Transcript { hasher }
    }

    pub fn bytes(mut self, item: &[u8]) -> Self {
        self.hasher.update((item.len() as u64).to_le_bytes());
        self.hasher.update(item);
        self
    }

    pub fn point(self, p: &GroupElement) -> Self {
        self.bytes(p.compress().as_bytes())
    }

    pub fn compressed(self, p: &[u8; 32]) -> Self {
        self.bytes(p)
    }

    pub fn scalar(self, s: &Scalar) -> Self {
        self.bytes(s.as_bytes())
    }

    pub fn to_scalar(self) -> Scalar {
        let wide: [u8; 64] = self.hasher.finalize().into();
        Scalar::from_bytes_mod_order_wide(&wide)
    }

    pub fn to_group(self) -> GroupElement {
        let mut counter: u32 = 0;
        loop {
            let mut h = self.hasher.clone();
            h.update(b"to_group");
            h.update(counter.to_le_bytes());
            let wide: [u8; 64] = h.finalize().into();
            let p = GroupElement::from_uniform_bytes(&wide);
            if p != GroupElement::identity() {
                return p;
            }
            counter += 1;
        }
    }

    /// Expands the transcript into `len` pseudorandom bytes (counter-mode
    /// SHA-512).
    pub fn to_stream(self, len: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(len);
        let mut counter: u64 = 0;
        while out.len() < len {
            let mut h = self.hasher.clone();
            h.update(b"stream");
            h.update(counter.to_le_bytes());
            let block: [u8; 64] = h.finalize().into();
            let take = (len - out.len()).min(64);
            out.extend_from_slice(&block[..take]);
            counter += 1;
        }
        out
    }
}

pub fn scalar_to_bytes(s: &Scalar) -> [u8; 32] {
    s.to_bytes()
}

/// Decodes a canonical (fully reduced) scalar.
pub fn scalar_from_bytes(bytes: &[u8]) -> Option<Scalar> {
    let arr: [u8; 32] = bytes.try_into().ok()?;
    Option::from(Scalar::from_canonical_bytes(arr))
}

pub fn element_to_bytes(p: &GroupElement) -> [u8; 32] {
    p.compress().to_bytes()
}

/// Decodes a canonical compressed Ristretto encoding.
pub fn element_from_bytes(bytes: &[u8]) -> Option<GroupElement> {
    let c = CompressedRistretto::from_slice(bytes).ok()?;
    c.decompress()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::collections::HashSet;

    #[test]
    fn seeded_scalars_are_deterministic() {
        let a = scalar_random(&mut ChaCha20Rng::seed_from_u64(7));
        let b = scalar_random(&mut ChaCha20Rng::seed_from_u64(7));
        assert_eq!(a, b);
        // canonical means reduced below q
        assert!(scalar_from_bytes(&a.to_bytes()).is_some());
    }

    #[test]
    fn distinct_seeds_no_collisions() {
        let set: HashSet<[u8; 32]> = (0..1000u64)
            .map(|s| scalar_random(&mut ChaCha20Rng::seed_from_u64(s)).to_bytes())
            .collect();
        assert_eq!(set.len(), 1000);
    }

    #[test]
    fn hash_to_scalar_domain_separation() {
        assert_eq!(hash_to_scalar(b"A", b"x"), hash_to_scalar(b"A", b"x"));
        assert_ne!(hash_to_scalar(b"A", b"x"), hash_to_scalar(b"B", b"x"));
        // framing: ("ab","c") and ("a","bc") differ
        assert_ne!(hash_to_scalar(b"ab", b"c"), hash_to_scalar(b"a", b"bc"));
        let _ = hash_to_scalar(b"A", b"");
    }

    #[test]
    fn hash_to_group_properties() {
        assert_eq!(hash_to_group(b"d", b"p"), hash_to_group(b"d", b"p"));
        let mut seen = HashSet::new();
        for i in 0..1000u32 {
            let p = hash_to_group(b"d", &i.to_le_bytes());
            assert_ne!(p, identity());
            assert!(seen.insert(element_to_bytes(&p)));
        }
    }

    #[test]
    fn digest_basics() {
        assert_eq!(digest(b"x"), digest(b"x"));
        assert_eq!(digest(b"").as_bytes().len(), 32);
        let m = b"message".to_vec();
        let s = b"signature".to_vec();
        let joined = [m.clone(), s.clone()].concat();
        let a = digest(&joined);
        let mut other = m;
        other.extend_from_slice(&s);
        assert_eq!(a, digest(&other));
        assert_ne!(digest_with(b"other", &joined), a);
    }

    #[test]
    fn encodings_round_trip_and_group_law() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..32 {
            let a = scalar_random(&mut rng);
            let b = scalar_random(&mut rng);
            let g = generator();
            assert_eq!(a * g + b * g, (a + b) * g);
            let p = a * g;
            assert_eq!(element_from_bytes(&element_to_bytes(&p)), Some(p));
            assert_eq!(scalar_from_bytes(&scalar_to_bytes(&a)), Some(a));
        }
        let id = identity();
        assert_eq!(element_from_bytes(&element_to_bytes(&id)), Some(id));
        // non-canonical scalar (all 0xff) rejected
        assert!(scalar_from_bytes(&[0xff; 32]).is_none());
    }

    #[test]
    fn stream_lengths() {
        let t = Transcript::new(b"s").bytes(b"k");
        assert_eq!(t.clone().to_stream(0).len(), 0);
        assert_eq!(t.clone().to_stream(130).len(), 130);
        assert_eq!(t.clone().to_stream(70)[..64], t.to_stream(64)[..]);
    }
}
