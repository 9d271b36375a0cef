//! Protocol messages and their byte encodings.
//!
//! Every message starts with the instance identifier (`u16` big-endian
//! length, then bytes) and a one-byte kind.
//!
//! | kind | layout after `id, kind` |
//! |------|-------------------------|
//! | INIT / ECHO / READY / REQUEST / REPLY | flag (`0` full payload, `1` digest), then payload or 32-byte digest |
//! | EST / AUX / COORD_VALUE | `u32` round, 32-byte label, 1-byte bit |
//! | EST_ONES / AUX_ONES | `u32` round, `u16` count, count × 32-byte labels |
//! | DECS | `u16` count, then count × (ciphertext, share) |
//!
//! A full payload is `u32` message length, message bytes, ring signature.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::crypto::{self, Digest};
use crate::tenc::{Ciphertext, DecryptionShare, SHARE_LEN};
use crate::trs::RingSignature;

pub type InstanceId = Arc<[u8]>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("truncated input")]
    Truncated,
    #[error("unknown message kind {0:#04x}")]
    UnknownKind(u8),
    #[error("invalid field: {0}")]
    Invalid(&'static str),
    #[error("trailing bytes after message")]
    Trailing,
}

/// A ring-signed proposal `(m, σ)` with its cached canonical encoding.
#[derive(Clone, PartialEq, Eq)]
pub struct Payload {
    message: Vec<u8>,
    signature: RingSignature,
    encoded: Vec<u8>,
    digest: Digest,
}

impl Payload {
    pub fn new(message: Vec<u8>, signature: RingSignature) -> Payload {
        let mut encoded = Vec::with_capacity(4 + message.len() + signature.encoded_len());
        encoded.extend_from_slice(&(message.len() as u32).to_be_bytes());
        encoded.extend_from_slice(&message);
        signature.write_to(&mut encoded);
        let digest = crypto::digest(&encoded);
        Payload {
            message,
            signature,
            encoded,
            digest,
        }
    }

    pub fn message(&self) -> &[u8] {
        &self.message
    }

    pub fn signature(&self) -> &RingSignature {
        &self.signature
    }

    /// `u32 len || m || σ`.
    pub fn encoded(&self) -> &[u8] {
        &self.encoded
    }

    /// `H(m || σ)`; doubles as the consensus label.
    pub fn digest(&self) -> Digest {
        self.digest
    }

    fn read_from(bytes: &[u8]) -> Result<(Payload, usize), WireError> {
        let mut r = Reader::new(bytes);
        let len = r.u32()? as usize;
        let message = r.take(len)?.to_vec();
        let (signature, used) = RingSignature::read_from(&bytes[r.pos..])
            .map_err(|_| WireError::Invalid("signature"))?;
        Ok((Payload::new(message, signature), r.pos + used))
    }
}

impl fmt::Debug for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Payload({:?}, {} bytes)",
            self.digest,
            self.message.len()
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BroadcastBody {
    Full(Arc<Payload>),
    Digest(Digest),
}

impl BroadcastBody {
    pub fn digest(&self) -> Digest {
        match self {
            BroadcastBody::Full(p) => p.digest(),
            BroadcastBody::Digest(d) => *d,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Est,
    Aux,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MessageBody {
    Init(Arc<Payload>),
    Echo(BroadcastBody),
    Ready(BroadcastBody),
    /// Ask for the preimage of a digest that reached a quorum.
    Request(Digest),
    Reply(Arc<Payload>),
    Est {
        round: u32,
        label: Digest,
        bit: bool,
    },
    Aux {
        round: u32,
        label: Digest,
        bit: bool,
    },
    CoordValue {
        round: u32,
        label: Digest,
        bit: bool,
    },
    /// Zero in every instance whose label is not in `ones`.
    Ones {
        phase: Phase,
        round: u32,
        ones: Arc<Vec<Digest>>,
    },
    Decs(Arc<Vec<(Ciphertext, DecryptionShare)>>),
}

mod kind {
    pub const INIT: u8 = 0x01;
    pub const ECHO: u8 = 0x02;
    pub const READY: u8 = 0x03;
    pub const REQUEST: u8 = 0x04;
    pub const REPLY: u8 = 0x05;
    pub const EST: u8 = 0x10;
    pub const AUX: u8 = 0x11;
    pub const COORD_VALUE: u8 = 0x12;
    pub const EST_ONES: u8 = 0x20;
    pub const AUX_ONES: u8 = 0x21;
    pub const DECS: u8 = 0x30;
}

impl MessageBody {
    pub fn kind_byte(&self) -> u8 {
        match self {
            MessageBody::Init(_) => kind::INIT,
            MessageBody::Echo(_) => kind::ECHO,
            MessageBody::Ready(_) => kind::READY,
            MessageBody::Request(_) => kind::REQUEST,
            MessageBody::Reply(_) => kind::REPLY,
            MessageBody::Est { .. } => kind::EST,
            MessageBody::Aux { .. } => kind::AUX,
            MessageBody::CoordValue { .. } => kind::COORD_VALUE,
            MessageBody::Ones {
                phase: Phase::Est, ..
            } => kind::EST_ONES,
            MessageBody::Ones {
                phase: Phase::Aux, ..
            } => kind::AUX_ONES,
            MessageBody::Decs(_) => kind::DECS,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        kind_name(self.kind_byte())
    }

    /// Label-like column for traces: payload digest, consensus label, or none.
    pub fn label(&self) -> Option<Digest> {
        match self {
            MessageBody::Init(p) | MessageBody::Reply(p) => Some(p.digest()),
            MessageBody::Echo(b) | MessageBody::Ready(b) => Some(b.digest()),
            MessageBody::Request(d) => Some(*d),
            MessageBody::Est { label, .. }
            | MessageBody::Aux { label, .. }
            | MessageBody::CoordValue { label, .. } => Some(*label),
            MessageBody::Ones { .. } | MessageBody::Decs(_) => None,
        }
    }
}

pub fn kind_name(kind: u8) -> &'static str {
    match kind {
        kind::INIT => "INIT",
        kind::ECHO => "ECHO",
        kind::READY => "READY",
        kind::REQUEST => "REQUEST",
        kind::REPLY => "REPLY",
        kind::EST => "EST",
        kind::AUX => "AUX",
        kind::COORD_VALUE => "COORD_VALUE",
        kind::EST_ONES => "EST_ONES",
        kind::AUX_ONES => "AUX_ONES",
        kind::DECS => "DECS",
        _ => "UNKNOWN",
    }
}

/// All kind names, in kind-byte order.
pub const KIND_NAMES: [&str; 11] = [
    "INIT",
    "ECHO",
    "READY",
    "REQUEST",
    "REPLY",
    "EST",
    "AUX",
    "COORD_VALUE",
    "EST_ONES",
    "AUX_ONES",
    "DECS",
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub id: InstanceId,
    pub body: MessageBody,
}

impl Envelope {
    pub fn new(id: InstanceId, body: MessageBody) -> Envelope {
        Envelope { id, body }
    }

    pub fn encoded_len(&self) -> usize {
        let head = 2 + self.id.len() + 1;
        head + match &self.body {
            MessageBody::Init(p) | MessageBody::Reply(p) => 1 + p.encoded().len(),
            MessageBody::Echo(b) | MessageBody::Ready(b) => match b {
                BroadcastBody::Full(p) => 1 + p.encoded().len(),
                BroadcastBody::Digest(_) => 33,
            },
            MessageBody::Request(_) => 33,
            MessageBody::Est { .. } | MessageBody::Aux { .. } | MessageBody::CoordValue { .. } => {
                4 + 32 + 1
            }
            MessageBody::Ones { ones, .. } => 4 + 2 + 32 * ones.len(),
            MessageBody::Decs(entries) => {
                2 + entries
                    .iter()
                    .map(|(c, _)| c.encoded_len() + SHARE_LEN)
                    .sum::<usize>()
            }
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&(self.id.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.id);
        out.push(self.body.kind_byte());
        match &self.body {
            MessageBody::Init(p) | MessageBody::Reply(p) => {
                out.push(0);
                out.extend_from_slice(p.encoded());
            }
            MessageBody::Echo(b) | MessageBody::Ready(b) => match b {
                BroadcastBody::Full(p) => {
                    out.push(0);
                    out.extend_from_slice(p.encoded());
                }
                BroadcastBody::Digest(d) => {
                    out.push(1);
                    out.extend_from_slice(d.as_bytes());
                }
            },
            MessageBody::Request(d) => {
                out.push(1);
                out.extend_from_slice(d.as_bytes());
            }
            MessageBody::Est { round, label, bit }
            | MessageBody::Aux { round, label, bit }
            | MessageBody::CoordValue { round, label, bit } => {
                out.extend_from_slice(&round.to_be_bytes());
                out.extend_from_slice(label.as_bytes());
                out.push(*bit as u8);
            }
            MessageBody::Ones { round, ones, .. } => {
                out.extend_from_slice(&round.to_be_bytes());
                out.extend_from_slice(&(ones.len() as u16).to_be_bytes());
                for l in ones.iter() {
                    out.extend_from_slice(l.as_bytes());
                }
            }
            MessageBody::Decs(entries) => {
                out.extend_from_slice(&(entries.len() as u16).to_be_bytes());
                for (c, s) in entries.iter() {
                    c.write_to(&mut out);
                    s.write_to(&mut out);
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Envelope, WireError> {
        let mut r = Reader::new(bytes);
        let id_len = r.u16()? as usize;
        let id: InstanceId = Arc::from(r.take(id_len)?);
        let k = r.u8()?;
        let body = match k {
            kind::INIT | kind::ECHO | kind::READY | kind::REQUEST | kind::REPLY => {
                let flag = r.u8()?;
                let body = match flag {
                    0 => {
                        let (p, used) = Payload::read_from(r.rest())?;
                        r.pos += used;
                        BroadcastBody::Full(Arc::new(p))
                    }
                    1 => BroadcastBody::Digest(r.digest()?),
                    _ => return Err(WireError::Invalid("payload flag")),
                };
                match (k, body) {
                    (kind::INIT, BroadcastBody::Full(p)) => MessageBody::Init(p),
                    (kind::REPLY, BroadcastBody::Full(p)) => MessageBody::Reply(p),
                    (kind::REQUEST, BroadcastBody::Digest(d)) => MessageBody::Request(d),
                    (kind::ECHO, b) => MessageBody::Echo(b),
                    (kind::READY, b) => MessageBody::Ready(b),
                    _ => return Err(WireError::Invalid("payload flag")),
                }
            }
            kind::EST | kind::AUX | kind::COORD_VALUE => {
                let round = r.u32()?;
                let label = r.digest()?;
                let bit = match r.u8()? {
                    0 => false,
                    1 => true,
                    _ => return Err(WireError::Invalid("bit")),
                };
                match k {
                    kind::EST => MessageBody::Est { round, label, bit },
                    kind::AUX => MessageBody::Aux { round, label, bit },
                    _ => MessageBody::CoordValue { round, label, bit },
                }
            }
            kind::EST_ONES | kind::AUX_ONES => {
                let round = r.u32()?;
                let count = r.u16()? as usize;
                let ones = (0..count)
                    .map(|_| r.digest())
                    .collect::<Result<Vec<_>, _>>()?;
                let phase = if k == kind::EST_ONES {
                    Phase::Est
                } else {
                    Phase::Aux
                };
                MessageBody::Ones {
                    phase,
                    round,
                    ones: Arc::new(ones),
                }
            }
            kind::DECS => {
                let count = r.u16()? as usize;
                let mut entries = Vec::with_capacity(count.min(1024));
                for _ in 0..count {
                    let (c, used) = Ciphertext::read_from(r.rest())
                        .map_err(|_| WireError::Invalid("ciphertext"))?;
                    r.pos += used;
                    let s = DecryptionShare::from_bytes(r.take(SHARE_LEN)?)
                        .map_err(|_| WireError::Invalid("share"))?;
                    entries.push((c, s));
                }
                MessageBody::Decs(Arc::new(entries))
            }
            other => return Err(WireError::UnknownKind(other)),
        };
        if r.pos != bytes.len() {
            return Err(WireError::Trailing);
        }
        Ok(Envelope { id, body })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8], WireError> {
        let end = self.pos.checked_add(len).ok_or(WireError::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(WireError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn rest(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn digest(&mut self) -> Result<Digest, WireError> {
        Ok(Digest::from_slice(self.take(32)?).unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tenc;
    use crate::trs::{self, IssueTag, Ring};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn payload(msg: &[u8]) -> Arc<Payload> {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let (sks, pks): (Vec<_>, Vec<_>) = (0..3).map(|_| trs::keygen(&mut rng)).unzip();
        let ring = Arc::new(Ring::new(pks).unwrap());
        let tag = IssueTag::new(ring, b"w".to_vec()).unwrap();
        let sig = trs::sign(&tag, 1, &sks[0], msg, &mut rng).unwrap();
        Arc::new(Payload::new(msg.to_vec(), sig))
    }

    fn id() -> InstanceId {
        Arc::from(&b"inst"[..])
    }

    #[test]
    fn fixed_layouts() {
        let label = crypto::digest(b"l");
        let est = Envelope::new(
            id(),
            MessageBody::Est {
                round: 7,
                label,
                bit: true,
            },
        );
        let bytes = est.encode();
        assert_eq!(&bytes[..2], &[0, 4]);
        assert_eq!(&bytes[2..6], b"inst");
        assert_eq!(bytes[6], 0x10);
        assert_eq!(&bytes[7..11], &[0, 0, 0, 7]);
        assert_eq!(&bytes[11..43], label.as_bytes());
        assert_eq!(bytes[43], 1);
        assert_eq!(bytes.len(), 44);

        let ones = Envelope::new(
            id(),
            MessageBody::Ones {
                phase: Phase::Aux,
                round: 2,
                ones: Arc::new(vec![label, label]),
            },
        );
        let b = ones.encode();
        assert_eq!(b[6], 0x21);
        assert_eq!(&b[11..13], &[0, 2]);
        assert_eq!(b.len(), 13 + 64);

        let echo = Envelope::new(id(), MessageBody::Echo(BroadcastBody::Digest(label)));
        let b = echo.encode();
        assert_eq!(b[6], 0x02);
        assert_eq!(b[7], 1);
        assert_eq!(b.len(), 8 + 32);
    }

    #[test]
    fn payload_messages_round_trip() {
        let p = payload(b"hello");
        for body in [
            MessageBody::Init(p.clone()),
            MessageBody::Echo(BroadcastBody::Full(p.clone())),
            MessageBody::Ready(BroadcastBody::Digest(p.digest())),
            MessageBody::Request(p.digest()),
            MessageBody::Reply(p.clone()),
        ] {
            let env = Envelope::new(id(), body);
            let bytes = env.encode();
            assert_eq!(bytes.len(), env.encoded_len());
            assert_eq!(Envelope::decode(&bytes).unwrap(), env);
        }
    }

    #[test]
    fn decs_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let (pubk, keys) = tenc::deal(4, 1, &mut rng).unwrap();
        let entries: Vec<_> = (0..3u8)
            .map(|i| {
                let c = tenc::encrypt(&pubk, b"id", &[i; 10], &mut rng).unwrap();
                let s = tenc::share_decrypt(&pubk, &keys[0], &c, &mut rng).unwrap();
                (c, s)
            })
            .collect();
        let env = Envelope::new(id(), MessageBody::Decs(Arc::new(entries)));
        let bytes = env.encode();
        assert_eq!(bytes.len(), env.encoded_len());
        assert_eq!(Envelope::decode(&bytes).unwrap(), env);
    }

    #[test]
    fn decode_errors() {
        assert_eq!(Envelope::decode(&[0]).unwrap_err(), WireError::Truncated);
        assert_eq!(
            Envelope::decode(&[0, 0, 0x7f]).unwrap_err(),
            WireError::UnknownKind(0x7f)
        );
        let mut b = Envelope::new(
            id(),
            MessageBody::Aux {
                round: 1,
                label: Digest::default(),
                bit: false,
            },
        )
        .encode();
        *b.last_mut().unwrap() = 2;
        assert_eq!(Envelope::decode(&b).unwrap_err(), WireError::Invalid("bit"));
        b.push(0);
        assert!(Envelope::decode(&b).is_err());
    }

    proptest! {
        #[test]
        fn bin_and_ones_round_trip(
            round in any::<u32>(),
            bit in any::<bool>(),
            labels in proptest::collection::vec(any::<[u8; 32]>(), 0..20),
            which in 0u8..5,
            id_bytes in proptest::collection::vec(any::<u8>(), 0..40),
        ) {
            let label = Digest(labels.first().copied().unwrap_or_default());
            let ones = Arc::new(labels.into_iter().map(Digest).collect::<Vec<_>>());
            let body = match which {
                0 => MessageBody::Est { round, label, bit },
                1 => MessageBody::Aux { round, label, bit },
                2 => MessageBody::CoordValue { round, label, bit },
                3 => MessageBody::Ones { phase: Phase::Est, round, ones },
                _ => MessageBody::Ones { phase: Phase::Aux, round, ones },
            };
            let env = Envelope::new(Arc::from(id_bytes.as_slice()), body);
            let bytes = env.encode();
            prop_assert_eq!(bytes.len(), env.encoded_len());
            prop_assert_eq!(Envelope::decode(&bytes).unwrap(), env);
        }

        #[test]
        fn decode_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
            let _ = Envelope::decode(&bytes);
        }
    }
}
