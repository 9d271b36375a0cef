//! Anonymity-preserving Byzantine agreement.
//!
//! Building blocks, from the bottom up:
//!
//! - [`crypto`]: Ristretto255 group, hashing, digests.
//! - [`trs`]: traceable ring signatures.
//! - [`tenc`]: non-interactive threshold encryption with share proofs.
//! - [`wire`]: message types and their byte encodings.
//! - [`aarbp`]: anonymous reliable broadcast of ring-signed proposals.
//! - [`bincons`]: randomisation-free binary consensus.
//! - [`avcp`]: anonymous vector consensus on top of the two above.
//! - [`election`]: encrypted-ballot elections driven by vector consensus.
//!
//! Protocol modules are written as sans-I/O state machines: handlers consume
//! a message and return [`Effect`]s for the caller (normally the simulator)
//! to carry out.

pub mod aarbp;
pub mod avcp;
pub mod bincons;
pub mod crypto;
mod effect;
pub mod election;
pub mod par;
pub mod tenc;
pub mod trs;
pub mod wire;

pub use effect::{Effect, Evidence, Output, ProcessId};
pub use par::Execution;
