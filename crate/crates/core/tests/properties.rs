use std::sync::Arc;

use anonbft::crypto;
use anonbft::tenc::{self, TencError};
use anonbft::trs::{self, IssueTag, Ring, TraceOutcome};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn ring(n: usize, seed: u64) -> (Vec<trs::SecretKey>, Arc<Ring>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (sks, pks): (Vec<_>, Vec<_>) = (0..n).map(|_| trs::keygen(&mut rng)).unzip();
    (sks, Arc::new(Ring::new(pks).unwrap()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn signatures_verify_and_trace(
        n in 2usize..6,
        seed in any::<u64>(),
        signer in 0usize..6,
        m1 in proptest::collection::vec(any::<u8>(), 0..64),
        m2 in proptest::collection::vec(any::<u8>(), 0..64),
    ) {
        let signer = signer % n + 1;
        let (sks, ring) = ring(n, seed);
        let tag = IssueTag::new(ring, b"prop".to_vec()).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 1);
        let s1 = trs::sign(&tag, signer, &sks[signer - 1], &m1, &mut rng).unwrap();
        let s2 = trs::sign(&tag, signer, &sks[signer - 1], &m2, &mut rng).unwrap();
        let t1 = trs::verify(&tag, &m1, &s1).unwrap();
        prop_assert_eq!(t1.len(), n);
        let expected = if m1 == m2 { TraceOutcome::Linked } else { TraceOutcome::Traced(signer) };
        prop_assert_eq!(trs::trace(&tag, &m1, &s1, &m2, &s2).unwrap(), expected);
        let other = signer % n + 1;
        let s3 = trs::sign(&tag, other, &sks[other - 1], &m2, &mut rng).unwrap();
        prop_assert_eq!(trs::trace(&tag, &m1, &s1, &m2, &s3).unwrap(), TraceOutcome::Independent);
        let decoded = trs::RingSignature::from_bytes(&s1.to_bytes()).unwrap();
        prop_assert!(trs::verify(&tag, &m1, &decoded).is_ok());
    }

    #[test]
    fn threshold_subsets_decrypt(
        seed in any::<u64>(),
        plaintext in proptest::collection::vec(any::<u8>(), 0..256),
        mask in 0u32..128,
    ) {
        let (n, t) = (7, 2);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (public, keys) = tenc::deal(n, t, &mut rng).unwrap();
        let c = tenc::encrypt(&public, b"label", &plaintext, &mut rng).unwrap();
        prop_assert!(tenc::verify_enc(&public, &c));
        let shares: Vec<_> = keys
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, k)| tenc::share_decrypt(&public, k, &c, &mut rng).unwrap())
            .collect();
        let result = tenc::combine(&public, &c, &shares);
        if shares.len() > t {
            prop_assert_eq!(result.unwrap(), plaintext);
        } else {
            let insufficient = matches!(result, Err(TencError::InsufficientShares { .. }));
            prop_assert!(insufficient);
        }
    }

    #[test]
    fn ciphertext_bit_flips_detected(seed in any::<u64>(), pos in any::<usize>(), bit in 0u8..8) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (public, _) = tenc::deal(4, 1, &mut rng).unwrap();
        let c = tenc::encrypt(&public, b"id", b"some ballot", &mut rng).unwrap();
        let mut bytes = c.to_bytes();
        let pos = pos % bytes.len();
        bytes[pos] ^= 1 << bit;
        if let Ok(m) = tenc::Ciphertext::from_bytes(&bytes) { prop_assert!(!tenc::verify_enc(&public, &m)) }
    }

    #[test]
    fn hash_to_group_never_identity(domain in proptest::collection::vec(any::<u8>(), 0..8),
                                     payload in proptest::collection::vec(any::<u8>(), 0..64)) {
        prop_assert_ne!(crypto::hash_to_group(&domain, &payload), crypto::identity());
    }
}
