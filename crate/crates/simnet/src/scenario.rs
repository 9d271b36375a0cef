//! Seeded scenario generation for sweeps.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::config::{Adversary, Behavior, Protocol, SimConfig};

/// Fault classes drawn by [`adversarial`].
pub const SWEEP_CLASSES: [&str; 6] = [
    "honest",
    "crash",
    "mute",
    "double_sign",
    "echo_equivocate",
    "zero_spam",
];

fn class_behavior(class: &str, rng: &mut ChaCha20Rng) -> Behavior {
    match class {
        "crash" => Behavior::Crash {
            at: rng.gen_range(0..12),
        },
        "mute" => Behavior::Mute,
        "double_sign" => Behavior::DoubleSign,
        "echo_equivocate" => Behavior::EchoEquivocate,
        "zero_spam" => Behavior::ZeroSpam,
        _ => Behavior::Honest,
    }
}

/// A seeded scenario: one fault class applied to `t` random processes, a
/// random GST in `0..=20`, random delays and adversary.
pub fn adversarial(protocol: Protocol, n: usize, t: usize, seed: u64) -> SimConfig {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed_5eed);
    let class = SWEEP_CLASSES[(seed % SWEEP_CLASSES.len() as u64) as usize];
    let mut cfg = SimConfig::new(protocol, n, t, seed);
    cfg.gst = rng.gen_range(0..=20);
    cfg.delta = rng.gen_range(1..=3);
    let lo = rng.gen_range(1..=3);
    cfg.anon_delay_range = (lo, lo + rng.gen_range(0..=4));
    cfg.adversary =
        [Adversary::Random, Adversary::FifoInversion, Adversary::Fifo][rng.gen_range(0..3)];
    if class != "honest" {
        for i in sample(&mut rng, n, t).into_iter() {
            let behavior = class_behavior(class, &mut rng);
            cfg = cfg.with_fault(i + 1, behavior);
        }
    }
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plans_are_valid_and_seeded() {
        for seed in 0..60 {
            let cfg = adversarial(Protocol::Vector, 7, 2, seed);
            cfg.validate().unwrap();
            assert_eq!(cfg, adversarial(Protocol::Vector, 7, 2, seed));
            let faulty = cfg.faults.len();
            assert!(faulty == 0 || faulty == 2);
        }
    }
}
