//! Crypto microbenchmarks: median wall-clock time per operation.

use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use anonbft::tenc;
use anonbft::trs::{self, IssueTag, Ring};
use anonbft::Execution;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

pub const MIN_ITERATIONS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchOp {
    Sign,
    Verify,
    Encrypt,
    VerifyEnc,
    ShareDecrypt,
    VerifyShare,
    Combine,
}

impl BenchOp {
    pub const ALL: [BenchOp; 7] = [
        BenchOp::Sign,
        BenchOp::Verify,
        BenchOp::Encrypt,
        BenchOp::VerifyEnc,
        BenchOp::ShareDecrypt,
        BenchOp::VerifyShare,
        BenchOp::Combine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchOp::Sign => "sign",
            BenchOp::Verify => "verify",
            BenchOp::Encrypt => "encrypt",
            BenchOp::VerifyEnc => "verify_enc",
            BenchOp::ShareDecrypt => "share_decrypt",
            BenchOp::VerifyShare => "verify_share",
            BenchOp::Combine => "combine",
        }
    }
}

impl FromStr for BenchOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BenchOp::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| format!("unknown op {s:?}; expected one of sign, verify, encrypt, verify_enc, share_decrypt, verify_share, combine"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub op: &'static str,
    pub n: usize,
    /// Decryption threshold `t + 1`; the ring size for signature ops.
    pub k: usize,
    pub iterations: usize,
    pub median_ns: u64,
}

/// Median of `iterations` timed calls, after one warm-up call.
pub fn median_ns<F: FnMut()>(iterations: usize, mut f: F) -> u64 {
    f();
    let mut samples: Vec<u64> = (0..iterations.max(1))
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed().as_nanos() as u64
        })
        .collect();
    samples.sort_unstable();
    samples[samples.len() / 2]
}

/// Times `op` at size `n` with threshold `t + 1`. Fewer than
/// [`MIN_ITERATIONS`] iterations are rounded up.
pub fn measure(
    op: BenchOp,
    n: usize,
    t: usize,
    iterations: usize,
    exec: Execution,
    seed: u64,
) -> BenchRow {
    let iterations = iterations.max(MIN_ITERATIONS);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let k = match op {
        BenchOp::Sign | BenchOp::Verify => n,
        _ => t + 1,
    };
    let median = match op {
        BenchOp::Sign | BenchOp::Verify => {
            let (sks, pks): (Vec<_>, Vec<_>) = (0..n).map(|_| trs::keygen(&mut rng)).unzip();
            let tag = IssueTag::new(
                Arc::new(Ring::new(pks).expect("distinct keys")),
                b"bench".to_vec(),
            )
            .expect("ring of two or more");
            let sig = trs::sign_with(exec, &tag, 1, &sks[0], b"bench message", &mut rng).unwrap();
            if op == BenchOp::Sign {
                median_ns(iterations, || {
                    trs::sign_with(exec, &tag, 1, &sks[0], b"bench message", &mut rng).unwrap();
                })
            } else {
                median_ns(iterations, || {
                    trs::verify_with(exec, &tag, b"bench message", &sig).unwrap();
                })
            }
        }
        _ => {
            let (public, keys) = tenc::deal(n, t, &mut rng).expect("n > 3t");
            let plaintext = [0x42u8; 32];
            let ct = tenc::encrypt(&public, b"bench", &plaintext, &mut rng).unwrap();
            let shares: Vec<_> = keys[..k]
                .iter()
                .map(|key| tenc::share_decrypt(&public, key, &ct, &mut rng).unwrap())
                .collect();
            match op {
                BenchOp::Encrypt => median_ns(iterations, || {
                    tenc::encrypt(&public, b"bench", &plaintext, &mut rng).unwrap();
                }),
                BenchOp::VerifyEnc => {
                    median_ns(iterations, || assert!(tenc::verify_enc(&public, &ct)))
                }
                BenchOp::ShareDecrypt => median_ns(iterations, || {
                    tenc::share_decrypt(&public, &keys[0], &ct, &mut rng).unwrap();
                }),
                BenchOp::VerifyShare => median_ns(iterations, || {
                    assert!(tenc::verify_share(&public, &ct, &shares[0]))
                }),
                _ => median_ns(iterations, || {
                    tenc::combine_with(exec, &public, &ct, &shares).unwrap();
                }),
            }
        }
    };
    BenchRow {
        op: op.name(),
        n,
        k,
        iterations,
        median_ns: median,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares fit of `y = slope·x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    assert_eq!(xs.len(), ys.len());
    let m = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / m;
    let mean_y = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - mean_y).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    LinearFit {
        slope,
        intercept,
        r2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn op_names_round_trip() {
        for op in BenchOp::ALL {
            assert_eq!(op.name().parse::<BenchOp>().unwrap(), op);
        }
        assert!("decrypt".parse::<BenchOp>().is_err());
    }

    #[test]
    fn fit_recovers_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + 1.0).collect();
        let fit = linear_fit(&xs, &ys);
        assert!((fit.slope - 3.0).abs() < 1e-12);
        assert!((fit.intercept - 1.0).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        let noisy = linear_fit(&xs, &[1.0, -1.0, 1.0, -1.0]);
        assert!(noisy.r2 < 0.5);
    }

    #[test]
    fn measure_rounds_iterations_up() {
        let row = measure(BenchOp::Combine, 4, 1, 3, Execution::Sequential, 0);
        assert_eq!(row.iterations, MIN_ITERATIONS);
        assert_eq!(row.k, 2);
        assert!(row.median_ns > 0);
    }
}
