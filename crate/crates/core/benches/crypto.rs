use std::collections::BTreeMap;
use std::hint::black_box;
use std::sync::Arc;

use anonbft::tenc;
use anonbft::trs::{self, IssueTag, Ring};
use anonbft::Execution;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn ring_signatures(c: &mut Criterion) {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("trs");
    group.sample_size(10);
    for n in [10usize, 50, 100] {
        let (sks, pks): (Vec<_>, Vec<_>) = (0..n).map(|_| trs::keygen(&mut rng)).unzip();
        let tag = IssueTag::new(Arc::new(Ring::new(pks).unwrap()), b"bench".to_vec()).unwrap();
        let sig = trs::sign(&tag, 1, &sks[0], b"message", &mut rng).unwrap();
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(format!("sign/{name}"), n), &n, |b, _| {
                b.iter(|| trs::sign_with(exec, &tag, 1, &sks[0], b"message", &mut rng).unwrap())
            });
            group.bench_with_input(BenchmarkId::new(format!("verify/{name}"), n), &n, |b, _| {
                b.iter(|| trs::verify_with(exec, &tag, black_box(b"message"), &sig).unwrap())
            });
        }
    }
    group.finish();
}

fn threshold(c: &mut Criterion) {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let mut group = c.benchmark_group("tenc");
    group.sample_size(10);
    let (public, keys) = tenc::deal(100, 33, &mut rng).unwrap();
    let cts: Vec<_> = (0..64)
        .map(|i| tenc::encrypt(&public, b"id", &[i as u8; 32], &mut rng).unwrap())
        .collect();
    let shares: Vec<_> = cts
        .iter()
        .map(|ct| tenc::share_decrypt(&public, &keys[0], ct, &mut rng).unwrap())
        .collect();
    let pairs: Vec<_> = cts.iter().zip(&shares).collect();
    for (name, exec) in MODES {
        group.bench_function(
            BenchmarkId::new(format!("verify_batch_64/{name}"), 64),
            |b| b.iter(|| assert!(tenc::verify_shares_batch(exec, &public, &pairs))),
        );
    }
    group.bench_function("encrypt", |b| {
        b.iter(|| tenc::encrypt(&public, b"id", &[7u8; 32], &mut rng).unwrap())
    });
    for k in [2usize, 8, 34] {
        let (public, keys) = tenc::deal(3 * k - 2, k - 1, &mut rng).unwrap();
        let ct = tenc::encrypt(&public, b"id", b"ballot", &mut rng).unwrap();
        let shares: BTreeMap<u16, _> = keys[..k]
            .iter()
            .map(|key| {
                let s = tenc::share_decrypt(&public, key, &ct, &mut rng).unwrap();
                (s.index, s)
            })
            .collect();
        let list: Vec<_> = shares.values().cloned().collect();
        for (name, exec) in MODES {
            group.bench_with_input(
                BenchmarkId::new(format!("combine/{name}"), k),
                &k,
                |b, _| b.iter(|| tenc::combine_with(exec, &public, &ct, &list).unwrap()),
            );
        }
        group.bench_with_input(BenchmarkId::new("combine_verified", k), &k, |b, _| {
            b.iter(|| tenc::combine_verified(&public, &ct, &shares).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, ring_signatures, threshold);
criterion_main!(benches);
