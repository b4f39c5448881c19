#![allow(dead_code)]

use murmur_core::curves::{CurveRecord, CurveTable};
use murmur_core::primes::PrimeList;
use murmur_core::traces::{BitSet, TraceMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const E11A1: [i128; 5] = [0, -1, 1, -10, -20];

fn modp(a: i128, p: u64) -> u64 {
    a.rem_euclid(p as i128) as u64
}

/// Affine points of the full Weierstrass equation mod p, by trying every (x, y).
/// Returns (all points, smooth points).
pub fn naive_affine(model: &[i128; 5], p: u64) -> (u64, u64) {
    let [a1, a2, a3, a4, a6] = model.map(|a| modp(a, p));
    let (mut all, mut smooth) = (0, 0);
    for x in 0..p {
        for y in 0..p {
            let lhs = (y * y + a1 * x * y + a3 * y) % p;
            let rhs = (x * x * x + a2 * x * x + a4 * x + a6) % p;
            if lhs != rhs {
                continue;
            }
            all += 1;
            let dx = (3 * x * x + 2 * a2 * x + a4 + p * p - a1 * y % p) % p;
            let dy = (2 * y + a1 * x + a3) % p;
            if dx != 0 || dy != 0 {
                smooth += 1;
            }
        }
    }
    (all, smooth)
}

/// p + 1 − #E(F_p) by enumeration.
pub fn naive_ap(model: &[i128; 5], p: u64) -> i64 {
    p as i64 + 1 - (naive_affine(model, p).0 as i64 + 1)
}

/// p − #E_ns(F_p) by enumeration (bad primes).
pub fn naive_ap_bad(model: &[i128; 5], p: u64) -> i64 {
    p as i64 - (naive_affine(model, p).1 as i64 + 1)
}

pub fn discriminant(a: &[i128; 5]) -> i128 {
    let [a1, a2, a3, a4, a6] = *a;
    let b2 = a1 * a1 + 4 * a2;
    let b4 = 2 * a4 + a1 * a3;
    let b6 = a3 * a3 + 4 * a6;
    let b8 = a1 * a1 * a6 + 4 * a2 * a6 - a1 * a3 * a4 + a2 * a3 * a3 - a4 * a4;
    -b2 * b2 * b8 - 8 * b4 * b4 * b4 - 27 * b6 * b6 + 9 * b2 * b4 * b6
}

/// Random models with nonzero discriminant and small coefficients.
pub fn random_models(n: usize, seed: u64) -> Vec<[i128; 5]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let m = [
            rng.random_range(0..=1),
            rng.random_range(-1..=1),
            rng.random_range(0..=1),
            rng.random_range(-500..=500),
            rng.random_range(-5000..=5000),
        ];
        if discriminant(&m) != 0 {
            out.push(m);
        }
    }
    out
}

pub fn record(label: &str, conductor: u64) -> CurveRecord {
    CurveRecord {
        label: label.into(),
        isogeny_class: label.into(),
        a_invariants: [0; 5],
        conductor,
        rank: 0,
        root_number: 1,
        real_period: 1.0,
        regulator: 1.0,
        tamagawa_product: 1,
        torsion_order: 1,
        sha_an: 1.0,
        l_value: 1.0,
    }
}

/// A synthetic trace matrix with |a_p| ≤ 2√p, one row per label.
pub fn random_matrix(labels: &[String], k: usize, seed: u64) -> TraceMatrix {
    let primes = PrimeList::first(k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut traces = Vec::with_capacity(labels.len() * k);
    for _ in labels {
        for &p in primes.as_slice() {
            let b = (2.0 * (p as f64).sqrt()).floor() as i16;
            traces.push(rng.random_range(-b..=b));
        }
    }
    TraceMatrix::from_parts(labels.to_vec(), primes, traces, BitSet::new(labels.len() * k)).unwrap()
}

/// Table and matrix of `n` synthetic rank-0 curves.
pub fn synthetic(n: usize, k: usize, seed: u64) -> (CurveTable, TraceMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let records: Vec<CurveRecord> = (0..n)
        .map(|i| {
            let n = 10_000 + i as u64;
            let mut r = record(&format!("{n}a1"), n);
            r.isogeny_class = format!("{n}a");
            r.tamagawa_product = [1, 1, 2, 5, 8][rng.random_range(0..5)];
            r.sha_an = [1.0, 1.0, 1.0, 4.0, 9.0][rng.random_range(0..5)];
            r.real_period = rng.random_range(0.1..3.0);
            r.l_value = rng.random_range(0.5..4.0);
            r
        })
        .collect();
    let table = CurveTable::from_records(records).unwrap();
    let labels: Vec<String> = table.records().iter().map(|r| r.label.clone()).collect();
    let m = random_matrix(&labels, k, seed);
    (table, m)
}
