//! Library results checked against independent slow computations.

mod common;

use common::{discriminant, naive_ap, naive_ap_bad, random_models, E11A1};
use murmur_core::curves::{CurveRecord, CurveTable};
use murmur_core::hecke::extend_an;
use murmur_core::lfunc::{self, LSeries};
use murmur_core::pointcount::ap_at_prime;
use murmur_core::primes::{primes_up_to, PrimeList};
use murmur_core::savgol::{savgol_residuals, smoothing_weights};
use murmur_core::spectral::{welch_psd, WelchParams};
use murmur_core::traces::build_trace_matrix;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[test]
fn e11a1_traces_match_enumeration() {
    for (p, want) in [(2, -2), (3, -1), (5, 1), (7, -2), (13, 4)] {
        assert_eq!(naive_ap(&E11A1, p), want);
        assert_eq!(ap_at_prime(&E11A1, 11, p as u32).unwrap() as i64, want, "p = {p}");
    }
    assert_eq!(naive_ap_bad(&E11A1, 11), 1);
    assert_eq!(ap_at_prime(&E11A1, 11, 11).unwrap(), 1);
}

#[test]
fn random_models_match_enumeration() {
    for m in random_models(25, 11) {
        let disc = discriminant(&m);
        for p in primes_up_to(97) {
            let got = ap_at_prime(&m, 1, p).unwrap() as i64;
            if disc % p as i128 != 0 {
                assert_eq!(got, naive_ap(&m, p as u64), "model {m:?}, p = {p}");
            } else {
                // Singular reduction: count the smooth locus.
                let bad = ap_at_prime(&m, p as u64, p).unwrap() as i64;
                assert_eq!(bad, naive_ap_bad(&m, p as u64), "model {m:?}, bad p = {p}");
                assert!(bad.abs() <= 1);
            }
        }
    }
}

#[test]
fn trace_row_for_e11a1() {
    let mut r = common::record("11a1", 11);
    r.a_invariants = E11A1;
    let table = CurveTable::from_records(vec![r]).unwrap();
    let m = build_trace_matrix(&table, &PrimeList::first(5)).unwrap();
    assert_eq!(m.row(0), &[-2, -1, 1, -2, 1]);
    assert!(m.is_bad(0, 4));
}

/// q ∏ (1 − qⁿ)² (1 − q¹¹ⁿ)², the weight-2 newform of level 11.
fn eta_product(n_max: usize) -> Vec<i64> {
    let mut c = vec![0i64; n_max];
    c[0] = 1; // coefficient of q^1 stored at index 0
    let mut mul = |step: usize| {
        for _ in 0..2 {
            for i in (step..n_max).rev() {
                c[i] -= c[i - step];
            }
        }
    };
    for n in 1..n_max {
        mul(n);
        if 11 * n < n_max {
            mul(11 * n);
        }
    }
    c
}

#[test]
fn hecke_extension_matches_eta_product() {
    let n_max = 400;
    let ps = primes_up_to(n_max as u32);
    let ap: Vec<i64> = ps.iter().map(|&p| ap_at_prime(&E11A1, 11, p).unwrap() as i64).collect();
    let an = extend_an(&ps, &ap, 11, n_max).unwrap();
    assert_eq!(an, eta_product(n_max));
}

#[test]
fn central_value_of_e11a1() {
    let mut r: CurveRecord = common::record("11a1", 11);
    r.a_invariants = E11A1;
    let s = LSeries::for_record(&r, 10.0).unwrap();
    let l = lfunc::l_value_series(&s).unwrap();
    assert!((l - 0.253841860855911).abs() / 0.253841860855911 < 1e-10, "L(1) = {l}");
}

/// Residual of a degree-d least-squares fit at the window center, solved by SVD.
fn lsq_residual(seg: &[f64], degree: usize) -> f64 {
    let half = (seg.len() / 2) as f64;
    let v = DMatrix::from_fn(seg.len(), degree + 1, |i, j| (i as f64 - half).powi(j as i32));
    let y = DVector::from_column_slice(seg);
    let coef = v.svd(true, true).solve(&y, 1e-12).unwrap();
    seg[seg.len() / 2] - coef[0]
}

#[test]
fn savgol_matches_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let xs: Vec<f64> = (0..400).map(|i| (i as f64 / 17.0).sin() + noise.sample(&mut rng)).collect();
    let ours = savgol_residuals(&xs, 101, 3).unwrap();
    assert_eq!(ours.len(), 300);
    for (i, r) in ours.iter().enumerate().step_by(7) {
        let want = lsq_residual(&xs[i..i + 101], 3);
        assert!((r - want).abs() < 1e-8, "at {i}: {r} vs {want}");
    }
    let w = smoothing_weights(101, 3).unwrap();
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn savgol_removes_slow_sine_but_keeps_fast() {
    // A period-1000 sine is nearly cubic over 101 samples; a period-20 sine is not.
    let slow: Vec<f64> = (0..1000).map(|i| (i as f64 * 2.0 * std::f64::consts::PI / 1000.0).sin()).collect();
    let fast: Vec<f64> = (0..1000).map(|i| (i as f64 * 2.0 * std::f64::consts::PI / 20.0).sin()).collect();
    let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    assert!(rms(&savgol_residuals(&slow, 101, 3).unwrap()) < 1e-3);
    let kept = rms(&savgol_residuals(&fast, 101, 3).unwrap());
    assert!((kept - std::f64::consts::FRAC_1_SQRT_2).abs() / std::f64::consts::FRAC_1_SQRT_2 < 0.05, "{kept}");
}

#[test]
fn welch_white_noise_matches_variance() {
    // One-sided density of unit white noise integrates to 1, so its level is 2.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let x: Vec<f64> = (0..65_536).map(|_| noise.sample(&mut rng)).collect();
    let s = welch_psd(&x, WelchParams::default()).unwrap();
    let interior = &s.power[1..s.power.len() - 1];
    let level = interior.iter().sum::<f64>() / interior.len() as f64;
    assert!((level - 2.0).abs() < 0.05, "level {level}");
}

#[test]
fn welch_finds_sinusoid() {
    let x: Vec<f64> = (0..2048).map(|i| (2.0 * std::f64::consts::PI * 32.0 * i as f64 / 256.0).cos()).collect();
    let s = welch_psd(&x, WelchParams::default()).unwrap();
    assert_eq!(s.peak_bin(), 32);
    assert!((s.freqs[32] - 0.125).abs() < 1e-12);
}
