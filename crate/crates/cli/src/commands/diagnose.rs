use anyhow::{anyhow, Result};
use murmur_core::confound;
use murmur_core::diagnostics::{self, CrossoverReport, MomentProfile, MomentSummary, VarianceRatio, LANDMARK_PRIMES};
use murmur_core::profile::{self, PrimeScope};
use murmur_core::stats::{self, KsResult};
use murmur_core::stratify::{self, StratReport, StratRule};
use serde::Serialize;

use crate::config::RunConfig;
use crate::report::{Cell, Outputs};

pub const DEFAULT_BAND: (f64, f64) = (1.10, 3.28);
const KS_P_MIN: u32 = 1000;

#[derive(Serialize)]
struct Summary {
    range: (u64, u64),
    band: (f64, f64),
    group_sizes: (usize, usize),
    moments_sha1: MomentSummary,
    moments_sha4: MomentSummary,
    variance_ratio: VarianceRatio,
    /// Permutation test of the profile separation (the mean shift).
    mean_shift: StratReport,
    satotate_ks: Result<KsResult, String>,
    /// Pooled angles of both groups against the Sato–Tate law.
    satotate_fit: Result<KsResult, String>,
    crossover: CrossoverReport,
    /// Sha-rule RMS over root-number-rule RMS in the same range.
    effect_ratio: Option<f64>,
    reduction_agreement: f64,
    reduction_entries: usize,
    tamagawa_bad_prime_share: Result<f64, String>,
}

fn moment_rows(mp: &MomentProfile) -> Vec<Vec<Cell>> {
    (0..mp.primes.len())
        .map(|j| {
            vec![
                mp.primes[j].into(),
                mp.mean[j].into(),
                mp.variance[j].into(),
                mp.var_over_p[j].into(),
                mp.skewness[j].into(),
                mp.excess_kurtosis[j].into(),
            ]
        })
        .collect()
}

const MOMENT_HEADER: [&str; 6] = ["p", "mean", "variance", "var_over_p", "skewness", "excess_kurtosis"];

pub fn run(cfg: &RunConfig) -> Result<()> {
    let table = super::load_table(cfg)?;
    let m = super::load_matrix(cfg, &table)?;
    let ranged = super::in_range(&table, cfg);
    let rank0 = ranged.filter(|r| r.rank == 0);
    let band = cfg.band.unwrap_or(DEFAULT_BAND);
    let banded = confound::lvalue_band(&rank0, band.0, band.1)?;
    let mut out = Outputs::new(&cfg.out, cfg.svg)?;

    let sha = StratRule::sha();
    let (part, profiles, mean_shift) = stratify::stratify(&banded, &m, &sha, cfg.shuffles, cfg.seed)?;
    let rows = part.rows(&banded, &m)?;
    let (g1, g4) = (&rows[0], &rows[1]);
    let m1 = diagnostics::moment_profile(g1, &m)?;
    let m4 = diagnostics::moment_profile(g4, &m)?;
    out.table("moments_sha1", &MOMENT_HEADER, moment_rows(&m1))?;
    out.table("moments_sha4", &MOMENT_HEADER, moment_rows(&m4))?;

    // Needs primes above KS_P_MIN; short prime lists leave these as errors in the report.
    let satotate_ks = diagnostics::satotate_ks(g1, g4, &m, KS_P_MIN).map_err(|e| e.to_string());
    let mut pooled = diagnostics::angle_pool(g1, &m, KS_P_MIN);
    pooled.extend(diagnostics::angle_pool(g4, &m, KS_P_MIN));
    let satotate_fit = stats::ks_one_sample(&mut pooled, diagnostics::sato_tate_cdf).map_err(|e| e.to_string());

    let diff: Vec<f64> = profiles[1].mean_ap.iter().zip(&profiles[0].mean_ap).map(|(a, b)| a - b).collect();
    let primes = m.primes().as_slice();
    let crossover = diagnostics::crossover_scan(&diff, primes, &LANDMARK_PRIMES)?;
    out.table(
        "crossover",
        &["p", "difference", "smoothed"],
        (0..primes.len())
            .map(|j| vec![primes[j].into(), diff[j].into(), crossover.smoothed[j].into()])
            .collect(),
    )?;

    let sha_rms = stratify::profile_rms(&profiles)?;
    let rn = StratRule::root_number();
    let effect_ratio = stratify::partition(&ranged.filter(|r| r.rank <= 1), &rn)
        .ok()
        .and_then(|p| {
            let sub = ranged.filter(|r| r.rank <= 1);
            let rows = p.rows(&sub, &m).ok()?;
            let ps = rows
                .iter()
                .map(|g| profile::murmuration_profile(g, &m, PrimeScope::All))
                .collect::<Result<Vec<_>, _>>()
                .ok()?;
            Some(sha_rms / stratify::profile_rms(&ps).ok()?)
        });

    let reduction = diagnostics::classify_reduction(&rank0, &m)?;
    reduction.write_csv(out.writer("reduction.csv")?)?;
    let tamagawa_bad_prime_share = stratify::partition(&rank0, &StratRule::tamagawa())
        .map_err(|e| e.to_string())
        .and_then(|p| p.rows(&rank0, &m).map_err(|e| e.to_string()))
        .and_then(|rows| diagnostics::bad_prime_share(&rows, &m).map_err(|e| e.to_string()));

    let summary = Summary {
        range: cfg.range,
        band,
        group_sizes: (g1.len(), g4.len()),
        moments_sha1: m1.summary(),
        moments_sha4: m4.summary(),
        variance_ratio: diagnostics::variance_ratio(&m4, &m1),
        mean_shift,
        satotate_ks,
        satotate_fit,
        crossover,
        effect_ratio,
        reduction_agreement: reduction.agreement,
        reduction_entries: reduction.entries.len(),
        tamagawa_bad_prime_share,
    };
    out.report("diagnose", cfg, summary).map_err(|e| anyhow!(e))?;
    Ok(())
}
