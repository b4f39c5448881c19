//! Confounder controls: ω(N) restriction, nearest-neighbour matching, L-value
//! bands, the triple control, per-group BSD decomposition and Euler sums.

use std::collections::BTreeSet;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::curves::{CurveRecord, CurveTable};
use crate::profile::{self, MurmurationProfile, PrimeScope, ProfileError};
use crate::stats::{self, StatsError};
use crate::stratify::{self, StratError, StratReport, StratRule};
use crate::traces::TraceMatrix;
use crate::windows::Invariant;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfoundError {
    #[error("empty input group")]
    EmptyGroup,
    #[error("invalid band [{lo}, {hi}]")]
    BadBand { lo: f64, hi: f64 },
    #[error("no rank-0 curves with L(E,1) in [{lo}, {hi}]")]
    EmptyBand { lo: f64, hi: f64 },
    #[error("no curves with omega(N) = {0}")]
    EmptyOmega(u32),
    #[error("group {0} has zero mean L-value")]
    ZeroMeanL(usize),
    #[error(transparent)]
    Strat(#[from] StratError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Number of distinct prime factors.
pub fn omega(mut n: u64) -> u32 {
    let mut count = 0;
    let mut d = 2u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            count += 1;
            while n.is_multiple_of(d) {
                n /= d;
            }
        }
        d += if d == 2 { 1 } else { 2 };
    }
    if n > 1 {
        count += 1;
    }
    count
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaControl {
    pub omega: u32,
    pub n_curves: usize,
    pub rms: f64,
    pub report: StratReport,
}

/// Re-run a stratification restricted to curves with ω(N) = k.
pub fn control_omega(
    table: &CurveTable,
    matrix: &TraceMatrix,
    rule: &StratRule,
    k: u32,
    n_shuffles: usize,
    seed: u64,
) -> Result<OmegaControl, ConfoundError> {
    let sub = table.filter(|r| omega(r.conductor) == k);
    if sub.is_empty() {
        return Err(ConfoundError::EmptyOmega(k));
    }
    let (_, profiles, report) = stratify::stratify(&sub, matrix, rule, n_shuffles, seed)?;
    Ok(OmegaControl {
        omega: k,
        n_curves: sub.len(),
        rms: stratify::profile_rms(&profiles)?,
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKey {
    Conductor,
    LValue,
}

impl MatchKey {
    pub fn value(self, r: &CurveRecord) -> f64 {
        match self {
            MatchKey::Conductor => r.conductor as f64,
            MatchKey::LValue => r.l_value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedPair {
    pub a: String,
    pub b: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedPairs {
    pub key: MatchKey,
    pub max_distance: f64,
    pub pairs: Vec<MatchedPair>,
}

impl MatchedPairs {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn mean_distance(&self) -> f64 {
        stats::mean(&self.pairs.iter().map(|p| p.distance).collect::<Vec<_>>())
    }

    pub fn labels_a(&self) -> Vec<&str> {
        self.pairs.iter().map(|p| p.a.as_str()).collect()
    }

    pub fn labels_b(&self) -> Vec<&str> {
        self.pairs.iter().map(|p| p.b.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Greedy 1-d nearest-neighbour matching without replacement.
///
/// A-curves are visited in ascending (key, label) order; each takes the closest
/// unused B-curve (ties to the smaller label) if it lies within `max_distance`,
/// otherwise it is dropped.
pub fn match_nn(
    group_a: &[&CurveRecord],
    group_b: &[&CurveRecord],
    key: MatchKey,
    max_distance: f64,
) -> Result<MatchedPairs, ConfoundError> {
    if group_a.is_empty() || group_b.is_empty() {
        return Err(ConfoundError::EmptyGroup);
    }
    let mut a: Vec<(Key, &str)> = group_a.iter().map(|r| (Key(key.value(r)), r.label.as_str())).collect();
    a.sort();
    let mut pool: BTreeSet<(Key, &str)> = group_b.iter().map(|r| (Key(key.value(r)), r.label.as_str())).collect();

    let mut pairs = Vec::new();
    for (x, label) in a {
        let above = pool.range((x, "")..).next().copied();
        let below = pool.range(..(x, "")).next_back().map(|&(k, _)| *pool.range((k, "")..).next().unwrap());
        let best = match (below, above) {
            (Some(lo), Some(hi)) => {
                let (dl, dh) = (x.0 - lo.0 .0, hi.0 .0 - x.0);
                if dl < dh || (dl == dh && lo.1 < hi.1) {
                    Some((lo, dl))
                } else {
                    Some((hi, dh))
                }
            }
            (Some(lo), None) => Some((lo, x.0 - lo.0 .0)),
            (None, Some(hi)) => Some((hi, hi.0 .0 - x.0)),
            (None, None) => break,
        };
        if let Some((b, d)) = best {
            if d <= max_distance {
                pool.remove(&b);
                pairs.push(MatchedPair {
                    a: label.to_string(),
                    b: b.1.to_string(),
                    distance: d,
                });
            }
        }
    }
    Ok(MatchedPairs {
        key,
        max_distance,
        pairs,
    })
}

/// How matched pairs are reduced to a single separation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    /// RMS between the two matched sub-profiles.
    #[default]
    Group,
    /// RMS over primes of the mean per-pair difference.
    PerPair,
}

fn matched_rows(pairs: &MatchedPairs, matrix: &TraceMatrix) -> Result<(Vec<usize>, Vec<usize>), ProfileError> {
    let look = |l: &str| matrix.row_of(l).ok_or_else(|| ProfileError::UnknownLabel(l.to_string()));
    let a = pairs.pairs.iter().map(|p| look(&p.a)).collect::<Result<_, _>>()?;
    let b = pairs.pairs.iter().map(|p| look(&p.b)).collect::<Result<_, _>>()?;
    Ok((a, b))
}

pub fn paired_rms(pairs: &MatchedPairs, matrix: &TraceMatrix, mode: PairMode) -> Result<f64, ConfoundError> {
    if pairs.is_empty() {
        return Err(ConfoundError::EmptyGroup);
    }
    let (a, b) = matched_rows(pairs, matrix)?;
    match mode {
        PairMode::Group => {
            let pa = profile::murmuration_profile(&a, matrix, PrimeScope::All)?;
            let pb = profile::murmuration_profile(&b, matrix, PrimeScope::All)?;
            Ok(stratify::profile_rms(&[pa, pb])?)
        }
        PairMode::PerPair => {
            let k = matrix.n_primes();
            let mut diff = vec![0i64; k];
            for (&i, &j) in a.iter().zip(&b) {
                for ((d, &x), &y) in diff.iter_mut().zip(matrix.row(i)).zip(matrix.row(j)) {
                    *d += x as i64 - y as i64;
                }
            }
            let n = a.len() as f64;
            let ss: f64 = diff.iter().map(|&d| (d as f64 / n).powi(2)).sum();
            Ok((ss / k as f64).sqrt())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedControl {
    pub key: MatchKey,
    pub max_distance: f64,
    pub n_pairs: usize,
    pub mean_distance: f64,
    pub rms: f64,
    pub mode: PairMode,
    pub report: StratReport,
}

/// Match, measure, and run the label-permutation null on the matched sets.
pub fn matched_control(
    pairs: &MatchedPairs,
    matrix: &TraceMatrix,
    mode: PairMode,
    n_shuffles: usize,
    seed: u64,
) -> Result<MatchedControl, ConfoundError> {
    let rms = paired_rms(pairs, matrix, mode)?;
    let (a, b) = matched_rows(pairs, matrix)?;
    let report = stratify::permutation_test(&[a, b], matrix, n_shuffles, seed)?;
    Ok(MatchedControl {
        key: pairs.key,
        max_distance: pairs.max_distance,
        n_pairs: pairs.len(),
        mean_distance: pairs.mean_distance(),
        rms,
        mode,
        report,
    })
}

/// Rank-0 curves with L(E,1) in the closed band.
pub fn lvalue_band(table: &CurveTable, lo: f64, hi: f64) -> Result<CurveTable, ConfoundError> {
    if !(lo < hi) {
        return Err(ConfoundError::BadBand { lo, hi });
    }
    let sub = table.filter(|r| r.rank == 0 && r.l_value >= lo && r.l_value <= hi);
    if sub.is_empty() {
        return Err(ConfoundError::EmptyBand { lo, hi });
    }
    Ok(sub)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HalfControl {
    pub n_curves: usize,
    pub result: Result<StratReport, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TripleControl {
    pub band: (f64, f64),
    pub conductors: (u64, u64),
    pub median_period: f64,
    /// Ω ≤ median.
    pub small: HalfControl,
    /// Ω > median.
    pub large: HalfControl,
}

/// Sha rule inside an L-value band and conductor range, split at the in-band
/// median real period.
pub fn triple_control(
    table: &CurveTable,
    matrix: &TraceMatrix,
    band: (f64, f64),
    conductors: (u64, u64),
    n_shuffles: usize,
    seed: u64,
) -> Result<TripleControl, ConfoundError> {
    let ranged = table.filter(|r| r.conductor >= conductors.0 && r.conductor <= conductors.1);
    let banded = lvalue_band(&ranged, band.0, band.1)?;
    let periods: Vec<f64> = banded.records().iter().map(|r| r.real_period).collect();
    let median = stats::median(&periods);
    let rule = StratRule::sha();
    let half = |keep: &dyn Fn(f64) -> bool| {
        let sub = banded.filter(|r| keep(r.real_period));
        HalfControl {
            n_curves: sub.len(),
            result: stratify::stratify(&sub, matrix, &rule, n_shuffles, seed)
                .map(|(_, _, rep)| rep)
                .map_err(|e| e.to_string()),
        }
    };
    Ok(TripleControl {
        band,
        conductors,
        median_period: median,
        small: half(&|w| w <= median),
        large: half(&|w| w > median),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupBsd {
    pub n_curves: usize,
    pub mean_period: f64,
    pub mean_l: f64,
    /// mean(Ω·∏c_p/T²) / mean(L); ≈ 1/|Sha| for a fixed-Sha group.
    pub ratio: f64,
}

pub fn bsd_group_ratios(table: &CurveTable, groups: &[Vec<usize>]) -> Result<Vec<GroupBsd>, ConfoundError> {
    groups
        .iter()
        .enumerate()
        .map(|(g, members)| {
            if members.is_empty() {
                return Err(ConfoundError::EmptyGroup);
            }
            let recs: Vec<&CurveRecord> = members.iter().map(|&i| &table.records()[i]).collect();
            let n = recs.len() as f64;
            let mean_l = recs.iter().map(|r| r.l_value).sum::<f64>() / n;
            if mean_l == 0.0 {
                return Err(ConfoundError::ZeroMeanL(g));
            }
            let local = recs
                .iter()
                .map(|r| r.real_period * r.tamagawa_product as f64 / (r.torsion_order as f64).powi(2))
                .sum::<f64>()
                / n;
            Ok(GroupBsd {
                n_curves: recs.len(),
                mean_period: recs.iter().map(|r| r.real_period).sum::<f64>() / n,
                mean_l,
                ratio: local / mean_l,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EulerCumsum {
    pub primes: Vec<u32>,
    pub sum_a: Vec<f64>,
    pub sum_b: Vec<f64>,
    pub delta: Vec<f64>,
    pub argmax_prime: u32,
    pub max_delta: f64,
    pub terminal_delta: f64,
}

impl EulerCumsum {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "p,sum_a,sum_b,delta")?;
        for i in 0..self.primes.len() {
            writeln!(w, "{},{},{},{}", self.primes[i], self.sum_a[i], self.sum_b[i], self.delta[i])?;
        }
        Ok(())
    }
}

/// Running sums Σ_{q≤P} mean_a_q / q for two profiles and their difference.
pub fn euler_cumsum(a: &MurmurationProfile, b: &MurmurationProfile) -> Result<EulerCumsum, ConfoundError> {
    if a.primes != b.primes {
        return Err(ProfileError::PrimeMismatch.into());
    }
    if a.primes.is_empty() {
        return Err(ConfoundError::EmptyGroup);
    }
    let running = |p: &MurmurationProfile| {
        let mut acc = 0.0;
        p.primes
            .as_slice()
            .iter()
            .zip(&p.mean_ap)
            .map(|(&q, &m)| {
                acc += m / q as f64;
                acc
            })
            .collect::<Vec<f64>>()
    };
    let sum_a = running(a);
    let sum_b = running(b);
    let delta: Vec<f64> = sum_a.iter().zip(&sum_b).map(|(x, y)| x - y).collect();
    let (imax, &max_delta) = delta
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1).then(y.0.cmp(&x.0)))
        .unwrap();
    Ok(EulerCumsum {
        primes: a.primes.as_slice().to_vec(),
        argmax_prime: a.primes.as_slice()[imax],
        max_delta,
        terminal_delta: *delta.last().unwrap(),
        sum_a,
        sum_b,
        delta,
    })
}

/// Pearson r between two per-curve invariants, each optionally log-transformed.
pub fn invariant_correlation(
    table: &CurveTable,
    x: Invariant,
    log_x: bool,
    y: Invariant,
    log_y: bool,
) -> Result<f64, ConfoundError> {
    let pick = |inv: Invariant, log: bool| -> Vec<f64> {
        table
            .records()
            .iter()
            .map(|r| {
                let v = inv.value(r);
                if log {
                    v.ln()
                } else {
                    v
                }
            })
            .collect()
    };
    Ok(stats::pearson(&pick(x, log_x), &pick(y, log_y))?)
}
