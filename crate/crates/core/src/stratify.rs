//! Stratification of a curve family by a BSD invariant, RMS separation of the
//! group profiles, and permutation nulls.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::curves::{CurveRecord, CurveTable};
use crate::exec;
use crate::profile::{self, MurmurationProfile, PrimeScope, ProfileError};
use crate::stats::{self, StatsError};
use crate::traces::TraceMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StratError {
    #[error("group `{0}` is empty")]
    EmptyGroup(String),
    #[error("need at least two groups")]
    TooFewGroups,
    #[error("no p-values supplied")]
    NoTests,
    #[error("window [{lo}, {hi}]: {source}")]
    Window {
        lo: u64,
        hi: u64,
        source: Box<StratError>,
    },
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Quantity a rule groups on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    Tamagawa,
    Sha,
    Torsion,
    Period,
    RootNumber,
    LValue,
}

impl GroupKey {
    /// `None` leaves the curve unassigned (e.g. a Sha value that does not snap).
    pub fn value(self, r: &CurveRecord) -> Option<f64> {
        match self {
            GroupKey::Tamagawa => Some(r.tamagawa_product as f64),
            GroupKey::Sha => r.sha_snapped().map(|s| s as f64),
            GroupKey::Torsion => Some(r.torsion_order as f64),
            GroupKey::Period => Some(r.real_period),
            GroupKey::RootNumber => Some(r.root_number as f64),
            GroupKey::LValue => Some(r.l_value),
        }
    }
}

/// Closed interval [lo, hi] of key values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupDef {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

impl GroupDef {
    pub fn new(name: &str, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            lo,
            hi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// Explicit disjoint intervals; values outside all of them stay unassigned.
    Bins(Vec<GroupDef>),
    /// Equal-count groups by key rank.
    Quantiles(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratRule {
    pub name: String,
    pub key: GroupKey,
    pub grouping: Grouping,
}

impl StratRule {
    /// ∏c_p = 1 vs ∏c_p ≥ 5 (2–4 unassigned).
    pub fn tamagawa() -> Self {
        Self {
            name: "tamagawa".into(),
            key: GroupKey::Tamagawa,
            grouping: Grouping::Bins(vec![
                GroupDef::new("tam=1", 1.0, 1.0),
                GroupDef::new("tam>=5", 5.0, f64::INFINITY),
            ]),
        }
    }

    /// |Sha| = 1 vs |Sha| ≥ 4.
    pub fn sha() -> Self {
        Self {
            name: "sha".into(),
            key: GroupKey::Sha,
            grouping: Grouping::Bins(vec![
                GroupDef::new("sha=1", 1.0, 1.0),
                GroupDef::new("sha>=4", 4.0, f64::INFINITY),
            ]),
        }
    }

    pub fn period_quartiles() -> Self {
        Self {
            name: "period".into(),
            key: GroupKey::Period,
            grouping: Grouping::Quantiles(4),
        }
    }

    /// Trivial, order 2, and order ≥ 3 torsion.
    pub fn torsion() -> Self {
        Self {
            name: "torsion".into(),
            key: GroupKey::Torsion,
            grouping: Grouping::Bins(vec![
                GroupDef::new("tors=1", 1.0, 1.0),
                GroupDef::new("tors=2", 2.0, 2.0),
                GroupDef::new("tors>=3", 3.0, f64::INFINITY),
            ]),
        }
    }

    /// w = +1 vs w = −1 (calibration: recovers the rank-parity murmuration).
    pub fn root_number() -> Self {
        Self {
            name: "root_number".into(),
            key: GroupKey::RootNumber,
            grouping: Grouping::Bins(vec![
                GroupDef::new("w=+1", 1.0, 1.0),
                GroupDef::new("w=-1", -1.0, -1.0),
            ]),
        }
    }

    pub fn lvalue_quartiles() -> Self {
        Self {
            name: "l_value".into(),
            key: GroupKey::LValue,
            grouping: Grouping::Quantiles(4),
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        Some(match name {
            "tamagawa" => Self::tamagawa(),
            "sha" => Self::sha(),
            "period" => Self::period_quartiles(),
            "torsion" => Self::torsion(),
            "root_number" => Self::root_number(),
            "l_value" => Self::lvalue_quartiles(),
            _ => return None,
        })
    }

    pub fn group_names(&self) -> Vec<String> {
        match &self.grouping {
            Grouping::Bins(defs) => defs.iter().map(|d| d.name.clone()).collect(),
            Grouping::Quantiles(k) => (1..=*k).map(|i| format!("Q{i}")).collect(),
        }
    }
}

/// Groups of table indices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    pub rule: String,
    pub names: Vec<String>,
    pub members: Vec<Vec<usize>>,
    pub unassigned: Vec<usize>,
}

impl Partition {
    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    /// Trace-matrix rows of each group.
    pub fn rows(&self, table: &CurveTable, matrix: &TraceMatrix) -> Result<Vec<Vec<usize>>, ProfileError> {
        self.members
            .iter()
            .map(|g| {
                g.iter()
                    .map(|&i| {
                        let label = &table.records()[i].label;
                        matrix
                            .row_of(label)
                            .ok_or_else(|| ProfileError::UnknownLabel(label.clone()))
                    })
                    .collect()
            })
            .collect()
    }
}

pub fn partition(table: &CurveTable, rule: &StratRule) -> Result<Partition, StratError> {
    let names = rule.group_names();
    let mut members = vec![Vec::new(); names.len()];
    let mut unassigned = Vec::new();
    match &rule.grouping {
        Grouping::Bins(defs) => {
            for (i, r) in table.records().iter().enumerate() {
                let slot = rule
                    .key
                    .value(r)
                    .and_then(|v| defs.iter().position(|d| v >= d.lo && v <= d.hi));
                match slot {
                    Some(g) => members[g].push(i),
                    None => unassigned.push(i),
                }
            }
        }
        Grouping::Quantiles(k) => {
            let mut keyed: Vec<(f64, usize)> = Vec::new();
            for (i, r) in table.records().iter().enumerate() {
                match rule.key.value(r) {
                    Some(v) => keyed.push((v, i)),
                    None => unassigned.push(i),
                }
            }
            keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let n = keyed.len();
            for (pos, &(_, i)) in keyed.iter().enumerate() {
                members[pos * k / n.max(1)].push(i);
            }
            for g in &mut members {
                g.sort_unstable();
            }
        }
    }
    if names.len() < 2 {
        return Err(StratError::TooFewGroups);
    }
    if let Some(g) = members.iter().position(Vec::is_empty) {
        return Err(StratError::EmptyGroup(names[g].clone()));
    }
    Ok(Partition {
        rule: rule.name.clone(),
        names,
        members,
        unassigned,
    })
}

/// RMS separation of ≥2 profiles: square root of the mean, over primes and
/// unordered group pairs, of squared mean differences.
pub fn profile_rms(profiles: &[MurmurationProfile]) -> Result<f64, StratError> {
    if profiles.len() < 2 {
        return Err(StratError::TooFewGroups);
    }
    if profiles.windows(2).any(|w| w[0].primes != w[1].primes) {
        return Err(ProfileError::PrimeMismatch.into());
    }
    let means: Vec<&[f64]> = profiles.iter().map(|p| p.mean_ap.as_slice()).collect();
    Ok(rms_of_means(&means))
}

fn rms_of_means(means: &[&[f64]]) -> f64 {
    let k = means[0].len();
    if k == 0 {
        return 0.0;
    }
    let mut acc = 0.0;
    let mut pairs = 0usize;
    for a in 0..means.len() {
        for b in a + 1..means.len() {
            acc += means[a]
                .iter()
                .zip(means[b])
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>();
            pairs += 1;
        }
    }
    (acc / (pairs * k) as f64).sqrt()
}

fn rms_from_sums(sums: &[Vec<i64>], sizes: &[usize]) -> f64 {
    let means: Vec<Vec<f64>> = sums
        .iter()
        .zip(sizes)
        .map(|(s, &n)| s.iter().map(|&v| v as f64 / n as f64).collect())
        .collect();
    let refs: Vec<&[f64]> = means.iter().map(Vec::as_slice).collect();
    rms_of_means(&refs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratReport {
    pub observed_rms: f64,
    pub null_mean: f64,
    pub null_median: f64,
    pub null_sd: f64,
    pub p_value: f64,
    pub n_shuffles: usize,
    pub group_sizes: Vec<usize>,
    pub seed: u64,
    /// Set when fewer than 100 shuffles were requested.
    pub low_shuffle_count: bool,
}

/// Deterministic RNG for shuffle `index` of a run seeded with `seed`.
pub fn shuffle_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Label-permutation null for the RMS separation of `groups` (matrix rows).
///
/// Each shuffle draws its own ChaCha stream from (seed, shuffle index), so the
/// result does not depend on thread count or scheduling.
pub fn permutation_test(
    groups: &[Vec<usize>],
    matrix: &TraceMatrix,
    n_shuffles: usize,
    seed: u64,
) -> Result<StratReport, StratError> {
    if groups.len() < 2 {
        return Err(StratError::TooFewGroups);
    }
    if let Some(g) = groups.iter().position(Vec::is_empty) {
        return Err(StratError::EmptyGroup(format!("#{g}")));
    }
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let pool: Vec<usize> = groups.iter().flatten().copied().collect();
    let total = profile::column_sums(&pool, matrix);
    let observed = {
        let sums: Vec<Vec<i64>> = groups.iter().map(|g| profile::column_sums(g, matrix)).collect();
        rms_from_sums(&sums, &sizes)
    };

    // The largest group is recovered as total minus the others.
    let largest = (0..sizes.len()).max_by_key(|&g| (sizes[g], usize::MAX - g)).unwrap();
    let drawn: usize = sizes.iter().sum::<usize>() - sizes[largest];
    let null: Vec<f64> = exec::map_range(n_shuffles, |s| {
        let mut rng = shuffle_rng(seed, s as u64);
        let mut picks = rand::seq::index::sample(&mut rng, pool.len(), drawn).into_vec();
        if sizes.len() > 2 {
            picks.shuffle(&mut rng);
        }
        let mut sums = vec![Vec::new(); sizes.len()];
        let mut offset = 0;
        let mut rows = Vec::new();
        for g in (0..sizes.len()).filter(|&g| g != largest) {
            rows.clear();
            rows.extend(picks[offset..offset + sizes[g]].iter().map(|&i| pool[i]));
            sums[g] = profile::column_sums(&rows, matrix);
            offset += sizes[g];
        }
        let mut rest = total.clone();
        for g in (0..sizes.len()).filter(|&g| g != largest) {
            for (r, v) in rest.iter_mut().zip(&sums[g]) {
                *r -= v;
            }
        }
        sums[largest] = rest;
        rms_from_sums(&sums, &sizes)
    });
    let exceed = null.iter().filter(|&&v| v >= observed).count();
    Ok(StratReport {
        observed_rms: observed,
        null_mean: stats::mean(&null),
        null_median: stats::median(&null),
        null_sd: if null.len() > 1 {
            stats::sample_variance(&null).sqrt()
        } else {
            0.0
        },
        p_value: (1 + exceed) as f64 / (1 + n_shuffles) as f64,
        n_shuffles,
        group_sizes: sizes,
        seed,
        low_shuffle_count: n_shuffles < 100,
    })
}

/// Partition, compute profiles and RMS, and run the permutation null in one go.
pub fn stratify(
    table: &CurveTable,
    matrix: &TraceMatrix,
    rule: &StratRule,
    n_shuffles: usize,
    seed: u64,
) -> Result<(Partition, Vec<MurmurationProfile>, StratReport), StratError> {
    let part = partition(table, rule)?;
    let rows = part.rows(table, matrix)?;
    let profiles = rows
        .iter()
        .map(|g| profile::murmuration_profile(g, matrix, PrimeScope::All))
        .collect::<Result<Vec<_>, _>>()?;
    let report = permutation_test(&rows, matrix, n_shuffles, seed)?;
    Ok((part, profiles, report))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bonferroni {
    pub threshold: f64,
    pub reject: Vec<bool>,
}

/// Reject H0 for p ≤ α/m.
pub fn bonferroni(p_values: &[f64], alpha: f64) -> Result<Bonferroni, StratError> {
    if p_values.is_empty() {
        return Err(StratError::NoTests);
    }
    let threshold = alpha / p_values.len() as f64;
    Ok(Bonferroni {
        threshold,
        reject: p_values.iter().map(|&p| p <= threshold).collect(),
    })
}

/// Conductor windows of the default scale scan.
pub const SCALE_WINDOWS: [(u64, u64); 4] = [(5_000, 20_000), (10_000, 50_000), (20_000, 70_000), (50_000, 100_000)];

/// Nine overlapping windows over the same span, for the power-law fit.
pub const FIT_WINDOWS: [(u64, u64); 9] = [
    (5_000, 20_000),
    (7_500, 30_000),
    (10_000, 40_000),
    (15_000, 50_000),
    (20_000, 60_000),
    (25_000, 70_000),
    (30_000, 80_000),
    (40_000, 90_000),
    (50_000, 100_000),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowRms {
    pub lo: u64,
    pub hi: u64,
    pub center: f64,
    pub rms: f64,
    pub group_sizes: Vec<usize>,
}

/// RMS ∝ N^(−alpha) fitted on log–log axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLaw {
    pub alpha: f64,
    pub alpha_se: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleScan {
    pub windows: Vec<WindowRms>,
    pub fit: Option<PowerLaw>,
}

pub fn fit_power_law(centers: &[f64], rms: &[f64]) -> Result<PowerLaw, StatsError> {
    let lx: Vec<f64> = centers.iter().map(|c| c.ln()).collect();
    let ly: Vec<f64> = rms.iter().map(|r| r.ln()).collect();
    if ly.windows(2).all(|w| w[0] == w[1]) && ly.len() >= 3 {
        return Ok(PowerLaw {
            alpha: 0.0,
            alpha_se: 0.0,
            r2: 1.0,
        });
    }
    let fit = stats::linear_fit(&lx, &ly)?;
    Ok(PowerLaw {
        alpha: -fit.slope,
        alpha_se: fit.slope_se,
        r2: fit.r2,
    })
}

/// Per-window RMS of `rule` and a power-law fit against the window's geometric center.
pub fn scale_scan(
    table: &CurveTable,
    matrix: &TraceMatrix,
    rule: &StratRule,
    windows: &[(u64, u64)],
) -> Result<ScaleScan, StratError> {
    let mut out = Vec::with_capacity(windows.len());
    for &(lo, hi) in windows {
        let wrap = |e: StratError| StratError::Window {
            lo,
            hi,
            source: Box::new(e),
        };
        let sub = table.filter(|r| r.conductor >= lo && r.conductor <= hi);
        let part = partition(&sub, rule).map_err(wrap)?;
        let rows = part.rows(&sub, matrix).map_err(|e| wrap(e.into()))?;
        let profiles = rows
            .iter()
            .map(|g| profile::murmuration_profile(g, matrix, PrimeScope::All))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| wrap(e.into()))?;
        out.push(WindowRms {
            lo,
            hi,
            center: ((lo as f64) * (hi as f64)).sqrt(),
            rms: profile_rms(&profiles).map_err(wrap)?,
            group_sizes: part.sizes(),
        });
    }
    let fit = if out.len() >= 3 {
        let c: Vec<f64> = out.iter().map(|w| w.center).collect();
        let r: Vec<f64> = out.iter().map(|w| w.rms).collect();
        Some(fit_power_law(&c, &r)?)
    } else {
        None
    };
    Ok(ScaleScan { windows: out, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primes::PrimeList;

    fn rec(label: &str, tam: u64, period: f64) -> CurveRecord {
        CurveRecord {
            label: label.into(),
            isogeny_class: label.into(),
            a_invariants: [0; 5],
            conductor: 11,
            rank: 0,
            root_number: 1,
            real_period: period,
            regulator: 1.0,
            tamagawa_product: tam,
            torsion_order: 1,
            sha_an: 1.0,
            l_value: 1.0,
        }
    }

    fn profile(v: Vec<f64>) -> MurmurationProfile {
        MurmurationProfile {
            primes: PrimeList::first(v.len()),
            mean_ap: v,
            n_curves: 1,
        }
    }

    #[test]
    fn tamagawa_rule_leaves_middle_unassigned() {
        let t = CurveTable::from_records(vec![rec("a", 1, 1.0), rec("b", 7, 1.0), rec("c", 3, 1.0)]).unwrap();
        let p = partition(&t, &StratRule::tamagawa()).unwrap();
        assert_eq!(p.members, vec![vec![0], vec![1]]);
        assert_eq!(p.unassigned, vec![2]);
    }

    #[test]
    fn sha_rule_groups() {
        let mut recs = Vec::new();
        for (i, s) in [1.0, 4.0, 9.0, 16.0, 1.0].iter().enumerate() {
            let mut r = rec(&format!("s{i}"), 1, 1.0);
            r.sha_an = *s;
            recs.push(r);
        }
        let t = CurveTable::from_records(recs).unwrap();
        let p = partition(&t, &StratRule::sha()).unwrap();
        assert_eq!(p.sizes(), vec![2, 3]);
    }

    #[test]
    fn quartiles_of_eight() {
        let recs = (0..8).map(|i| rec(&format!("q{i}"), 1, (8 - i) as f64 * 0.3)).collect();
        let t = CurveTable::from_records(recs).unwrap();
        let p = partition(&t, &StratRule::period_quartiles()).unwrap();
        assert_eq!(p.sizes(), vec![2, 2, 2, 2]);
        // smallest periods first
        let q1: Vec<f64> = p.members[0].iter().map(|&i| t.records()[i].real_period).collect();
        assert!(q1.iter().all(|&v| v <= 0.6 + 1e-12));
    }

    #[test]
    fn empty_group_named() {
        let t = CurveTable::from_records(vec![rec("a", 1, 1.0)]).unwrap();
        assert_eq!(
            partition(&t, &StratRule::tamagawa()),
            Err(StratError::EmptyGroup("tam>=5".into()))
        );
    }

    #[test]
    fn rms_basics() {
        let a = profile(vec![1.0, 2.0, 3.0]);
        assert_eq!(profile_rms(&[a.clone(), a.clone()]).unwrap(), 0.0);
        let b = profile(vec![1.5, 2.5, 3.5]);
        assert!((profile_rms(&[a.clone(), b.clone()]).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(profile_rms(&[a.clone(), b.clone()]), profile_rms(&[b, a]));
        let c = profile(vec![1.0, 2.0]);
        assert!(profile_rms(&[profile(vec![1.0, 2.0, 3.0]), c]).is_err());
    }

    #[test]
    fn three_group_rms_averages_pairs() {
        let a = profile(vec![0.0, 0.0]);
        let b = profile(vec![1.0, 1.0]);
        let c = profile(vec![2.0, 2.0]);
        // pairs: 1, 4, 1 → mean 2
        assert!((profile_rms(&[a, b, c]).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bonferroni_thresholds() {
        let b = bonferroni(&[1e-5, 1e-3, 1e-4, 0.5, 0.0001], 0.001).unwrap();
        assert!((b.threshold - 0.0002).abs() < 1e-18);
        assert_eq!(b.reject, vec![true, false, true, false, true]);
        assert_eq!(bonferroni(&[0.0005], 0.001).unwrap().threshold, 0.001);
        assert!(bonferroni(&[1.0, 1.0], 0.001).unwrap().reject.iter().all(|r| !r));
        assert_eq!(bonferroni(&[], 0.001), Err(StratError::NoTests));
    }

    #[test]
    fn power_law_constant_and_synthetic() {
        let c: Vec<f64> = (0..9).map(|i| 5_000.0 * 1.4f64.powi(i)).collect();
        let flat = vec![0.7; 9];
        assert_eq!(fit_power_law(&c, &flat).unwrap().alpha, 0.0);
        let r: Vec<f64> = c.iter().map(|n| 3.0 * n.powf(-0.25)).collect();
        let f = fit_power_law(&c, &r).unwrap();
        assert!((f.alpha - 0.25).abs() < 1e-12);
    }
}
