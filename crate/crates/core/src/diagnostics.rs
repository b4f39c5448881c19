//! Distributional diagnostics of group differences: per-prime moments,
//! Sato–Tate angles, sign crossover, reduction types and the bad-prime share.

use std::f64::consts::PI;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::curves::CurveTable;
use crate::exec;
use crate::profile::{self, ProfileError};
use crate::stats::{self, KsResult, StatsError};
use crate::traces::TraceMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("group has {0} curves; moments need at least 4")]
    Undersized(usize),
    #[error("no good (curve, prime) pairs with p > {0}")]
    EmptyPool(u32),
    #[error("need exactly two groups")]
    NotTwoGroups,
    #[error("groups have identical profiles; share undefined")]
    ZeroRms,
    #[error("{label}: a_{p} = {ap} at a bad prime")]
    BadTrace { label: String, p: u32, ap: i16 },
    #[error("empty difference profile")]
    EmptyProfile,
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentProfile {
    pub primes: Vec<u32>,
    pub n: usize,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub var_over_p: Vec<f64>,
    /// `None` where the variance vanishes.
    pub skewness: Vec<Option<f64>>,
    pub excess_kurtosis: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentSummary {
    pub mean: f64,
    pub var_over_p: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

fn mean_defined(xs: &[Option<f64>]) -> f64 {
    let v: Vec<f64> = xs.iter().flatten().copied().collect();
    stats::mean(&v)
}

impl MomentProfile {
    /// Unweighted means over primes (undefined shape moments skipped).
    pub fn summary(&self) -> MomentSummary {
        MomentSummary {
            mean: stats::mean(&self.mean),
            var_over_p: stats::mean(&self.var_over_p),
            skewness: mean_defined(&self.skewness),
            excess_kurtosis: mean_defined(&self.excess_kurtosis),
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        writeln!(w, "p,n,mean,variance,var_over_p,skewness,excess_kurtosis")?;
        for i in 0..self.primes.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                self.primes[i],
                self.n,
                self.mean[i],
                self.variance[i],
                self.var_over_p[i],
                opt(self.skewness[i]),
                opt(self.excess_kurtosis[i])
            )?;
        }
        Ok(())
    }
}

/// Sample moments of one column: mean, unbiased variance, bias-corrected
/// skewness G1 and excess kurtosis G2.
pub fn column_moments(xs: &[f64]) -> (f64, f64, Option<f64>, Option<f64>) {
    let n = xs.len() as f64;
    let m = stats::mean(xs);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let var = if xs.len() > 1 { m2 * n / (n - 1.0) } else { 0.0 };
    if m2 <= 0.0 {
        return (m, 0.0, None, None);
    }
    let skew = (xs.len() >= 3).then(|| {
        let g1 = m3 / m2.powf(1.5);
        (n * (n - 1.0)).sqrt() / (n - 2.0) * g1
    });
    let kurt = (xs.len() >= 4).then(|| {
        let g2 = m4 / (m2 * m2) - 3.0;
        (n - 1.0) / ((n - 2.0) * (n - 3.0)) * ((n + 1.0) * g2 + 6.0)
    });
    (m, var, skew, kurt)
}

pub fn moment_profile(rows: &[usize], matrix: &TraceMatrix) -> Result<MomentProfile, DiagnosticsError> {
    if rows.len() < 4 {
        return Err(DiagnosticsError::Undersized(rows.len()));
    }
    let primes = matrix.primes().as_slice().to_vec();
    let cols = exec::map_range(primes.len(), |j| {
        let col: Vec<f64> = rows.iter().map(|&i| matrix.get(i, j) as f64).collect();
        column_moments(&col)
    });
    let mut out = MomentProfile {
        n: rows.len(),
        mean: Vec::with_capacity(cols.len()),
        variance: Vec::with_capacity(cols.len()),
        var_over_p: Vec::with_capacity(cols.len()),
        skewness: Vec::with_capacity(cols.len()),
        excess_kurtosis: Vec::with_capacity(cols.len()),
        primes,
    };
    for (j, (m, v, s, k)) in cols.into_iter().enumerate() {
        out.mean.push(m);
        out.variance.push(v);
        out.var_over_p.push(v / out.primes[j] as f64);
        out.skewness.push(s);
        out.excess_kurtosis.push(k);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceRatio {
    pub mean: f64,
    pub sd: f64,
}

/// Per-prime Var_A / Var_B summarized across primes with nonzero variances.
pub fn variance_ratio(a: &MomentProfile, b: &MomentProfile) -> VarianceRatio {
    let r: Vec<f64> = a
        .variance
        .iter()
        .zip(&b.variance)
        .filter(|(_, &vb)| vb > 0.0)
        .map(|(va, vb)| va / vb)
        .collect();
    VarianceRatio {
        mean: stats::mean(&r),
        sd: if r.len() > 1 { stats::sample_variance(&r).sqrt() } else { 0.0 },
    }
}

/// θ = arccos(a_p / 2√p) ∈ [0, π].
pub fn sato_tate_angle(ap: i64, p: u32) -> f64 {
    (ap as f64 / (2.0 * (p as f64).sqrt())).clamp(-1.0, 1.0).acos()
}

/// CDF of the Sato–Tate density (2/π)sin²θ.
pub fn sato_tate_cdf(theta: f64) -> f64 {
    let t = theta.clamp(0.0, PI);
    (t - t.sin() * t.cos()) / PI
}

/// Angles over good (curve, prime) pairs with p > `p_min`.
pub fn angle_pool(rows: &[usize], matrix: &TraceMatrix, p_min: u32) -> Vec<f64> {
    let primes = matrix.primes().as_slice();
    let start = primes.partition_point(|&p| p <= p_min);
    let mut out = Vec::with_capacity(rows.len() * (primes.len() - start));
    for &i in rows {
        for (j, &p) in primes.iter().enumerate().skip(start) {
            if !matrix.is_bad(i, j) {
                out.push(sato_tate_angle(matrix.get(i, j) as i64, p));
            }
        }
    }
    out
}

/// Two-sample KS between the Sato–Tate angle pools of two groups.
pub fn satotate_ks(rows_a: &[usize], rows_b: &[usize], matrix: &TraceMatrix, p_min: u32) -> Result<KsResult, DiagnosticsError> {
    let mut a = angle_pool(rows_a, matrix, p_min);
    let mut b = angle_pool(rows_b, matrix, p_min);
    if a.is_empty() || b.is_empty() {
        return Err(DiagnosticsError::EmptyPool(p_min));
    }
    Ok(stats::ks_two_sample(&mut a, &mut b)?)
}

pub const CROSSOVER_WIDTH: usize = 11;
pub const LANDMARK_PRIMES: [u32; 4] = [5, 37, 251, 1009];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossoverReport {
    pub smoothed: Vec<f64>,
    /// Sign of the first nonzero smoothed value.
    pub initial_sign: i8,
    /// First prime where the smoothed sign flips and stays flipped for the
    /// following window.
    pub crossing_prime: Option<u32>,
    pub landmarks: Vec<(u32, f64)>,
}

/// Centered moving average, truncated at the edges.
pub fn moving_average(xs: &[f64], width: usize) -> Vec<f64> {
    let h = width / 2;
    (0..xs.len())
        .map(|i| {
            let lo = i.saturating_sub(h);
            let hi = (i + h + 1).min(xs.len());
            xs[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

pub fn crossover_scan(diff: &[f64], primes: &[u32], landmarks: &[u32]) -> Result<CrossoverReport, DiagnosticsError> {
    if diff.is_empty() {
        return Err(DiagnosticsError::EmptyProfile);
    }
    if diff.len() != primes.len() {
        return Err(StatsError::LengthMismatch(diff.len(), primes.len()).into());
    }
    let smoothed = moving_average(diff, CROSSOVER_WIDTH);
    let initial_sign = smoothed.iter().map(|&v| sign(v)).find(|&s| s != 0).unwrap_or(0);
    let flipped = |v: f64| initial_sign != 0 && sign(v) == -initial_sign;
    let crossing_prime = (0..smoothed.len())
        .find(|&i| {
            let end = (i + CROSSOVER_WIDTH).min(smoothed.len());
            smoothed[i..end].iter().all(|&v| flipped(v))
        })
        .map(|i| primes[i]);
    let landmarks = landmarks
        .iter()
        .filter_map(|&p| primes.iter().position(|&q| q == p).map(|i| (p, diff[i])))
        .collect();
    Ok(CrossoverReport {
        smoothed,
        initial_sign,
        crossing_prime,
        landmarks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionType {
    Additive,
    SplitMultiplicative,
    NonsplitMultiplicative,
}

impl ReductionType {
    pub fn from_trace(ap: i16) -> Option<Self> {
        match ap {
            0 => Some(ReductionType::Additive),
            1 => Some(ReductionType::SplitMultiplicative),
            -1 => Some(ReductionType::NonsplitMultiplicative),
            _ => None,
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            ReductionType::Additive => "additive",
            ReductionType::SplitMultiplicative => "split_mult",
            ReductionType::NonsplitMultiplicative => "nonsplit_mult",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionEntry {
    pub label: String,
    pub prime: u32,
    pub kind: ReductionType,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionReport {
    pub entries: Vec<ReductionEntry>,
    pub n_curves: usize,
    /// Fraction of curves where "no split multiplicative bad prime" matches ∏c_p = 1.
    pub agreement: f64,
}

impl ReductionReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "label,prime,type")?;
        for e in &self.entries {
            writeln!(w, "{},{},{}", e.label, e.prime, e.kind.id())?;
        }
        Ok(())
    }
}

/// Classify every (curve, bad prime) of the table from its trace.
pub fn classify_reduction(table: &CurveTable, matrix: &TraceMatrix) -> Result<ReductionReport, DiagnosticsError> {
    let primes = matrix.primes().as_slice();
    let mut entries = Vec::new();
    let mut agree = 0usize;
    for r in table.records() {
        let i = matrix
            .row_of(&r.label)
            .ok_or_else(|| ProfileError::UnknownLabel(r.label.clone()))?;
        let mut split = false;
        for (j, &p) in primes.iter().enumerate() {
            if !matrix.is_bad(i, j) {
                continue;
            }
            let ap = matrix.get(i, j);
            let kind = ReductionType::from_trace(ap).ok_or_else(|| DiagnosticsError::BadTrace {
                label: r.label.clone(),
                p,
                ap,
            })?;
            split |= kind == ReductionType::SplitMultiplicative;
            entries.push(ReductionEntry {
                label: r.label.clone(),
                prime: p,
                kind,
            });
        }
        if !split == (r.tamagawa_product == 1) {
            agree += 1;
        }
    }
    Ok(ReductionReport {
        entries,
        n_curves: table.len(),
        agreement: if table.is_empty() { f64::NAN } else { agree as f64 / table.len() as f64 },
    })
}

/// Column sums with bad-prime entries replaced by zero.
fn good_column_sums(rows: &[usize], matrix: &TraceMatrix) -> Vec<i64> {
    let mut out = vec![0i64; matrix.n_primes()];
    for &i in rows {
        for (j, (o, &t)) in out.iter_mut().zip(matrix.row(i)).enumerate() {
            if !matrix.is_bad(i, j) {
                *o += t as i64;
            }
        }
    }
    out
}

fn rms_of_sums(a: &[i64], na: usize, b: &[i64], nb: usize) -> f64 {
    let ss: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 / na as f64 - y as f64 / nb as f64).powi(2))
        .sum();
    (ss / a.len() as f64).sqrt()
}

/// Percentage of the squared profile separation carried by bad-prime entries.
pub fn bad_prime_share(groups: &[Vec<usize>], matrix: &TraceMatrix) -> Result<f64, DiagnosticsError> {
    let [a, b] = groups else {
        return Err(DiagnosticsError::NotTwoGroups);
    };
    if a.is_empty() || b.is_empty() {
        return Err(ProfileError::Empty.into());
    }
    let full = rms_of_sums(
        &profile::column_sums(a, matrix),
        a.len(),
        &profile::column_sums(b, matrix),
        b.len(),
    );
    if full == 0.0 {
        return Err(DiagnosticsError::ZeroRms);
    }
    let masked = rms_of_sums(&good_column_sums(a, matrix), a.len(), &good_column_sums(b, matrix), b.len());
    Ok(100.0 * (1.0 - (masked * masked) / (full * full)))
}
