//! Per-prime mean traces ("murmuration profiles") over curve subsets.

use serde::Serialize;
use thiserror::Error;

use crate::primes::PrimeList;
use crate::traces::TraceMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("empty curve subset")]
    Empty,
    #[error("curve `{0}` not in trace matrix")]
    UnknownLabel(String),
    #[error("profiles use different prime lists")]
    PrimeMismatch,
}

/// Whether bad-prime entries enter the mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimeScope {
    #[default]
    All,
    GoodOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MurmurationProfile {
    pub primes: PrimeList,
    pub mean_ap: Vec<f64>,
    pub n_curves: usize,
}

/// Integer column sums of a_p over `rows`.
pub fn column_sums(rows: &[usize], matrix: &TraceMatrix) -> Vec<i64> {
    let k = matrix.n_primes();
    let mut acc = vec![0i32; k];
    let mut out = vec![0i64; k];
    // i32 partial sums overflow only past ~1.7e7 rows of |a_p| ≤ 120.
    for chunk in rows.chunks(1 << 16) {
        for &i in chunk {
            for (a, &t) in acc.iter_mut().zip(matrix.row(i)) {
                *a += t as i32;
            }
        }
        for (o, a) in out.iter_mut().zip(acc.iter_mut()) {
            *o += *a as i64;
            *a = 0;
        }
    }
    out
}

pub fn murmuration_profile(
    rows: &[usize],
    matrix: &TraceMatrix,
    scope: PrimeScope,
) -> Result<MurmurationProfile, ProfileError> {
    if rows.is_empty() {
        return Err(ProfileError::Empty);
    }
    let mean_ap = match scope {
        PrimeScope::All => column_sums(rows, matrix)
            .into_iter()
            .map(|s| s as f64 / rows.len() as f64)
            .collect(),
        PrimeScope::GoodOnly => {
            let k = matrix.n_primes();
            let mut sums = vec![0i64; k];
            let mut counts = vec![0usize; k];
            for &i in rows {
                for j in 0..k {
                    if !matrix.is_bad(i, j) {
                        sums[j] += matrix.get(i, j) as i64;
                        counts[j] += 1;
                    }
                }
            }
            sums.iter()
                .zip(&counts)
                .map(|(&s, &c)| if c == 0 { 0.0 } else { s as f64 / c as f64 })
                .collect()
        }
    };
    Ok(MurmurationProfile {
        primes: matrix.primes().clone(),
        mean_ap,
        n_curves: rows.len(),
    })
}

/// Matrix rows for a list of labels.
pub fn rows_for_labels<S: AsRef<str>>(labels: &[S], matrix: &TraceMatrix) -> Result<Vec<usize>, ProfileError> {
    labels
        .iter()
        .map(|l| {
            matrix
                .row_of(l.as_ref())
                .ok_or_else(|| ProfileError::UnknownLabel(l.as_ref().to_string()))
        })
        .collect()
}

pub fn profile_for_labels<S: AsRef<str>>(
    labels: &[S],
    matrix: &TraceMatrix,
) -> Result<MurmurationProfile, ProfileError> {
    murmuration_profile(&rows_for_labels(labels, matrix)?, matrix, PrimeScope::All)
}

/// Pointwise a − b.
pub fn difference(a: &MurmurationProfile, b: &MurmurationProfile) -> Result<Vec<f64>, ProfileError> {
    if a.primes != b.primes {
        return Err(ProfileError::PrimeMismatch);
    }
    Ok(a.mean_ap.iter().zip(&b.mean_ap).map(|(x, y)| x - y).collect())
}
