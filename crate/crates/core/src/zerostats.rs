//! Statistics over families of low-lying zeros: Hotelling's T², the scaled
//! one-level density against SO(even), and the explicit-formula predictor.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};
use thiserror::Error;

use crate::lfunc::ZeroSet;
use crate::stats::{self, KsResult, StatsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZeroStatsError {
    #[error("zero set `{0}` is incomplete")]
    Incomplete(String),
    #[error("zero sets have differing lengths")]
    Ragged,
    #[error("group sizes {n1}, {n2} too small for {k} zeros")]
    TooFew { n1: usize, n2: usize, k: usize },
    #[error("pooled covariance is singular")]
    Singular,
    #[error("empty prime list")]
    NoPrimes,
    #[error("{0} zero sets but {1} conductors")]
    ConductorCount(usize, usize),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

fn as_matrix(sets: &[ZeroSet], k: usize) -> Result<Vec<Vec<f64>>, ZeroStatsError> {
    sets.iter()
        .map(|z| {
            if !z.complete {
                return Err(ZeroStatsError::Incomplete(z.label.clone()));
            }
            if z.gammas.len() < k {
                return Err(ZeroStatsError::Ragged);
            }
            Ok(z.gammas[..k].to_vec())
        })
        .collect()
}

/// Column means of complete zero sets.
pub fn mean_gammas(sets: &[ZeroSet], k: usize) -> Result<Vec<f64>, ZeroStatsError> {
    let rows = as_matrix(sets, k)?;
    Ok((0..k)
        .map(|j| stats::mean(&rows.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hotelling {
    pub t2: f64,
    pub f: f64,
    pub df1: f64,
    pub df2: f64,
    pub p_value: f64,
}

/// F conversion and upper-tail p for a given T².
pub fn hotelling_from_t2(t2: f64, k: usize, n1: usize, n2: usize) -> Hotelling {
    let n = (n1 + n2) as f64;
    let k_f = k as f64;
    let df2 = n - k_f - 1.0;
    let f = df2 / (k_f * (n - 2.0)) * t2;
    let dist = FisherSnedecor::new(k_f, df2).expect("positive degrees of freedom");
    Hotelling {
        t2,
        f,
        df1: k_f,
        df2,
        p_value: if f <= 0.0 { 1.0 } else { dist.sf(f) },
    }
}

/// Two-sample Hotelling T² with pooled covariance on row vectors.
pub fn hotelling_t2_rows(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Hotelling, ZeroStatsError> {
    let k = a.first().map(Vec::len).unwrap_or(0);
    let (n1, n2) = (a.len(), b.len());
    if k == 0 || n1 <= k + 1 || n2 <= k + 1 {
        return Err(ZeroStatsError::TooFew { n1, n2, k });
    }
    if a.iter().chain(b).any(|r| r.len() != k) {
        return Err(ZeroStatsError::Ragged);
    }
    let to_m = |rows: &[Vec<f64>]| DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]);
    let (ma, mb) = (to_m(a), to_m(b));
    let mean_a = ma.row_mean().transpose();
    let mean_b = mb.row_mean().transpose();
    let scatter = |m: &DMatrix<f64>, mean: &DVector<f64>| {
        let mut c = m.clone();
        for mut row in c.row_iter_mut() {
            row -= mean.transpose();
        }
        c.transpose() * c
    };
    let pooled = (scatter(&ma, &mean_a) + scatter(&mb, &mean_b)) / (n1 + n2 - 2) as f64;
    let d = mean_a - mean_b;
    let chol = pooled.clone().cholesky().ok_or(ZeroStatsError::Singular)?;
    let scale = pooled.diagonal().max();
    if chol.l().diagonal().iter().any(|&l| l * l <= 1e-12 * scale) {
        return Err(ZeroStatsError::Singular);
    }
    let q = d.dot(&chol.solve(&d));
    let t2 = (n1 * n2) as f64 / (n1 + n2) as f64 * q;
    Ok(hotelling_from_t2(t2, k, n1, n2))
}

pub fn hotelling_t2(a: &[ZeroSet], b: &[ZeroSet], k: usize) -> Result<Hotelling, ZeroStatsError> {
    hotelling_t2_rows(&as_matrix(a, k)?, &as_matrix(b, k)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZeroTTest {
    pub mean_a: f64,
    pub mean_b: f64,
    pub diff: f64,
    pub t: f64,
    pub p_value: f64,
}

/// Per-ordinate Welch t-tests; `diff` and `t` are B − A and A − B as in the
/// usual table layout.
pub fn zero_t_tests(a: &[ZeroSet], b: &[ZeroSet], k: usize) -> Result<Vec<ZeroTTest>, ZeroStatsError> {
    let (ra, rb) = (as_matrix(a, k)?, as_matrix(b, k)?);
    if ra.len() < 2 || rb.len() < 2 {
        return Err(ZeroStatsError::TooFew { n1: ra.len(), n2: rb.len(), k });
    }
    Ok((0..k)
        .map(|j| {
            let xa: Vec<f64> = ra.iter().map(|r| r[j]).collect();
            let xb: Vec<f64> = rb.iter().map(|r| r[j]).collect();
            let (ma, mb) = (stats::mean(&xa), stats::mean(&xb));
            let (va, vb) = (
                stats::sample_variance(&xa) / xa.len() as f64,
                stats::sample_variance(&xb) / xb.len() as f64,
            );
            let se = (va + vb).sqrt();
            let t = (ma - mb) / se;
            let df = (va + vb).powi(2) / (va * va / (xa.len() - 1) as f64 + vb * vb / (xb.len() - 1) as f64);
            let p = StudentsT::new(0.0, 1.0, df)
                .map(|d| 2.0 * d.sf(t.abs()))
                .unwrap_or(f64::NAN);
            ZeroTTest {
                mean_a: ma,
                mean_b: mb,
                diff: mb - ma,
                t,
                p_value: p,
            }
        })
        .collect())
}

/// SO(even) one-level density 1 + sin(2πx)/(2πx).
pub fn w1_so_even(x: f64) -> f64 {
    let y = 2.0 * PI * x;
    if y.abs() < 1e-8 {
        2.0 - y * y / 6.0
    } else {
        1.0 + y.sin() / y
    }
}

pub const DENSITY_BIN: f64 = 0.1;
pub const DENSITY_MAX: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityHistogram {
    pub edges: Vec<f64>,
    /// Probability density per bin (mass in [0, 4] normalized to 1).
    pub density: Vec<f64>,
    pub n_in_range: usize,
    pub n_outside: usize,
    /// Trapezoid integral over bin centers of (density − W₁)².
    pub deviation: f64,
}

impl DensityHistogram {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x_lo,x_hi,density,w1_so_even")?;
        for (i, d) in self.density.iter().enumerate() {
            let c = 0.5 * (self.edges[i] + self.edges[i + 1]);
            writeln!(w, "{},{},{},{}", self.edges[i], self.edges[i + 1], d, w1_so_even(c))?;
        }
        Ok(())
    }
}

/// γ · log N / 2π for every ordinate (or the first `only_first` of each set).
pub fn scaled_zeros(sets: &[ZeroSet], conductors: &[u64], only_first: Option<usize>) -> Result<Vec<f64>, ZeroStatsError> {
    if sets.len() != conductors.len() {
        return Err(ZeroStatsError::ConductorCount(sets.len(), conductors.len()));
    }
    Ok(sets
        .iter()
        .zip(conductors)
        .flat_map(|(z, &n)| {
            let scale = (n as f64).ln() / (2.0 * PI);
            let take = only_first.unwrap_or(z.gammas.len()).min(z.gammas.len());
            z.gammas[..take].iter().map(move |g| g * scale)
        })
        .collect())
}

pub fn density_histogram(scaled: &[f64]) -> DensityHistogram {
    let n_bins = (DENSITY_MAX / DENSITY_BIN).round() as usize;
    let edges: Vec<f64> = (0..=n_bins).map(|i| i as f64 * DENSITY_BIN).collect();
    let mut counts = vec![0usize; n_bins];
    let mut outside = 0;
    for &x in scaled {
        if !(0.0..=DENSITY_MAX).contains(&x) {
            outside += 1;
            continue;
        }
        let b = ((x / DENSITY_BIN) as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    let inside: usize = counts.iter().sum();
    let density: Vec<f64> = counts
        .iter()
        .map(|&c| if inside == 0 { 0.0 } else { c as f64 / (inside as f64 * DENSITY_BIN) })
        .collect();
    let sq: Vec<f64> = density
        .iter()
        .enumerate()
        .map(|(i, d)| (d - w1_so_even((i as f64 + 0.5) * DENSITY_BIN)).powi(2))
        .collect();
    let deviation = sq.windows(2).map(|w| 0.5 * (w[0] + w[1]) * DENSITY_BIN).sum();
    DensityHistogram {
        edges,
        density,
        n_in_range: inside,
        n_outside: outside,
        deviation,
    }
}

pub fn one_level_density(sets: &[ZeroSet], conductors: &[u64]) -> Result<DensityHistogram, ZeroStatsError> {
    Ok(density_histogram(&scaled_zeros(sets, conductors, None)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityComparison {
    pub a: DensityHistogram,
    pub b: DensityHistogram,
    pub ks_all: KsResult,
    pub ks_first: KsResult,
}

pub fn compare_densities(
    a: &[ZeroSet],
    conductors_a: &[u64],
    b: &[ZeroSet],
    conductors_b: &[u64],
) -> Result<DensityComparison, ZeroStatsError> {
    let mut all_a = scaled_zeros(a, conductors_a, None)?;
    let mut all_b = scaled_zeros(b, conductors_b, None)?;
    let mut first_a = scaled_zeros(a, conductors_a, Some(1))?;
    let mut first_b = scaled_zeros(b, conductors_b, Some(1))?;
    Ok(DensityComparison {
        a: density_histogram(&all_a),
        b: density_histogram(&all_b),
        ks_all: stats::ks_two_sample(&mut all_a, &mut all_b)?,
        ks_first: stats::ks_two_sample(&mut first_a, &mut first_b)?,
    })
}

/// Per-prime explicit-formula contribution −(2√p / log p) Σ_j cos(γ_j log p).
pub fn explicit_contribution(gammas: &[f64], primes: &[u32]) -> Vec<f64> {
    primes
        .iter()
        .map(|&p| {
            let lp = (p as f64).ln();
            -(2.0 * (p as f64).sqrt() / lp) * gammas.iter().map(|g| (g * lp).cos()).sum::<f64>()
        })
        .collect()
}

/// Predicted difference profile c_p(A) − c_p(B).
pub fn explicit_predict(gammas_a: &[f64], gammas_b: &[f64], primes: &[u32]) -> Result<Vec<f64>, ZeroStatsError> {
    if primes.is_empty() {
        return Err(ZeroStatsError::NoPrimes);
    }
    if gammas_a.len() != gammas_b.len() {
        return Err(ZeroStatsError::Ragged);
    }
    let a = explicit_contribution(gammas_a, primes);
    let b = explicit_contribution(gammas_b, primes);
    Ok(a.iter().zip(&b).map(|(x, y)| x - y).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExplicitComparison {
    pub r: f64,
    pub rms_pred: f64,
    pub rms_obs: f64,
}

fn rms(xs: &[f64]) -> f64 {
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}

pub fn compare_explicit(predicted: &[f64], observed: &[f64]) -> Result<ExplicitComparison, ZeroStatsError> {
    Ok(ExplicitComparison {
        r: stats::pearson(predicted, observed)?,
        rms_pred: rms(predicted),
        rms_obs: rms(observed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zs(label: &str, g: &[f64]) -> ZeroSet {
        ZeroSet {
            label: label.into(),
            gammas: g.to_vec(),
            k: g.len(),
            t_max: 10.0,
            complete: true,
        }
    }

    #[test]
    fn table_conversion() {
        let h = hotelling_from_t2(47.8, 5, 1000, 1000);
        assert_eq!(h.df2, 1994.0);
        assert!((h.f - 9.541).abs() < 1e-3);
        let lo = hotelling_from_t2(47.75, 5, 1000, 1000);
        assert!((lo.f - 9.53).abs() < 1e-3);
    }

    #[test]
    fn identical_groups_give_zero() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i % 7) as f64]).collect();
        let h = hotelling_t2_rows(&rows, &rows).unwrap();
        assert!(h.t2.abs() < 1e-12);
        assert_eq!(h.p_value, 1.0);
    }

    #[test]
    fn one_dimensional_t2_is_t_squared() {
        let a: Vec<Vec<f64>> = [1.0, 2.0, 4.0, 3.5, 2.2].iter().map(|&x| vec![x]).collect();
        let b: Vec<Vec<f64>> = [0.5, 1.0, 1.7, 0.2].iter().map(|&x| vec![x]).collect();
        let h = hotelling_t2_rows(&a, &b).unwrap();
        // pooled two-sample t: t² by hand
        let xa: Vec<f64> = a.iter().map(|r| r[0]).collect();
        let xb: Vec<f64> = b.iter().map(|r| r[0]).collect();
        let sp = (4.0 * stats::sample_variance(&xa) + 3.0 * stats::sample_variance(&xb)) / 7.0;
        let t = (stats::mean(&xa) - stats::mean(&xb)) / (sp * (1.0 / 5.0 + 1.0 / 4.0)).sqrt();
        assert!((h.t2 - t * t).abs() < 1e-10);
        assert!((h.f - h.t2).abs() < 1e-12);
    }

    #[test]
    fn singular_and_small() {
        let a: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        assert_eq!(hotelling_t2_rows(&a, &a), Err(ZeroStatsError::Singular));
        assert!(matches!(hotelling_t2_rows(&a[..2], &a), Err(ZeroStatsError::TooFew { .. })));
    }

    #[test]
    fn w1_limits() {
        assert!((w1_so_even(0.0) - 2.0).abs() < 1e-15);
        assert!((w1_so_even(0.5) - 1.0).abs() < 1e-15);
        assert!((w1_so_even(1e-9) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_set_fills_one_bin() {
        let n = 1000u64;
        let g = 0.25 * 2.0 * PI / (n as f64).ln();
        let h = one_level_density(&[zs("a", &[g])], &[n]).unwrap();
        let mass: f64 = h.density.iter().map(|d| d * DENSITY_BIN).sum();
        assert!((mass - 1.0).abs() < 1e-12);
        assert_eq!(h.density.iter().filter(|&&d| d > 0.0).count(), 1);
        assert!(h.density[2] > 0.0);
    }

    #[test]
    fn explicit_identical_is_zero() {
        let p = [2, 3, 5, 7];
        let d = explicit_predict(&[1.0, 2.0], &[1.0, 2.0], &p).unwrap();
        assert!(d.iter().all(|&x| x == 0.0));
        assert_eq!(explicit_predict(&[1.0], &[1.0], &[]), Err(ZeroStatsError::NoPrimes));
    }

    #[test]
    fn raised_first_zero_in_b_lowers_small_prime_delta() {
        // While γ log p < π the cosine falls with γ, so c_B > c_A.
        let primes = crate::primes::primes_up_to(200);
        let d = explicit_predict(&[0.6], &[0.7], &primes).unwrap();
        for (&p, &v) in primes.iter().zip(&d) {
            let phase = 0.65 * (p as f64).ln();
            if phase < 0.9 * PI / 2.0 {
                assert!(v < 0.0, "p={p}");
            }
        }
    }
}
