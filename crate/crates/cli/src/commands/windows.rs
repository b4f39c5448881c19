use anyhow::Result;
use murmur_core::profile::{self, PrimeScope};
use murmur_core::savgol::{self, Residuals};
use murmur_core::spectral::{self, WelchParams};
use murmur_core::stats;
use murmur_core::windows::{sliding_window_series, Invariant, WindowSeries};
use serde::Serialize;

use crate::config::RunConfig;
use crate::report::{Cell, Outputs};

const SG_WINDOW: usize = 101;
const SG_DEGREE: usize = 3;
const MAX_LAG: usize = 20;

#[derive(Serialize)]
struct InvariantResult {
    invariant: &'static str,
    n_centers: usize,
    residual_points: usize,
    /// Rank-0 vs rank-1 detrended residual correlation.
    correlation: Option<f64>,
    xcorr_peak_lag: Option<i64>,
    xcorr_peak: Option<f64>,
    psd_peak_freq: Option<(f64, f64)>,
    notes: Vec<String>,
}

#[derive(Serialize)]
struct RankProfiles {
    range: (u64, u64),
    n_rank0: usize,
    n_rank1: usize,
    correlation: f64,
}

#[derive(Serialize)]
struct Summary {
    window: f64,
    step: f64,
    invariants: Vec<InvariantResult>,
    /// Every computed rank-0/rank-1 residual correlation is positive.
    all_positive: bool,
    profiles: Option<RankProfiles>,
}

fn series_cells(s: &WindowSeries) -> impl Iterator<Item = Cell> + '_ {
    s.values.iter().map(|v| Cell::from(*v))
}

fn analyse(inv: Invariant, s0: &WindowSeries, s1: &WindowSeries, out: &mut Outputs) -> Result<InvariantResult> {
    let mut res = InvariantResult {
        invariant: inv.id(),
        n_centers: s0.centers.len(),
        residual_points: 0,
        correlation: None,
        xcorr_peak_lag: None,
        xcorr_peak: None,
        psd_peak_freq: None,
        notes: Vec::new(),
    };
    let rows = s0
        .centers
        .iter()
        .zip(series_cells(s0).zip(series_cells(s1)))
        .zip(s0.counts.iter().zip(&s1.counts))
        .map(|((&c, (a, b)), (&n0, &n1))| vec![c.into(), a, b, n0.into(), n1.into()])
        .collect();
    out.table(
        &format!("window_{}", inv.id()),
        &["center", "rank0", "rank1", "count0", "count1"],
        rows,
    )?;
    let detrended = |s: &WindowSeries| savgol::savgol_detrend(s, SG_WINDOW, SG_DEGREE);
    let (r0, r1): (Residuals, Residuals) = match (detrended(s0), detrended(s1)) {
        (Ok(a), Ok(b)) => (a, b),
        (a, b) => {
            for e in [a.err(), b.err()].into_iter().flatten() {
                res.notes.push(format!("detrend: {e}"));
            }
            return Ok(res);
        }
    };
    let (a, b) = savgol::align(&r0, &r1);
    res.residual_points = a.len();
    out.table(
        &format!("residual_{}", inv.id()),
        &["center", "rank0", "rank1"],
        r0.centers.iter().zip(&a).zip(&b).map(|((&c, &x), &y)| vec![c.into(), x.into(), y.into()]).collect(),
    )?;
    match stats::pearson(&a, &b) {
        Ok(r) => res.correlation = Some(r),
        Err(e) => res.notes.push(format!("correlation: {e}")),
    }
    match spectral::cross_correlation(&a, &b, MAX_LAG.min(a.len().saturating_sub(3))) {
        Ok(xc) => {
            if let Some((lag, v)) = spectral::peak_lag(&xc) {
                res.xcorr_peak_lag = Some(lag);
                res.xcorr_peak = Some(v);
            }
        }
        Err(e) => res.notes.push(format!("cross-correlation: {e}")),
    }
    match (spectral::welch_psd(&a, WelchParams::default()), spectral::welch_psd(&b, WelchParams::default())) {
        (Ok(p0), Ok(p1)) => {
            res.psd_peak_freq = Some((p0.freqs[p0.peak_bin()], p1.freqs[p1.peak_bin()]));
            out.table(
                &format!("psd_{}", inv.id()),
                &["freq", "rank0", "rank1"],
                (0..p0.freqs.len())
                    .map(|i| vec![p0.freqs[i].into(), p0.power[i].into(), p1.power[i].into()])
                    .collect(),
            )?;
        }
        (Err(e), _) | (_, Err(e)) => res.notes.push(format!("spectrum: {e}")),
    }
    Ok(res)
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    let table = super::load_table(cfg)?;
    let mut out = Outputs::new(&cfg.out, cfg.svg)?;
    let mut invariants = Vec::new();
    for inv in Invariant::PART_ONE {
        let s0 = sliding_window_series(&table, inv, 0, cfg.window, cfg.step)?;
        let s1 = sliding_window_series(&table, inv, 1, cfg.window, cfg.step)?;
        invariants.push(analyse(inv, &s0, &s1, &mut out)?);
    }
    let corrs: Vec<f64> = invariants.iter().filter_map(|r| r.correlation).collect();
    let profiles = match &cfg.cache {
        Some(_) => {
            let m = super::load_matrix(cfg, &table)?;
            let sub = super::in_range(&table, cfg);
            let rows = |rank: u8| -> Vec<usize> {
                sub.records()
                    .iter()
                    .filter(|r| r.rank == rank)
                    .filter_map(|r| m.row_of(&r.label))
                    .collect()
            };
            let (rows0, rows1) = (rows(0), rows(1));
            let p0 = profile::murmuration_profile(&rows0, &m, PrimeScope::All)?;
            let p1 = profile::murmuration_profile(&rows1, &m, PrimeScope::All)?;
            out.table("profile_rank", &["p", "rank0", "rank1"], super::profile_rows(&[p0.clone(), p1.clone()]))?;
            Some(RankProfiles {
                range: cfg.range,
                n_rank0: rows0.len(),
                n_rank1: rows1.len(),
                correlation: stats::pearson(&p0.mean_ap, &p1.mean_ap)?,
            })
        }
        None => None,
    };
    let summary = Summary {
        window: cfg.window,
        step: cfg.step,
        all_positive: !corrs.is_empty() && corrs.iter().all(|&r| r > 0.0),
        invariants,
        profiles,
    };
    out.report("windows", cfg, summary)?;
    Ok(())
}
