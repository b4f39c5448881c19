use anyhow::Result;
use murmur_core::curves::{dedupe_isogeny, validate_bsd_residual, RowError};
use serde::Serialize;

use crate::config::RunConfig;
use crate::report::Outputs;

#[derive(Serialize)]
struct Summary {
    n_curves: usize,
    n_rejected: usize,
    rejected: Vec<Rejected>,
    conductor_min: Option<u64>,
    conductor_max: Option<u64>,
    rank_histogram: [usize; 5],
    isogeny_classes: usize,
    curves_per_class: Option<f64>,
    /// Rank-0 curves whose BSD residual exceeds 1e-3.
    bsd_inconsistent: usize,
    curve_digest: String,
}

#[derive(Serialize)]
struct Rejected {
    line: u64,
    label: Option<String>,
    reason: String,
}

impl From<&RowError> for Rejected {
    fn from(e: &RowError) -> Self {
        Self {
            line: e.line,
            label: e.label.clone(),
            reason: e.reason.clone(),
        }
    }
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    let ing = super::ingest(cfg)?;
    let t = &ing.table;
    let (_, dedupe) = dedupe_isogeny(t);
    let bsd_inconsistent = t
        .records()
        .iter()
        .filter(|r| r.rank == 0)
        .filter(|r| validate_bsd_residual(r).map_or(true, |res| res > 1e-3))
        .count();
    let summary = Summary {
        n_curves: t.len(),
        n_rejected: ing.rejected.len(),
        rejected: ing.rejected.iter().map(Rejected::from).collect(),
        conductor_min: t.records().first().map(|r| r.conductor),
        conductor_max: t.records().last().map(|r| r.conductor),
        rank_histogram: t.rank_histogram(),
        isogeny_classes: dedupe.retained,
        curves_per_class: (dedupe.retained > 0).then(|| 1.0 / dedupe.ratio()),
        bsd_inconsistent,
        curve_digest: super::table_digest(t),
    };
    let out = Outputs::new(&cfg.out, cfg.svg)?;
    out.report("ingest", cfg, summary)?;
    Ok(())
}
