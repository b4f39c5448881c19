use anyhow::{Context, Result};
use murmur_core::cache;
use murmur_core::primes::PrimeList;
use murmur_core::traces::{build_trace_matrix_by_class, TraceMatrix};
use serde::Serialize;

use crate::config::RunConfig;
use crate::report::Outputs;

#[derive(Serialize)]
struct Summary {
    action: &'static str,
    n_curves: usize,
    n_primes: usize,
    last_prime: Option<u32>,
    curve_digest: String,
    bad_entries: usize,
    /// max |a_p| / 2√p over good entries; ≤ 1 by Hasse.
    max_hasse_ratio: f64,
}

fn summarize(m: &TraceMatrix, action: &'static str) -> Summary {
    let ps = m.primes().as_slice();
    let mut bad = 0;
    let mut worst: f64 = 0.0;
    for i in 0..m.n_curves() {
        for (j, &p) in ps.iter().enumerate() {
            if m.is_bad(i, j) {
                bad += 1;
            } else {
                worst = worst.max(m.get(i, j).unsigned_abs() as f64 / (2.0 * (p as f64).sqrt()));
            }
        }
    }
    Summary {
        action,
        n_curves: m.n_curves(),
        n_primes: m.n_primes(),
        last_prime: ps.last().copied(),
        curve_digest: super::matrix_digest(m),
        bad_entries: bad,
        max_hasse_ratio: worst,
    }
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    let table = super::load_table(cfg)?;
    let path = cfg.cache_path()?;
    let summary = if path.exists() && !cfg.rebuild {
        let m = super::load_matrix(cfg, &table)?;
        summarize(&m, "verified")
    } else {
        let m = build_trace_matrix_by_class(&table, &PrimeList::first(cfg.primes)).context("building trace matrix")?;
        cache::persist_trace_matrix(&m, path).with_context(|| format!("writing {}", path.display()))?;
        summarize(&m, "built")
    };
    Outputs::new(&cfg.out, cfg.svg)?.report("traces", cfg, summary)?;
    Ok(())
}
