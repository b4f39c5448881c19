//! Subcommand implementations.

pub mod confound;
pub mod diagnose;
pub mod ingest;
pub mod report;
pub mod stratify;
pub mod traces;
pub mod windows;
pub mod zeros;

use std::fs::File;
use std::io::BufReader;

use anyhow::{bail, Context, Result};
use murmur_core::cache;
use murmur_core::curves::{parse_curve_table, CurveFormat, CurveTable, Ingest};
use murmur_core::profile::MurmurationProfile;
use murmur_core::stratify::Partition;
use murmur_core::traces::TraceMatrix;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::report::Cell;

pub fn ingest(cfg: &RunConfig) -> Result<Ingest> {
    let path = cfg.curves_path()?;
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    parse_curve_table(BufReader::with_capacity(1 << 20, f), CurveFormat::CanonicalCsv)
        .with_context(|| format!("parsing {}", path.display()))
}

pub fn load_table(cfg: &RunConfig) -> Result<CurveTable> {
    Ok(ingest(cfg)?.table)
}

/// Digest of the ordered label list; ties a cache to the table it was built from.
pub fn label_digest<'a>(labels: impl IntoIterator<Item = &'a str>) -> String {
    let mut h = Sha256::new();
    for l in labels {
        h.update(l.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

pub fn table_digest(table: &CurveTable) -> String {
    label_digest(table.records().iter().map(|r| r.label.as_str()))
}

pub fn matrix_digest(m: &TraceMatrix) -> String {
    label_digest(m.labels().iter().map(String::as_str))
}

/// Load the trace cache and refuse it unless it was built from exactly `table`.
pub fn load_matrix(cfg: &RunConfig, table: &CurveTable) -> Result<TraceMatrix> {
    let path = cfg.cache_path()?;
    let m = cache::load_trace_matrix(path).with_context(|| format!("loading trace cache {}", path.display()))?;
    check_coherent(&m, table, cfg)?;
    Ok(m)
}

pub fn check_coherent(m: &TraceMatrix, table: &CurveTable, cfg: &RunConfig) -> Result<()> {
    let (have, want) = (matrix_digest(m), table_digest(table));
    if have != want {
        bail!(
            "trace cache does not match the curves table (cache curve digest {have}, table {want}); rebuild with `murmur traces --rebuild`"
        );
    }
    if m.n_primes() != cfg.primes {
        bail!("trace cache has {} primes, config asks for {}", m.n_primes(), cfg.primes);
    }
    Ok(())
}

pub fn in_range(table: &CurveTable, cfg: &RunConfig) -> CurveTable {
    let (lo, hi) = cfg.range;
    table.filter(|r| r.conductor >= lo && r.conductor <= hi)
}

/// Per-prime table with one mean column per group.
pub fn profile_rows(profiles: &[MurmurationProfile]) -> Vec<Vec<Cell>> {
    let primes = profiles[0].primes.as_slice();
    (0..primes.len())
        .map(|j| {
            let mut row: Vec<Cell> = vec![primes[j].into()];
            row.extend(profiles.iter().map(|p| Cell::from(p.mean_ap[j])));
            row
        })
        .collect()
}

pub fn group_header(part: &Partition) -> Vec<&str> {
    std::iter::once("p").chain(part.names.iter().map(String::as_str)).collect()
}
