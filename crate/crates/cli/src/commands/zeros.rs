use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;

use anyhow::{bail, Context, Result};
use murmur_core::confound;
use murmur_core::curves::{CurveRecord, CurveTable};
use murmur_core::exec;
use murmur_core::lfunc::{self, LSeries, ZeroSet};
use murmur_core::profile::{self, PrimeScope};
use murmur_core::stratify::{self, StratRule};
use murmur_core::zerostats::{self, DensityComparison, ExplicitComparison, Hotelling, ZeroTTest};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::report::{Cell, Outputs};

pub const K_ZEROS: usize = 5;

#[derive(Serialize)]
struct Failure {
    label: String,
    error: String,
}

#[derive(Serialize)]
struct Summary {
    band: (f64, f64),
    source: &'static str,
    /// Complete zero sets per group (|Sha| = 1, |Sha| ≥ 4).
    n_complete: (usize, usize),
    n_incomplete: usize,
    failures: Vec<Failure>,
    mean_gammas_sha1: Vec<f64>,
    mean_gammas_sha4: Vec<f64>,
    t_tests: Vec<ZeroTTest>,
    hotelling: Option<Hotelling>,
    density: Option<DensityComparison>,
    explicit: Option<ExplicitComparison>,
    notes: Vec<String>,
}

fn compute(records: &[&CurveRecord], t_max: f64) -> Vec<Result<ZeroSet, Failure>> {
    exec::map_range(records.len(), |i| {
        let r = records[i];
        LSeries::for_record(r, t_max)
            .and_then(|s| lfunc::locate_zeros(&s, K_ZEROS, t_max))
            .map_err(|e| Failure {
                label: r.label.clone(),
                error: e.to_string(),
            })
    })
}

fn sample<'a>(table: &'a CurveTable, members: &[usize], n: usize, rng: &mut ChaCha8Rng) -> Vec<&'a CurveRecord> {
    let mut idx = rand::seq::index::sample(rng, members.len(), n.min(members.len())).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| &table.records()[members[i]]).collect()
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    let table = super::load_table(cfg)?;
    let rank0 = super::in_range(&table, cfg).filter(|r| r.rank == 0);
    let band = cfg.band.unwrap_or(super::confound::DEFAULT_BAND);
    let banded = confound::lvalue_band(&rank0, band.0, band.1)?;
    let part = stratify::partition(&banded, &StratRule::sha())?;
    let mut out = Outputs::new(&cfg.out, cfg.svg)?;
    let mut notes = Vec::new();

    let mut failures = Vec::new();
    let (sets1, sets4, source) = match &cfg.zeros {
        Some(path) => {
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let all = lfunc::read_zero_sets(BufReader::new(f))?;
            let banded = &banded;
            let group: HashMap<&str, usize> = part
                .members
                .iter()
                .enumerate()
                .flat_map(|(g, ms)| ms.iter().map(move |&i| (banded.records()[i].label.as_str(), g)))
                .collect();
            let (mut a, mut b) = (Vec::new(), Vec::new());
            let mut outside = 0;
            for z in all {
                match group.get(z.label.as_str()) {
                    Some(0) => a.push(z),
                    Some(_) => b.push(z),
                    None => outside += 1,
                }
            }
            if outside > 0 {
                notes.push(format!("{outside} imported zero sets are outside both groups"));
            }
            (a, b, "imported")
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut run_group = |g: usize| -> Vec<ZeroSet> {
                let picks = sample(&banded, &part.members[g], cfg.sample, &mut rng);
                compute(&picks, cfg.t_max)
                    .into_iter()
                    .filter_map(|r| r.map_err(|f| failures.push(f)).ok())
                    .collect()
            };
            let a = run_group(0);
            let b = run_group(1);
            let all: Vec<ZeroSet> = a.iter().chain(&b).cloned().collect();
            lfunc::write_zero_sets(&all, out.writer("zeros.csv")?)?;
            (a, b, "computed")
        }
    };

    let n_incomplete = sets1.iter().chain(&sets4).filter(|z| !z.complete).count();
    let c1: Vec<ZeroSet> = sets1.into_iter().filter(|z| z.complete && z.gammas.len() >= K_ZEROS).collect();
    let c4: Vec<ZeroSet> = sets4.into_iter().filter(|z| z.complete && z.gammas.len() >= K_ZEROS).collect();
    if c1.is_empty() || c4.is_empty() {
        bail!("no complete zero sets in one of the groups ({} / {})", c1.len(), c4.len());
    }
    let mean1 = zerostats::mean_gammas(&c1, K_ZEROS)?;
    let mean4 = zerostats::mean_gammas(&c4, K_ZEROS)?;
    let t_tests = zerostats::zero_t_tests(&c1, &c4, K_ZEROS).unwrap_or_default();
    let hotelling = match zerostats::hotelling_t2(&c1, &c4, K_ZEROS) {
        Ok(h) => Some(h),
        Err(e) => {
            notes.push(format!("hotelling: {e}"));
            None
        }
    };
    let conductor = |sets: &[ZeroSet]| -> Result<Vec<u64>> {
        sets.iter()
            .map(|z| {
                table
                    .get(&z.label)
                    .map(|r| r.conductor)
                    .with_context(|| format!("zero set label {} not in curves", z.label))
            })
            .collect()
    };
    let density = match zerostats::compare_densities(&c1, &conductor(&c1)?, &c4, &conductor(&c4)?) {
        Ok(d) => {
            out.table(
                "density",
                &["x", "sha1", "sha4", "w1_so_even"],
                (0..d.a.density.len())
                    .map(|i| {
                        let x = 0.5 * (d.a.edges[i] + d.a.edges[i + 1]);
                        vec![x.into(), d.a.density[i].into(), d.b.density[i].into(), zerostats::w1_so_even(x).into()]
                    })
                    .collect(),
            )?;
            Some(d)
        }
        Err(e) => {
            notes.push(format!("density: {e}"));
            None
        }
    };

    let explicit = if cfg.cache.is_some() {
        let m = super::load_matrix(cfg, &table)?;
        let rows = part.rows(&banded, &m)?;
        let p1 = profile::murmuration_profile(&rows[0], &m, PrimeScope::All)?;
        let p4 = profile::murmuration_profile(&rows[1], &m, PrimeScope::All)?;
        let observed: Vec<f64> = p4.mean_ap.iter().zip(&p1.mean_ap).map(|(a, b)| a - b).collect();
        let primes = m.primes().as_slice();
        let predicted = zerostats::explicit_predict(&mean4, &mean1, primes)?;
        out.table(
            "explicit",
            &["p", "predicted", "observed"],
            (0..primes.len())
                .map(|j| vec![Cell::from(primes[j]), predicted[j].into(), observed[j].into()])
                .collect(),
        )?;
        Some(zerostats::compare_explicit(&predicted, &observed)?)
    } else {
        notes.push("no trace cache: explicit-formula comparison skipped".into());
        None
    };

    let summary = Summary {
        band,
        source,
        n_complete: (c1.len(), c4.len()),
        n_incomplete,
        failures,
        mean_gammas_sha1: mean1,
        mean_gammas_sha4: mean4,
        t_tests,
        hotelling,
        density,
        explicit,
        notes,
    };
    out.report("zeros", cfg, summary)?;
    Ok(())
}
