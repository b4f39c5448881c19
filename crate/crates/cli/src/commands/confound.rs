use anyhow::{anyhow, Result};
use murmur_core::confound::{self, GroupBsd, MatchKey, MatchedControl, OmegaControl, TripleControl};
use murmur_core::curves::{CurveRecord, CurveTable};
use murmur_core::profile::{self, PrimeScope};
use murmur_core::stratify::{self, StratReport, StratRule};
use murmur_core::traces::TraceMatrix;
use murmur_core::windows::Invariant;
use serde::Serialize;

use super::stratify::ALPHA;
use crate::config::RunConfig;
use crate::report::{Cell, Outputs};

pub const DEFAULT_BAND: (f64, f64) = (1.53, 2.84);
const NARROW_WINDOWS: [(u64, u64); 4] = [(15_000, 25_000), (25_000, 40_000), (40_000, 60_000), (60_000, 90_000)];

#[derive(Serialize)]
struct Row {
    test: &'static str,
    detail: String,
    rms: Option<f64>,
    p_value: Option<f64>,
    survives: Option<bool>,
    error: Option<String>,
}

fn row(test: &'static str, detail: String, r: Result<(f64, f64), String>) -> Row {
    match r {
        Ok((rms, p)) => Row {
            test,
            detail,
            rms: Some(rms),
            p_value: Some(p),
            survives: Some(p < ALPHA),
            error: None,
        },
        Err(e) => Row {
            test,
            detail,
            rms: None,
            p_value: None,
            survives: None,
            error: Some(e),
        },
    }
}

#[derive(Serialize)]
struct WindowRun {
    lo: u64,
    hi: u64,
    result: Result<StratReport, String>,
}

#[derive(Serialize)]
struct Summary {
    range: (u64, u64),
    band: (f64, f64),
    omega: Vec<(u32, Result<OmegaControl, String>)>,
    conductor_matching: Result<MatchedControl, String>,
    narrow_windows: Vec<WindowRun>,
    sha_vs_lvalue: (Result<StratReport, String>, Result<StratReport, String>),
    band_control: (Result<StratReport, String>, Result<StratReport, String>),
    lvalue_matching: Result<MatchedControl, String>,
    triple: Result<TripleControl, String>,
    bsd_groups: Result<Vec<GroupBsd>, String>,
    euler: Result<EulerSummary, String>,
    period_vs_log_conductor: Result<f64, String>,
    table8: Vec<Row>,
}

#[derive(Serialize)]
struct EulerSummary {
    argmax_prime: u32,
    max_delta: f64,
    terminal_delta: f64,
    terminal_sum_a: f64,
    terminal_sum_b: f64,
    mean_log_l_a: f64,
    mean_log_l_b: f64,
}

fn strat(table: &CurveTable, m: &TraceMatrix, rule: &StratRule, cfg: &RunConfig) -> Result<StratReport, String> {
    stratify::stratify(table, m, rule, cfg.shuffles, cfg.seed)
        .map(|(_, _, r)| r)
        .map_err(|e| e.to_string())
}

fn groups<'a>(table: &'a CurveTable, rule: &StratRule) -> Result<(Vec<&'a CurveRecord>, Vec<&'a CurveRecord>), String> {
    let part = stratify::partition(table, rule).map_err(|e| e.to_string())?;
    let pick = |g: &Vec<usize>| g.iter().map(|&i| &table.records()[i]).collect::<Vec<_>>();
    Ok((pick(&part.members[0]), pick(&part.members[1])))
}

/// Nearest-neighbour control; the smaller group is matched into the larger.
fn matched(
    table: &CurveTable,
    m: &TraceMatrix,
    rule: &StratRule,
    key: MatchKey,
    max_distance: f64,
    cfg: &RunConfig,
    out: &mut Outputs,
    name: &str,
) -> Result<MatchedControl, String> {
    let (a, b) = groups(table, rule)?;
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let pairs = confound::match_nn(&small, &large, key, max_distance).map_err(|e| e.to_string())?;
    let rows = pairs
        .pairs
        .iter()
        .map(|p| vec![Cell::from(p.a.as_str()), p.b.as_str().into(), p.distance.into()])
        .collect();
    out.table(name, &["label_a", "label_b", "distance"], rows).map_err(|e| e.to_string())?;
    confound::matched_control(&pairs, m, cfg.pair_mode, cfg.shuffles, cfg.seed).map_err(|e| e.to_string())
}

fn euler(table: &CurveTable, m: &TraceMatrix) -> Result<EulerSummary, String> {
    let part = stratify::partition(table, &StratRule::sha()).map_err(|e| e.to_string())?;
    let rows = part.rows(table, m).map_err(|e| e.to_string())?;
    // Oriented as |Sha| ≥ 4 minus |Sha| = 1.
    let pa = profile::murmuration_profile(&rows[1], m, PrimeScope::All).map_err(|e| e.to_string())?;
    let pb = profile::murmuration_profile(&rows[0], m, PrimeScope::All).map_err(|e| e.to_string())?;
    let e = confound::euler_cumsum(&pa, &pb).map_err(|e| e.to_string())?;
    let mean_log_l = |g: &Vec<usize>| g.iter().map(|&i| table.records()[i].l_value.ln()).sum::<f64>() / g.len() as f64;
    Ok(EulerSummary {
        argmax_prime: e.argmax_prime,
        max_delta: e.max_delta,
        terminal_delta: e.terminal_delta,
        terminal_sum_a: *e.sum_a.last().unwrap(),
        terminal_sum_b: *e.sum_b.last().unwrap(),
        mean_log_l_a: mean_log_l(&part.members[1]),
        mean_log_l_b: mean_log_l(&part.members[0]),
    })
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    let table = super::load_table(cfg)?;
    let m = super::load_matrix(cfg, &table)?;
    let rank0 = super::in_range(&table, cfg).filter(|r| r.rank == 0);
    let band = cfg.band.unwrap_or(DEFAULT_BAND);
    let tam = StratRule::tamagawa();
    let sha = StratRule::sha();
    let mut out = Outputs::new(&cfg.out, cfg.svg)?;

    let omega: Vec<_> = (1..=4)
        .map(|k| {
            (
                k,
                confound::control_omega(&rank0, &m, &tam, k, cfg.shuffles, cfg.seed).map_err(|e| e.to_string()),
            )
        })
        .collect();
    let conductor_matching = matched(&rank0, &m, &tam, MatchKey::Conductor, 500.0, cfg, &mut out, "pairs_conductor");
    let all_rank0 = table.filter(|r| r.rank == 0);
    let narrow_windows = NARROW_WINDOWS
        .iter()
        .map(|&(lo, hi)| WindowRun {
            lo,
            hi,
            result: strat(&all_rank0.filter(|r| r.conductor >= lo && r.conductor <= hi), &m, &tam, cfg),
        })
        .collect::<Vec<_>>();
    let sha_vs_lvalue = (strat(&rank0, &m, &sha, cfg), strat(&rank0, &m, &StratRule::lvalue_quartiles(), cfg));
    let banded = confound::lvalue_band(&rank0, band.0, band.1).map_err(|e| e.to_string());
    let band_control = (
        sha_vs_lvalue.0.clone(),
        banded.as_ref().map_err(Clone::clone).and_then(|t| strat(t, &m, &sha, cfg)),
    );
    let lvalue_matching = matched(&rank0, &m, &sha, MatchKey::LValue, 0.1, cfg, &mut out, "pairs_lvalue");
    let triple = confound::triple_control(&table.filter(|r| r.rank == 0), &m, band, cfg.range, cfg.shuffles, cfg.seed)
        .map_err(|e| e.to_string());
    let bsd_groups = stratify::partition(&rank0, &sha)
        .map_err(|e| e.to_string())
        .and_then(|p| confound::bsd_group_ratios(&rank0, &p.members).map_err(|e| e.to_string()));
    let euler = banded.as_ref().map_err(Clone::clone).and_then(|t| euler(t, &m));
    if let Ok(t) = &banded {
        if let Ok(part) = stratify::partition(t, &sha) {
            let rows = part.rows(t, &m)?;
            let pa = profile::murmuration_profile(&rows[1], &m, PrimeScope::All)?;
            let pb = profile::murmuration_profile(&rows[0], &m, PrimeScope::All)?;
            let e = confound::euler_cumsum(&pa, &pb)?;
            e.write_csv(out.writer("euler_cumsum.csv")?)?;
        }
    }
    let period_vs_log_conductor =
        confound::invariant_correlation(&rank0, Invariant::Period, false, Invariant::Conductor, true).map_err(|e| e.to_string());

    let rep = |r: &Result<StratReport, String>| r.as_ref().map(|r| (r.observed_rms, r.p_value)).map_err(Clone::clone);
    let mut table8 = Vec::new();
    for (k, r) in &omega {
        table8.push(row(
            "omega",
            format!("tamagawa rule at omega(N) = {k}"),
            r.as_ref().map(|o| (o.rms, o.report.p_value)).map_err(Clone::clone),
        ));
    }
    table8.push(row(
        "conductor_matching",
        "tamagawa groups matched on conductor (max 500)".into(),
        conductor_matching.as_ref().map(|c| (c.rms, c.report.p_value)).map_err(Clone::clone),
    ));
    for w in &narrow_windows {
        table8.push(row("narrow_window", format!("tamagawa rule in [{}, {}]", w.lo, w.hi), rep(&w.result)));
    }
    table8.push(row("sha_vs_lvalue", "sha rule".into(), rep(&sha_vs_lvalue.0)));
    table8.push(row("sha_vs_lvalue", "l-value quartiles".into(), rep(&sha_vs_lvalue.1)));
    table8.push(row("lvalue_band", format!("sha rule with L in [{}, {}]", band.0, band.1), rep(&band_control.1)));
    table8.push(row(
        "lvalue_matching",
        "sha groups matched on L(E,1) (max 0.1)".into(),
        lvalue_matching.as_ref().map(|c| (c.rms, c.report.p_value)).map_err(Clone::clone),
    ));
    if let Ok(t) = &triple {
        table8.push(row("triple", "small-period half".into(), rep(&t.small.result)));
        table8.push(row("triple", "large-period half".into(), rep(&t.large.result)));
    }

    let summary = Summary {
        range: cfg.range,
        band,
        omega,
        conductor_matching,
        narrow_windows,
        sha_vs_lvalue,
        band_control,
        lvalue_matching,
        triple,
        bsd_groups,
        euler,
        period_vs_log_conductor,
        table8,
    };
    out.report("confound", cfg, summary).map_err(|e| anyhow!(e))?;
    Ok(())
}
