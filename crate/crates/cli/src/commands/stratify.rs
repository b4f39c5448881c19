use anyhow::{anyhow, Result};
use murmur_core::curves::CurveTable;
use murmur_core::stratify::{self, Bonferroni, ScaleScan, StratReport, StratRule, FIT_WINDOWS, SCALE_WINDOWS};
use serde::Serialize;

use crate::config::RunConfig;
use crate::report::{Cell, Outputs};

pub const ALPHA: f64 = 0.001;

#[derive(Serialize)]
struct RuleResult {
    rule: String,
    ranks: Vec<u8>,
    groups: Vec<String>,
    unassigned: usize,
    report: StratReport,
    /// The four reference windows.
    scale: Option<ScaleScan>,
    /// Nine overlapping windows for the power-law fit.
    scale_fit: Option<ScaleScan>,
}

#[derive(Serialize)]
struct Summary {
    range: (u64, u64),
    rules: Vec<RuleResult>,
    bonferroni: Bonferroni,
}

/// Curves a rule is applied to: rank 0, or ranks 0 and 1 for the root-number
/// calibration.
pub fn rule_subset(table: &CurveTable, rule: &StratRule) -> (CurveTable, Vec<u8>) {
    if rule.name == "root_number" {
        (table.filter(|r| r.rank <= 1), vec![0, 1])
    } else {
        (table.filter(|r| r.rank == 0), vec![0])
    }
}

pub fn parse_rule(name: &str) -> Result<StratRule> {
    StratRule::by_name(name).ok_or_else(|| {
        anyhow!("unknown rule `{name}` (expected tamagawa, sha, period, torsion, root_number, l_value)")
    })
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    let table = super::load_table(cfg)?;
    let m = super::load_matrix(cfg, &table)?;
    let ranged = super::in_range(&table, cfg);
    let mut out = Outputs::new(&cfg.out, cfg.svg)?;
    let mut results = Vec::new();
    for name in &cfg.rules {
        let rule = parse_rule(name)?;
        let (sub, ranks) = rule_subset(&ranged, &rule);
        let (part, profiles, report) = stratify::stratify(&sub, &m, &rule, cfg.shuffles, cfg.seed)
            .map_err(|e| anyhow!("rule {name}: {e}"))?;
        let mut rows = super::profile_rows(&profiles);
        let mut header = super::group_header(&part);
        if profiles.len() == 2 {
            header.push("difference");
            for (j, row) in rows.iter_mut().enumerate() {
                row.push(Cell::from(profiles[1].mean_ap[j] - profiles[0].mean_ap[j]));
            }
        }
        out.table(&format!("profile_{name}"), &header, rows)?;
        let (scale, scale_fit) = if cfg.scale {
            let (whole, _) = rule_subset(&table, &rule);
            let scan = |w: &[(u64, u64)]| stratify::scale_scan(&whole, &m, &rule, w).map_err(|e| anyhow!("rule {name}: {e}"));
            (Some(scan(&SCALE_WINDOWS)?), Some(scan(&FIT_WINDOWS)?))
        } else {
            (None, None)
        };
        results.push(RuleResult {
            rule: name.clone(),
            ranks,
            groups: part.names.clone(),
            unassigned: part.unassigned.len(),
            report,
            scale,
            scale_fit,
        });
    }
    let ps: Vec<f64> = results.iter().map(|r| r.report.p_value).collect();
    let summary = Summary {
        range: cfg.range,
        bonferroni: stratify::bonferroni(&ps, ALPHA)?,
        rules: results,
    };
    out.report("stratify", cfg, summary)?;
    Ok(())
}
