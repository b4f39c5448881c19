//! Sliding conductor-window averages of curve invariants.

use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::curves::{CurveRecord, CurveTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WindowError {
    #[error("unknown invariant `{0}`")]
    UnknownInvariant(String),
    #[error("window width and step must be positive (got W={width}, S={step})")]
    InvalidParams { width: f64, step: f64 },
}

/// Per-curve quantity that can be averaged, stratified on, or correlated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Invariant {
    Period,
    LogPeriod,
    Tamagawa,
    Torsion,
    Sha,
    Regulator,
    LValue,
    BsdRatio,
    Conductor,
}

impl Invariant {
    pub const PART_ONE: [Invariant; 8] = [
        Invariant::Period,
        Invariant::LogPeriod,
        Invariant::Tamagawa,
        Invariant::Torsion,
        Invariant::Sha,
        Invariant::Regulator,
        Invariant::LValue,
        Invariant::BsdRatio,
    ];

    pub fn value(self, r: &CurveRecord) -> f64 {
        match self {
            Invariant::Period => r.real_period,
            Invariant::LogPeriod => r.real_period.ln(),
            Invariant::Tamagawa => r.tamagawa_product as f64,
            Invariant::Torsion => r.torsion_order as f64,
            Invariant::Sha => r.sha_an,
            Invariant::Regulator => r.regulator,
            Invariant::LValue => r.l_value,
            Invariant::BsdRatio => r.bsd_ratio(),
            Invariant::Conductor => r.conductor as f64,
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Invariant::Period => "period",
            Invariant::LogPeriod => "log_period",
            Invariant::Tamagawa => "tamagawa",
            Invariant::Torsion => "torsion",
            Invariant::Sha => "sha",
            Invariant::Regulator => "regulator",
            Invariant::LValue => "l_value",
            Invariant::BsdRatio => "bsd_ratio",
            Invariant::Conductor => "conductor",
        }
    }
}

impl FromStr for Invariant {
    type Err = WindowError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "period" => Invariant::Period,
            "log_period" => Invariant::LogPeriod,
            "tamagawa" => Invariant::Tamagawa,
            "torsion" => Invariant::Torsion,
            "sha" => Invariant::Sha,
            "regulator" => Invariant::Regulator,
            "l_value" => Invariant::LValue,
            "bsd_ratio" => Invariant::BsdRatio,
            "conductor" => Invariant::Conductor,
            other => return Err(WindowError::UnknownInvariant(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowParams {
    pub width: f64,
    pub step: f64,
    pub rank: u8,
    pub invariant: Invariant,
}

/// Window means on an evenly spaced grid of centers; `values[i]` is `None`
/// where the window holds no rank-r curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowSeries {
    pub centers: Vec<f64>,
    pub values: Vec<Option<f64>>,
    pub counts: Vec<usize>,
    pub params: WindowParams,
}

impl WindowSeries {
    pub fn has_gaps(&self) -> bool {
        self.values.iter().any(Option::is_none)
    }
}

/// Default grid: first center at min conductor + W/2, last ≤ max conductor − W/2.
pub fn default_centers(table: &CurveTable, width: f64, step: f64) -> Vec<f64> {
    let recs = table.records();
    let (Some(first), Some(last)) = (recs.first(), recs.last()) else {
        return Vec::new();
    };
    let lo = first.conductor as f64 + width / 2.0;
    let hi = last.conductor as f64 - width / 2.0;
    if hi < lo {
        return vec![0.5 * (first.conductor + last.conductor) as f64];
    }
    let n = ((hi - lo) / step).floor() as usize + 1;
    (0..n).map(|i| lo + i as f64 * step).collect()
}

pub fn sliding_window_series(
    table: &CurveTable,
    invariant: Invariant,
    rank: u8,
    width: f64,
    step: f64,
) -> Result<WindowSeries, WindowError> {
    if !(width > 0.0 && step > 0.0) {
        return Err(WindowError::InvalidParams { width, step });
    }
    let centers = default_centers(table, width, step);
    Ok(series_at(table, invariant, rank, width, step, centers))
}

/// Window means at explicit centers over the closed window [c − W/2, c + W/2].
pub fn series_at(
    table: &CurveTable,
    invariant: Invariant,
    rank: u8,
    width: f64,
    step: f64,
    centers: Vec<f64>,
) -> WindowSeries {
    let (conductors, prefix): (Vec<f64>, Vec<f64>) = {
        let mut ns = Vec::new();
        let mut ps = vec![0.0];
        let mut acc = 0.0;
        for r in table.records().iter().filter(|r| r.rank == rank) {
            ns.push(r.conductor as f64);
            acc += invariant.value(r);
            ps.push(acc);
        }
        (ns, ps)
    };
    let mut values = Vec::with_capacity(centers.len());
    let mut counts = Vec::with_capacity(centers.len());
    for &c in &centers {
        let lo = conductors.partition_point(|&n| n < c - width / 2.0);
        let hi = conductors.partition_point(|&n| n <= c + width / 2.0);
        let count = hi.saturating_sub(lo);
        counts.push(count);
        values.push((count > 0).then(|| (prefix[hi] - prefix[lo]) / count as f64));
    }
    WindowSeries {
        centers,
        values,
        counts,
        params: WindowParams {
            width,
            step,
            rank,
            invariant,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::CurveRecord;

    fn rec(label: &str, n: u64, rank: u8, period: f64) -> CurveRecord {
        CurveRecord {
            label: label.into(),
            isogeny_class: label.into(),
            a_invariants: [0; 5],
            conductor: n,
            rank,
            root_number: if rank.is_multiple_of(2) { 1 } else { -1 },
            real_period: period,
            regulator: 1.0,
            tamagawa_product: 2,
            torsion_order: 1,
            sha_an: 1.0,
            l_value: 1.0,
        }
    }

    #[test]
    fn constant_invariant_constant_series() {
        let recs = (0..200).map(|i| rec(&format!("c{i}"), 11 + i, 0, 2.5)).collect();
        let t = CurveTable::from_records(recs).unwrap();
        let s = sliding_window_series(&t, Invariant::Period, 0, 20.0, 5.0).unwrap();
        assert!(!s.centers.is_empty());
        assert!(s.values.iter().all(|v| *v == Some(2.5)));
        assert!(s.centers.windows(2).all(|w| (w[1] - w[0] - 5.0).abs() < 1e-12));
    }

    #[test]
    fn closed_window_membership() {
        let t = CurveTable::from_records(vec![
            rec("a", 100, 0, 1.0),
            rec("b", 110, 0, 3.0),
            rec("c", 120, 0, 5.0),
        ])
        .unwrap();
        let s = series_at(&t, Invariant::Period, 0, 20.0, 1.0, vec![110.0, 100.0]);
        assert_eq!(s.counts, vec![3, 2]);
        assert_eq!(s.values[0], Some(3.0));
    }

    #[test]
    fn gap_where_no_curves_of_rank() {
        let t = CurveTable::from_records(vec![rec("a", 100, 0, 1.0), rec("b", 200, 1, 1.0)]).unwrap();
        let s = series_at(&t, Invariant::Period, 1, 10.0, 1.0, vec![100.0, 200.0]);
        assert_eq!(s.values, vec![None, Some(1.0)]);
        assert!(s.has_gaps());
    }

    #[test]
    fn bad_params_and_ids() {
        let t = CurveTable::default();
        assert!(sliding_window_series(&t, Invariant::Period, 0, 0.0, 1.0).is_err());
        assert!("nonsense".parse::<Invariant>().is_err());
        for inv in Invariant::PART_ONE {
            assert_eq!(inv.id().parse::<Invariant>().unwrap(), inv);
        }
    }
}
