//! Curve tables: canonical CSV ingest, validation, indexing, and isogeny dedupe.
//!
//! The canonical format has a required header row
//! `label,conductor,rank,a1,a2,a3,a4,a6,root_number,sha_an,real_period,regulator,tamagawa_product,torsion_order,l_value`.
//! Rows that fail field-level validation are collected in [`Ingest::rejected`];
//! a duplicate label aborts the whole ingest.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::ops::RangeInclusive;

use serde::Serialize;
use thiserror::Error;

pub const CANONICAL_HEADER: [&str; 15] = [
    "label",
    "conductor",
    "rank",
    "a1",
    "a2",
    "a3",
    "a4",
    "a6",
    "root_number",
    "sha_an",
    "real_period",
    "regulator",
    "tamagawa_product",
    "torsion_order",
    "l_value",
];

/// Relative tolerance used when snapping analytic Sha to an integer.
pub const SHA_SNAP_TOL: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing or non-canonical header (expected `{}`)", CANONICAL_HEADER.join(","))]
    Header,
    #[error("duplicate label `{label}` (line {line})")]
    DuplicateLabel { label: String, line: u64 },
}

/// Row-level rejection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowError {
    pub line: u64,
    pub label: Option<String>,
    pub reason: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BsdError {
    #[error("{0}: BSD residual is defined for rank 0 only")]
    NotRankZero(String),
    #[error("{0}: rank-0 curve with vanishing L(E,1)")]
    ZeroLValue(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRecord {
    pub label: String,
    pub isogeny_class: String,
    /// a1, a2, a3, a4, a6 of a minimal model.
    pub a_invariants: [i128; 5],
    pub conductor: u64,
    pub rank: u8,
    pub root_number: i8,
    pub real_period: f64,
    pub regulator: f64,
    pub tamagawa_product: u64,
    pub torsion_order: u64,
    pub sha_an: f64,
    pub l_value: f64,
}

/// Strip the trailing curve index from a Cremona label (`"11a1"` → `"11a"`).
pub fn isogeny_class_of(label: &str) -> &str {
    label.trim_end_matches(|c: char| c.is_ascii_digit())
}

impl CurveRecord {
    /// |Sha| snapped to the nearest integer when within [`SHA_SNAP_TOL`].
    pub fn sha_snapped(&self) -> Option<u64> {
        let s = self.sha_an.round();
        if s >= 1.0 && (self.sha_an - s).abs() <= SHA_SNAP_TOL * s {
            Some(s as u64)
        } else {
            None
        }
    }

    /// Ω·∏c_p / T², the rank-0 BSD prediction of L(E,1)/|Sha|.
    pub fn bsd_ratio(&self) -> f64 {
        let t = self.torsion_order as f64;
        self.real_period * self.tamagawa_product as f64 / (t * t)
    }

    fn validate(&self) -> Result<(), String> {
        if self.conductor < 11 {
            return Err(format!("conductor {} < 11", self.conductor));
        }
        if self.rank > 4 {
            return Err(format!("rank {} outside 0..=4", self.rank));
        }
        if self.root_number != 1 && self.root_number != -1 {
            return Err(format!("root number {} not ±1", self.root_number));
        }
        let even = self.rank.is_multiple_of(2);
        if even != (self.root_number == 1) {
            return Err(format!(
                "parity: rank {} with root number {}",
                self.rank, self.root_number
            ));
        }
        if !(self.real_period > 0.0 && self.real_period.is_finite()) {
            return Err("real period must be positive".into());
        }
        if !(self.regulator > 0.0 && self.regulator.is_finite()) {
            return Err("regulator must be positive".into());
        }
        if self.tamagawa_product == 0 || self.torsion_order == 0 {
            return Err("tamagawa product and torsion order must be positive".into());
        }
        if !(self.l_value >= 0.0 && self.l_value.is_finite()) {
            return Err("l_value must be nonnegative".into());
        }
        match self.sha_snapped() {
            Some(s) if is_perfect_square(s) => {}
            _ => return Err(format!("sha_an {} is not a positive square", self.sha_an)),
        }
        if self.rank == 0 {
            if (self.regulator - 1.0).abs() > 1e-9 {
                return Err("rank 0 requires regulator = 1".into());
            }
            if self.l_value <= 0.0 {
                return Err("rank 0 requires l_value > 0".into());
            }
        }
        Ok(())
    }
}

fn is_perfect_square(n: u64) -> bool {
    let r = (n as f64).sqrt().round() as u64;
    (r.saturating_sub(1)..=r + 1).any(|k| k * k == n)
}

/// Relative rank-0 BSD residual |L − Sha·Ω·∏c_p/T²| / L.
pub fn validate_bsd_residual(record: &CurveRecord) -> Result<f64, BsdError> {
    if record.rank != 0 {
        return Err(BsdError::NotRankZero(record.label.clone()));
    }
    if record.l_value <= 0.0 {
        return Err(BsdError::ZeroLValue(record.label.clone()));
    }
    let predicted = record.sha_an * record.bsd_ratio();
    Ok((record.l_value - predicted).abs() / record.l_value)
}

/// Immutable, sorted, indexed collection of curves.
#[derive(Debug, Clone, Default)]
pub struct CurveTable {
    records: Vec<CurveRecord>,
    by_label: HashMap<String, usize>,
    by_class: BTreeMap<String, Vec<usize>>,
}

impl CurveTable {
    /// Build a table, sorting by (conductor, label). Fails on duplicate labels.
    pub fn from_records(mut records: Vec<CurveRecord>) -> Result<Self, IngestError> {
        records.sort_by(|a, b| {
            a.conductor
                .cmp(&b.conductor)
                .then_with(|| a.label.cmp(&b.label))
        });
        let mut by_label = HashMap::with_capacity(records.len());
        let mut by_class: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            if by_label.insert(r.label.clone(), i).is_some() {
                return Err(IngestError::DuplicateLabel {
                    label: r.label.clone(),
                    line: 0,
                });
            }
            by_class.entry(r.isogeny_class.clone()).or_default().push(i);
        }
        Ok(Self {
            records,
            by_label,
            by_class,
        })
    }

    pub fn records(&self) -> &[CurveRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<&CurveRecord> {
        self.by_label.get(label).map(|&i| &self.records[i])
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.by_label.get(label).copied()
    }

    /// Isogeny classes with the table indices of their members, in label order.
    pub fn classes(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.by_class
    }

    /// Records with conductor in the closed range.
    pub fn conductor_slice(&self, range: RangeInclusive<u64>) -> &[CurveRecord] {
        let lo = self
            .records
            .partition_point(|r| r.conductor < *range.start());
        let hi = self
            .records
            .partition_point(|r| r.conductor <= *range.end());
        &self.records[lo..hi.max(lo)]
    }

    /// New table holding the records that satisfy `keep`.
    pub fn filter(&self, keep: impl Fn(&CurveRecord) -> bool) -> CurveTable {
        let records = self.records.iter().filter(|r| keep(r)).cloned().collect();
        // Subset of unique labels stays unique.
        CurveTable::from_records(records).expect("subset of a valid table")
    }

    /// Rank histogram indexed by rank 0..=4.
    pub fn rank_histogram(&self) -> [usize; 5] {
        let mut h = [0usize; 5];
        for r in &self.records {
            h[r.rank as usize] += 1;
        }
        h
    }

    /// Serialize in canonical CSV form.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), IngestError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(CANONICAL_HEADER)?;
        for r in &self.records {
            let a = r.a_invariants;
            wr.write_record([
                r.label.clone(),
                r.conductor.to_string(),
                r.rank.to_string(),
                a[0].to_string(),
                a[1].to_string(),
                a[2].to_string(),
                a[3].to_string(),
                a[4].to_string(),
                r.root_number.to_string(),
                r.sha_an.to_string(),
                r.real_period.to_string(),
                r.regulator.to_string(),
                r.tamagawa_product.to_string(),
                r.torsion_order.to_string(),
                r.l_value.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Result of a canonical CSV ingest.
#[derive(Debug)]
pub struct Ingest {
    pub table: CurveTable,
    pub rejected: Vec<RowError>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveFormat {
    CanonicalCsv,
}

/// Parse a curve table. Row problems are collected; duplicate labels are fatal.
pub fn parse_curve_table<R: Read>(stream: R, format: CurveFormat) -> Result<Ingest, IngestError> {
    let CurveFormat::CanonicalCsv = format;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(stream);
    let header = rdr.headers().map_err(|_| IngestError::Header)?;
    if header.is_empty() {
        return Ok(Ingest {
            table: CurveTable::default(),
            rejected: Vec::new(),
        });
    }
    if header.iter().ne(CANONICAL_HEADER.iter().copied()) {
        return Err(IngestError::Header);
    }
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    let mut seen: HashMap<String, u64> = HashMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() == 1 && row.get(0).is_some_and(str::is_empty) {
            continue;
        }
        match parse_row(&row) {
            Ok(rec) => {
                if seen.contains_key(&rec.label) {
                    return Err(IngestError::DuplicateLabel {
                        label: rec.label,
                        line,
                    });
                }
                seen.insert(rec.label.clone(), line);
                match rec.validate() {
                    Ok(()) => records.push(rec),
                    Err(reason) => rejected.push(RowError {
                        line,
                        label: Some(rec.label),
                        reason,
                    }),
                }
            }
            Err(reason) => rejected.push(RowError {
                line,
                label: row.get(0).map(str::to_owned),
                reason,
            }),
        }
    }
    Ok(Ingest {
        table: CurveTable::from_records(records)?,
        rejected,
    })
}

fn parse_row(row: &csv::StringRecord) -> Result<CurveRecord, String> {
    if row.len() != CANONICAL_HEADER.len() {
        return Err(format!(
            "expected {} columns, found {}",
            CANONICAL_HEADER.len(),
            row.len()
        ));
    }
    fn field<T: std::str::FromStr>(row: &csv::StringRecord, i: usize) -> Result<T, String> {
        let raw = &row[i];
        raw.parse()
            .map_err(|_| format!("field `{}`: cannot parse `{raw}`", CANONICAL_HEADER[i]))
    }
    let label = row[0].to_string();
    if label.is_empty() {
        return Err("empty label".into());
    }
    let rank: u64 = field(row, 2)?;
    let root_number: i64 = field(row, 8)?;
    Ok(CurveRecord {
        isogeny_class: isogeny_class_of(&label).to_string(),
        label,
        conductor: field(row, 1)?,
        rank: rank.min(u8::MAX as u64) as u8,
        a_invariants: [
            field(row, 3)?,
            field(row, 4)?,
            field(row, 5)?,
            field(row, 6)?,
            field(row, 7)?,
        ],
        root_number: root_number.clamp(-128, 127) as i8,
        sha_an: field(row, 9)?,
        real_period: field(row, 10)?,
        regulator: field(row, 11)?,
        tamagawa_product: field(row, 12)?,
        torsion_order: field(row, 13)?,
        l_value: field(row, 14)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DedupeStats {
    pub retained: usize,
    pub total: usize,
}

impl DedupeStats {
    pub fn ratio(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.retained as f64 / self.total as f64
        }
    }
}

/// Keep one curve per isogeny class: the lexicographically smallest label.
pub fn dedupe_isogeny(table: &CurveTable) -> (CurveTable, DedupeStats) {
    let records: Vec<CurveRecord> = table
        .classes()
        .values()
        .filter_map(|members| {
            members
                .iter()
                .map(|&i| &table.records[i])
                .min_by(|a, b| a.label.cmp(&b.label))
                .cloned()
        })
        .collect();
    let stats = DedupeStats {
        retained: records.len(),
        total: table.len(),
    };
    (
        CurveTable::from_records(records).expect("one record per class"),
        stats,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "label,conductor,rank,a1,a2,a3,a4,a6,root_number,sha_an,real_period,regulator,tamagawa_product,torsion_order,l_value";

    fn csv(rows: &[&str]) -> String {
        let mut s = HEADER.to_string();
        for r in rows {
            s.push('\n');
            s.push_str(r);
        }
        s
    }

    const R11A1: &str = "11a1,11,0,0,-1,1,-10,-20,1,1,1.26920930428,1,5,5,0.253841860856";
    const R11A2: &str = "11a2,11,0,0,-1,1,-7820,-263580,1,1,0.253841860856,1,1,1,0.253841860856";
    const R11A3: &str = "11a3,11,0,0,-1,1,0,0,1,1,6.3460465214,1,1,5,0.253841860856";

    #[test]
    fn parses_11a1() {
        let ing = parse_curve_table(csv(&[R11A1]).as_bytes(), CurveFormat::CanonicalCsv).unwrap();
        assert!(ing.rejected.is_empty());
        let r = ing.table.get("11a1").unwrap();
        assert_eq!(r.conductor, 11);
        assert_eq!(r.rank, 0);
        assert_eq!(r.torsion_order, 5);
        assert_eq!(r.a_invariants, [0, -1, 1, -10, -20]);
        assert_eq!(r.isogeny_class, "11a");
    }

    #[test]
    fn header_only_is_empty() {
        let ing = parse_curve_table(HEADER.as_bytes(), CurveFormat::CanonicalCsv).unwrap();
        assert!(ing.table.is_empty());
        assert!(ing.rejected.is_empty());
        let ing = parse_curve_table(&b""[..], CurveFormat::CanonicalCsv).unwrap();
        assert!(ing.table.is_empty());
    }

    #[test]
    fn rank_five_rejected() {
        let row = "x1,100,5,0,0,1,-1,0,-1,1,1.0,1.0,1,1,1.0";
        let ing = parse_curve_table(csv(&[row]).as_bytes(), CurveFormat::CanonicalCsv).unwrap();
        assert!(ing.table.is_empty());
        assert_eq!(ing.rejected.len(), 1);
        assert!(ing.rejected[0].reason.contains("rank"));
    }

    #[test]
    fn malformed_rows_carry_line_numbers() {
        let bad_cols = "11a1,11,0";
        let bad_num = "11a2,eleven,0,0,-1,1,-7820,-263580,1,1,0.25,1,1,1,0.25";
        let ing = parse_curve_table(
            csv(&[bad_cols, bad_num, R11A3]).as_bytes(),
            CurveFormat::CanonicalCsv,
        )
        .unwrap();
        assert_eq!(ing.table.len(), 1);
        let lines: Vec<u64> = ing.rejected.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![2, 3]);
        assert!(ing.rejected[1].reason.contains("conductor"));
    }

    #[test]
    fn duplicate_label_is_fatal() {
        let err = parse_curve_table(csv(&[R11A1, R11A1]).as_bytes(), CurveFormat::CanonicalCsv)
            .unwrap_err();
        assert!(matches!(err, IngestError::DuplicateLabel { line: 3, .. }));
    }

    #[test]
    fn invariant_violations() {
        // parity, non-square sha, rank-0 regulator, rank-0 zero L
        let rows = [
            "a1,37,1,0,0,1,-1,0,1,1,5.98,0.05,1,1,0.306",
            "b1,37,0,0,1,1,-23,-50,1,2,2.17,1,1,1,0.72",
            "c1,37,0,0,1,1,-23,-50,1,1,2.17,0.5,1,1,0.72",
            "d1,37,0,0,1,1,-23,-50,1,1,2.17,1,1,1,0",
        ];
        let ing = parse_curve_table(csv(&rows).as_bytes(), CurveFormat::CanonicalCsv).unwrap();
        assert!(ing.table.is_empty());
        assert_eq!(ing.rejected.len(), 4);
    }

    #[test]
    fn sha_snaps_with_tolerance() {
        let row = "x1,100,0,0,0,1,-1,0,1,4.003,1.0,1,1,1,4.003";
        let ing = parse_curve_table(csv(&[row]).as_bytes(), CurveFormat::CanonicalCsv).unwrap();
        assert_eq!(ing.table.records()[0].sha_snapped(), Some(4));
        let row = "x1,100,0,0,0,1,-1,0,1,4.01,1.0,1,1,1,4.01";
        let ing = parse_curve_table(csv(&[row]).as_bytes(), CurveFormat::CanonicalCsv).unwrap();
        assert_eq!(ing.rejected.len(), 1);
    }

    #[test]
    fn bsd_residual_11a1() {
        let ing = parse_curve_table(csv(&[R11A1]).as_bytes(), CurveFormat::CanonicalCsv).unwrap();
        let mut r = ing.table.records()[0].clone();
        // Ω·5/25 = 1.26920930428/5
        assert!(validate_bsd_residual(&r).unwrap() < 1e-3);
        r.sha_an = 2.0;
        assert!((validate_bsd_residual(&r).unwrap() - 1.0).abs() < 1e-3);
        r.l_value = 0.0;
        assert!(matches!(validate_bsd_residual(&r), Err(BsdError::ZeroLValue(_))));
    }

    #[test]
    fn dedupe_single_class() {
        let ing = parse_curve_table(
            csv(&[R11A3, R11A1, R11A2]).as_bytes(),
            CurveFormat::CanonicalCsv,
        )
        .unwrap();
        let (d, stats) = dedupe_isogeny(&ing.table);
        assert_eq!(d.len(), 1);
        assert_eq!(d.records()[0].label, "11a1");
        assert_eq!(stats.total, 3);
        let (again, s2) = dedupe_isogeny(&d);
        assert_eq!(again.records(), d.records());
        assert_eq!(s2.ratio(), 1.0);
    }

    #[test]
    #[allow(clippy::reversed_empty_ranges)]
    fn sorted_and_sliced_by_conductor() {
        let rows = [
            "14a1,14,0,1,0,1,4,-6,1,1,1.98134195607,1,6,6,0.330223659344",
            R11A1,
        ];
        let ing = parse_curve_table(csv(&rows).as_bytes(), CurveFormat::CanonicalCsv).unwrap();
        assert_eq!(ing.table.records()[0].label, "11a1");
        assert_eq!(ing.table.conductor_slice(12..=20).len(), 1);
        
        assert_eq!(ing.table.conductor_slice(20..=12).len(), 0);
    }

    #[test]
    fn round_trip_serialization() {
        let ing = parse_curve_table(
            csv(&[R11A1, R11A2, R11A3]).as_bytes(),
            CurveFormat::CanonicalCsv,
        )
        .unwrap();
        let mut buf = Vec::new();
        ing.table.write_csv(&mut buf).unwrap();
        let back = parse_curve_table(buf.as_slice(), CurveFormat::CanonicalCsv).unwrap();
        assert_eq!(back.table.records(), ing.table.records());
    }
}
