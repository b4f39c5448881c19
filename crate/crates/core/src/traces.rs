//! Dense (curve × prime) Frobenius trace matrix.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::curves::{CurveRecord, CurveTable};
use crate::exec;
use crate::pointcount::{ap_with_table, ResidueTable, TraceError};
use crate::primes::PrimeList;

/// Rows per parallel tile. Within a tile iteration is prime-major so one
/// residue table stays hot across the tile's curves.
const TILE_ROWS: usize = 64;

/// Row-major bitset.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BitSet {
    words: Vec<u64>,
    len: usize,
}

impl BitSet {
    pub fn new(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        let w = &mut self.words[i / 64];
        if v {
            *w |= 1 << (i % 64);
        } else {
            *w &= !(1 << (i % 64));
        }
    }

    /// Packed little-endian bytes, bit i at byte i/8, position i%8.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out: Vec<u8> = self.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        out.truncate(self.len.div_ceil(8));
        out
    }

    pub fn from_bytes(bytes: &[u8], len: usize) -> Option<Self> {
        if bytes.len() != len.div_ceil(8) {
            return None;
        }
        let mut words = vec![0u64; len.div_ceil(64)];
        for (i, &b) in bytes.iter().enumerate() {
            words[i / 8] |= (b as u64) << (8 * (i % 8));
        }
        Some(Self { words, len })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceMatrix {
    labels: Vec<String>,
    primes: PrimeList,
    traces: Vec<i16>,
    bad: BitSet,
    row_index: HashMap<String, usize>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MatrixShapeError {
    #[error("trace data has {got} entries, expected {expected}")]
    Traces { expected: usize, got: usize },
    #[error("bad-flag bitset has {got} bits, expected {expected}")]
    Flags { expected: usize, got: usize },
    #[error("duplicate curve label `{0}`")]
    DuplicateLabel(String),
}

impl TraceMatrix {
    pub fn from_parts(
        labels: Vec<String>,
        primes: PrimeList,
        traces: Vec<i16>,
        bad: BitSet,
    ) -> Result<Self, MatrixShapeError> {
        let expected = labels.len() * primes.len();
        if traces.len() != expected {
            return Err(MatrixShapeError::Traces {
                expected,
                got: traces.len(),
            });
        }
        if bad.len() != expected {
            return Err(MatrixShapeError::Flags {
                expected,
                got: bad.len(),
            });
        }
        let mut row_index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if row_index.insert(l.clone(), i).is_some() {
                return Err(MatrixShapeError::DuplicateLabel(l.clone()));
            }
        }
        Ok(Self {
            labels,
            primes,
            traces,
            bad,
            row_index,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn primes(&self) -> &PrimeList {
        &self.primes
    }

    pub fn n_curves(&self) -> usize {
        self.labels.len()
    }

    pub fn n_primes(&self) -> usize {
        self.primes.len()
    }

    pub fn row(&self, i: usize) -> &[i16] {
        let k = self.n_primes();
        &self.traces[i * k..(i + 1) * k]
    }

    pub fn get(&self, i: usize, j: usize) -> i16 {
        self.traces[i * self.n_primes() + j]
    }

    pub fn is_bad(&self, i: usize, j: usize) -> bool {
        self.bad.get(i * self.n_primes() + j)
    }

    pub fn row_of(&self, label: &str) -> Option<usize> {
        self.row_index.get(label).copied()
    }

    pub fn traces(&self) -> &[i16] {
        &self.traces
    }

    pub fn bad_flags(&self) -> &BitSet {
        &self.bad
    }
}

/// Compute a_p for every curve of `table` at every prime of `primes`.
///
/// Output is independent of the number of worker threads. Every entry is
/// checked: good primes against the Hasse bound, bad primes against {−1, 0, 1}.
pub fn build_trace_matrix(
    table: &CurveTable,
    primes: &PrimeList,
) -> Result<TraceMatrix, TraceError> {
    let ps = primes.as_slice();
    let k = ps.len();
    let n = table.len();
    let tables: Vec<ResidueTable> = exec::map_range(k, |j| ResidueTable::new(ps[j]));
    let records = table.records();
    let mut traces = vec![0i16; n * k];
    let failure: Mutex<Option<TraceError>> = Mutex::new(None);

    if k > 0 {
        exec::for_each_chunk_mut(&mut traces, TILE_ROWS * k, |tile, out| {
            let first = tile * TILE_ROWS;
            let rows = out.len() / k;
            for (j, rt) in tables.iter().enumerate() {
                let p = ps[j];
                for r in 0..rows {
                    let rec = &records[first + r];
                    let ap = ap_with_table(&rec.a_invariants, rec.conductor, rt);
                    let bad = rec.conductor.is_multiple_of(p as u64);
                    let violation = if bad {
                        (ap.abs() > 1).then(|| TraceError::BadPrimeValue {
                            label: rec.label.clone(),
                            p,
                            ap,
                        })
                    } else {
                        ((ap as i64) * (ap as i64) > 4 * p as i64).then(|| TraceError::Hasse {
                            label: rec.label.clone(),
                            p,
                            ap,
                        })
                    };
                    if let Some(e) = violation {
                        failure.lock().unwrap().get_or_insert(e);
                    }
                    out[r * k + j] = ap as i16;
                }
            }
        });
    }
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let mut bad = BitSet::new(n * k);
    for (i, rec) in records.iter().enumerate() {
        for (j, &p) in ps.iter().enumerate() {
            if rec.conductor % p as u64 == 0 {
                bad.set(i * k + j, true);
            }
        }
    }
    let labels = records.iter().map(|r| r.label.clone()).collect();
    Ok(TraceMatrix::from_parts(labels, primes.clone(), traces, bad)
        .expect("shape follows construction"))
}

/// Like [`build_trace_matrix`], but computes one row per isogeny class and
/// copies it to the other members (a_p is an isogeny invariant).
pub fn build_trace_matrix_by_class(
    table: &CurveTable,
    primes: &PrimeList,
) -> Result<TraceMatrix, TraceError> {
    let records = table.records();
    let reps: Vec<CurveRecord> = table
        .classes()
        .values()
        .map(|members| records[members[0]].clone())
        .collect();
    let rep_table = CurveTable::from_records(reps).expect("distinct class representatives");
    let rep_matrix = build_trace_matrix(&rep_table, primes)?;
    let k = primes.len();
    let mut traces = Vec::with_capacity(records.len() * k);
    let mut bad = BitSet::new(records.len() * k);
    for (i, rec) in records.iter().enumerate() {
        let rep = &table.classes()[&rec.isogeny_class][0];
        let row = rep_matrix
            .row_of(&records[*rep].label)
            .expect("representative present");
        traces.extend_from_slice(rep_matrix.row(row));
        for (j, &p) in primes.as_slice().iter().enumerate() {
            if rec.conductor % p as u64 == 0 {
                bad.set(i * k + j, true);
            }
        }
    }
    let labels = records.iter().map(|r| r.label.clone()).collect();
    Ok(TraceMatrix::from_parts(labels, primes.clone(), traces, bad)
        .expect("shape follows construction"))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn rec(label: &str, a: [i128; 5], n: u64) -> CurveRecord {
        CurveRecord {
            label: label.into(),
            isogeny_class: crate::curves::isogeny_class_of(label).into(),
            a_invariants: a,
            conductor: n,
            rank: 0,
            root_number: 1,
            real_period: 1.0,
            regulator: 1.0,
            tamagawa_product: 1,
            torsion_order: 1,
            sha_an: 1.0,
            l_value: 1.0,
        }
    }

    #[test]
    fn e11a1_row() {
        let t = CurveTable::from_records(vec![rec("11a1", [0, -1, 1, -10, -20], 11)]).unwrap();
        let m = build_trace_matrix(&t, &PrimeList::first(5)).unwrap();
        assert_eq!(m.row(0), &[-2, -1, 1, -2, 1]);
        assert!(m.is_bad(0, 4));
        assert!(!m.is_bad(0, 3));
    }

    #[test]
    fn empty_table() {
        let m = build_trace_matrix(&CurveTable::default(), &PrimeList::default()).unwrap();
        assert_eq!(m.n_curves(), 0);
        assert_eq!(m.n_primes(), 500);
    }

    #[test]
    fn isogenous_curves_share_good_traces() {
        let t = CurveTable::from_records(vec![
            rec("11a1", [0, -1, 1, -10, -20], 11),
            rec("11a2", [0, -1, 1, -7820, -263580], 11),
            rec("11a3", [0, -1, 1, 0, 0], 11),
        ])
        .unwrap();
        let m = build_trace_matrix(&t, &PrimeList::first(200)).unwrap();
        assert_eq!(m.row(0), m.row(1));
        assert_eq!(m.row(0), m.row(2));
        let shared = build_trace_matrix_by_class(&t, &PrimeList::first(200)).unwrap();
        assert_eq!(shared, m);
    }

    #[test]
    fn bitset_bytes_round_trip() {
        let mut b = BitSet::new(77);
        for i in [0, 5, 63, 64, 76] {
            b.set(i, true);
        }
        let back = BitSet::from_bytes(&b.to_bytes(), 77).unwrap();
        assert_eq!(back, b);
        assert!(BitSet::from_bytes(&[0u8; 3], 77).is_none());
    }
}
