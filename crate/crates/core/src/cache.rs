//! Binary trace-matrix cache.
//!
//! Layout, all integers little-endian:
//!
//! | field        | type                                  |
//! |--------------|---------------------------------------|
//! | magic        | `b"MURM"`                             |
//! | version      | u32                                   |
//! | curve count  | u64                                   |
//! | prime count  | u32                                   |
//! | primes       | u32 × prime count                     |
//! | labels       | (u32 byte length, UTF-8 bytes) × curves |
//! | traces       | i16 × curves × primes, row-major      |
//! | bad flags    | bitset, ⌈curves·primes/8⌉ bytes       |

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::primes::PrimeList;
use crate::traces::{BitSet, TraceMatrix};

pub const MAGIC: &[u8; 4] = b"MURM";
pub const FORMAT_VERSION: u32 = 1;

const CHUNK: usize = 1 << 16;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("not a trace cache (magic {0:?})")]
    Magic([u8; 4]),
    #[error("unsupported cache version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("corrupt cache: {0}")]
    Corrupt(String),
}

pub fn persist_trace_matrix(matrix: &TraceMatrix, path: impl AsRef<Path>) -> Result<(), CacheError> {
    let mut w = BufWriter::with_capacity(1 << 20, File::create(path)?);
    write_trace_matrix(matrix, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_trace_matrix(path: impl AsRef<Path>) -> Result<TraceMatrix, CacheError> {
    let mut r = BufReader::with_capacity(1 << 20, File::open(path)?);
    read_trace_matrix(&mut r)
}

pub fn write_trace_matrix<W: Write>(m: &TraceMatrix, w: &mut W) -> Result<(), CacheError> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(m.n_curves() as u64).to_le_bytes())?;
    w.write_all(&(m.n_primes() as u32).to_le_bytes())?;
    for &p in m.primes().as_slice() {
        w.write_all(&p.to_le_bytes())?;
    }
    for l in m.labels() {
        w.write_all(&(l.len() as u32).to_le_bytes())?;
        w.write_all(l.as_bytes())?;
    }
    let mut buf = Vec::with_capacity(2 * CHUNK);
    for chunk in m.traces().chunks(CHUNK) {
        buf.clear();
        buf.extend(chunk.iter().flat_map(|t| t.to_le_bytes()));
        w.write_all(&buf)?;
    }
    w.write_all(&m.bad_flags().to_bytes())?;
    Ok(())
}

fn read_exact_or_corrupt<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<(), CacheError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => CacheError::Corrupt(format!("truncated in {what}")),
        _ => CacheError::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32, CacheError> {
    let mut b = [0u8; 4];
    read_exact_or_corrupt(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_trace_matrix<R: Read>(r: &mut R) -> Result<TraceMatrix, CacheError> {
    let mut magic = [0u8; 4];
    read_exact_or_corrupt(r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(CacheError::Magic(magic));
    }
    let version = read_u32(r, "version")?;
    if version != FORMAT_VERSION {
        return Err(CacheError::Version(version));
    }
    let mut b8 = [0u8; 8];
    read_exact_or_corrupt(r, &mut b8, "curve count")?;
    let n = u64::from_le_bytes(b8) as usize;
    let k = read_u32(r, "prime count")? as usize;
    let mut primes = Vec::with_capacity(k);
    for _ in 0..k {
        primes.push(read_u32(r, "prime list")?);
    }
    let primes = PrimeList::from_vec(primes)
        .ok_or_else(|| CacheError::Corrupt("prime list not strictly increasing primes".into()))?;
    let mut labels = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        let len = read_u32(r, "label block")? as usize;
        if len > 4096 {
            return Err(CacheError::Corrupt(format!("label length {len}")));
        }
        let mut bytes = vec![0u8; len];
        read_exact_or_corrupt(r, &mut bytes, "label block")?;
        labels.push(
            String::from_utf8(bytes).map_err(|_| CacheError::Corrupt("label not UTF-8".into()))?,
        );
    }
    let total = n
        .checked_mul(k)
        .ok_or_else(|| CacheError::Corrupt("dimension overflow".into()))?;
    let mut traces = Vec::with_capacity(total);
    let mut buf = vec![0u8; 2 * CHUNK];
    let mut left = total;
    while left > 0 {
        let take = left.min(CHUNK);
        read_exact_or_corrupt(r, &mut buf[..2 * take], "trace block")?;
        traces.extend(
            buf[..2 * take]
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]])),
        );
        left -= take;
    }
    let mut flag_bytes = vec![0u8; total.div_ceil(8)];
    read_exact_or_corrupt(r, &mut flag_bytes, "bad-flag bitset")?;
    let bad = BitSet::from_bytes(&flag_bytes, total).expect("sized above");
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(CacheError::Corrupt("trailing bytes".into()));
    }
    TraceMatrix::from_parts(labels, primes, traces, bad).map_err(|e| CacheError::Corrupt(e.to_string()))
}
