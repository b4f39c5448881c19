//! Frobenius-trace murmurations and BSD-invariant statistics.

pub mod cache;
pub mod confound;
pub mod curves;
pub mod diagnostics;
pub mod exec;
pub mod hecke;
pub mod lfunc;
pub mod pointcount;
pub mod primes;
pub mod profile;
pub mod savgol;
pub mod special;
pub mod spectral;
pub mod stats;
pub mod stratify;
pub mod traces;
pub mod windows;
pub mod zerostats;
