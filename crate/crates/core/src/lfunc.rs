//! Central values, the completed L-function on the critical line, and
//! low-lying zeros.
//!
//! Arithmetic normalization: Λ(s) = N^{s/2} (2π)^{-s} Γ(s) L(E, s) with
//! Λ(s) = w Λ(2 − s); the critical line is Re s = 1 and its ordinates equal
//! those of the analytic normalization ρ = 1/2 + iγ.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::curves::CurveRecord;
use crate::hecke;
use crate::pointcount::{self, TraceError};
use crate::primes;
use crate::special::upper_gamma;

/// Highest ordinate evaluated; beyond it the e^{πt/2} cancellation in the
/// smoothed sum eats the double-precision budget.
pub const MAX_HEIGHT: f64 = 30.0;
/// Allowed imaginary part of Λ(1 + it) for w = +1.
pub const REALNESS_TOL: f64 = 1e-8;
pub const BISECTION_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LError {
    #[error("{label}: root number {w}; central value vanishes by the functional equation")]
    OddRootNumber { label: String, w: i8 },
    #[error("{label}: {have} coefficients, need n_max >= {need}")]
    Coefficients { label: String, have: usize, need: usize },
    #[error("height {t} beyond supported {MAX_HEIGHT}")]
    Height { t: f64 },
    #[error("{label}: Λ(1+{t}i) has imaginary part {residue:e}")]
    NotReal { label: String, t: f64, residue: f64 },
    #[error("zero CSV line {line}: {reason}")]
    ZeroCsv { line: usize, reason: String },
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LSeries {
    pub label: String,
    pub conductor: u64,
    pub root_number: i8,
    /// a_1..a_{n_max}; index 0 holds a_1.
    pub an: Vec<i64>,
}

/// Coefficients needed to evaluate Λ at height t.
pub fn coefficients_for_height(conductor: u64, t: f64) -> usize {
    ((conductor as f64).sqrt() * (t.abs() + 8.0)).ceil() as usize
}

/// Coefficients needed by [`l_value_series`].
pub fn coefficients_for_central_value(conductor: u64) -> usize {
    ((conductor as f64).sqrt() * 30.0 / (2.0 * PI)).ceil() as usize
}

impl LSeries {
    pub fn from_model(
        label: &str,
        model: &[i128; 5],
        conductor: u64,
        root_number: i8,
        n_max: usize,
    ) -> Result<Self, LError> {
        let ps = primes::primes_up_to(n_max as u32);
        let ap = ps
            .iter()
            .map(|&p| pointcount::ap_at_prime(model, conductor, p).map(i64::from))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            label: label.into(),
            conductor,
            root_number,
            an: hecke::extend_an(&ps, &ap, conductor, n_max)?,
        })
    }

    /// Enough coefficients for both the central value and heights up to `t_max`.
    pub fn for_record(r: &CurveRecord, t_max: f64) -> Result<Self, LError> {
        let n = coefficients_for_height(r.conductor, t_max).max(coefficients_for_central_value(r.conductor));
        Self::from_model(&r.label, &r.a_invariants, r.conductor, r.root_number, n)
    }

    pub fn n_max(&self) -> usize {
        self.an.len()
    }

    fn require_even(&self) -> Result<(), LError> {
        if self.root_number != 1 {
            return Err(LError::OddRootNumber {
                label: self.label.clone(),
                w: self.root_number,
            });
        }
        Ok(())
    }

    fn require(&self, need: usize) -> Result<(), LError> {
        if self.an.len() < need {
            return Err(LError::Coefficients {
                label: self.label.clone(),
                have: self.an.len(),
                need,
            });
        }
        Ok(())
    }
}

/// L(E, 1) = 2 Σ (a_n / n) e^{−2πn/√N}, truncated once the tail bound
/// (|a_n| ≤ 2n) falls below 1e-10.
pub fn l_value_series(series: &LSeries) -> Result<f64, LError> {
    series.require_even()?;
    series.require(coefficients_for_central_value(series.conductor))?;
    let q = 2.0 * PI / (series.conductor as f64).sqrt();
    let ratio = (-q).exp();
    let mut sum = 0.0;
    for (i, &a) in series.an.iter().enumerate() {
        let n = (i + 1) as f64;
        let decay = (-q * n).exp();
        sum += a as f64 / n * decay;
        if 4.0 * decay * ratio / (1.0 - ratio) < 1e-10 {
            break;
        }
    }
    Ok(2.0 * sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalValue {
    pub t: f64,
    pub value: f64,
    /// |Im Λ(1 + it)|, zero in exact arithmetic when w = +1.
    pub imag_residue: f64,
}

/// Λ(1 + it) by the incomplete-gamma smoothed approximate functional equation
/// Λ(s) = Σ a_n [x^{−s} Γ(s, x) + w x^{−(2−s)} Γ(2−s, x)], x = 2πn/√N.
/// The two halves are evaluated independently so the imaginary residue is a
/// genuine accuracy check.
pub fn lambda_critical(series: &LSeries, t: f64) -> Result<CriticalValue, LError> {
    series.require_even()?;
    if !(t.abs() <= MAX_HEIGHT) {
        return Err(LError::Height { t });
    }
    series.require(coefficients_for_height(series.conductor, t))?;
    let s = Complex64::new(1.0, t);
    let s2 = Complex64::new(1.0, -t);
    let q = 2.0 * PI / (series.conductor as f64).sqrt();
    // Each term is bounded by 2|a_n| e^{−x}/x and Λ itself is of size e^{−π|t|/2}.
    let x_cut = PI * t.abs() / 2.0 + 45.0;
    let w = series.root_number as f64;
    let mut sum = Complex64::new(0.0, 0.0);
    for (i, &a) in series.an.iter().enumerate() {
        let x = q * (i + 1) as f64;
        if x > x_cut {
            break;
        }
        if a == 0 {
            continue;
        }
        let lx = x.ln();
        let h1 = (-s * lx).exp() * upper_gamma(s, x);
        let h2 = (-s2 * lx).exp() * upper_gamma(s2, x);
        sum += (h1 + w * h2) * a as f64;
    }
    Ok(CriticalValue {
        t,
        value: sum.re,
        imag_residue: sum.im.abs(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroSet {
    pub label: String,
    pub gammas: Vec<f64>,
    pub k: usize,
    pub t_max: f64,
    /// False when fewer than k zeros lie below t_max.
    pub complete: bool,
}

/// One-eighth of the expected mean zero spacing at conductor N.
pub fn scan_step(conductor: u64) -> f64 {
    2.0 * PI / ((conductor as f64).ln() + 6.0) / 8.0
}

fn checked(series: &LSeries, t: f64) -> Result<f64, LError> {
    let v = lambda_critical(series, t)?;
    if v.imag_residue > REALNESS_TOL {
        return Err(LError::NotReal {
            label: series.label.clone(),
            t,
            residue: v.imag_residue,
        });
    }
    Ok(v.value)
}

/// First `k` zeros of Λ(1 + it) with 0 < t ≤ t_max: grid scan plus bisection.
pub fn locate_zeros(series: &LSeries, k: usize, t_max: f64) -> Result<ZeroSet, LError> {
    locate_zeros_with_step(series, k, t_max, scan_step(series.conductor))
}

pub fn locate_zeros_with_step(series: &LSeries, k: usize, t_max: f64, step: f64) -> Result<ZeroSet, LError> {
    series.require_even()?;
    if !(t_max <= MAX_HEIGHT) {
        return Err(LError::Height { t: t_max });
    }
    let mut gammas = Vec::with_capacity(k);
    let n_steps = (t_max / step).ceil() as usize;
    let mut t_prev = 0.0;
    let mut v_prev = checked(series, 0.0)?;
    for i in 1..=n_steps {
        if gammas.len() >= k {
            break;
        }
        let t = (i as f64 * step).min(t_max);
        let v = checked(series, t)?;
        if v == 0.0 {
            gammas.push(t);
        } else if v_prev != 0.0 && (v > 0.0) != (v_prev > 0.0) {
            let (mut lo, mut hi, mut v_lo) = (t_prev, t, v_prev);
            while hi - lo > BISECTION_TOL {
                let mid = 0.5 * (lo + hi);
                let vm = checked(series, mid)?;
                if vm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (vm > 0.0) == (v_lo > 0.0) {
                    lo = mid;
                    v_lo = vm;
                } else {
                    hi = mid;
                }
            }
            gammas.push(0.5 * (lo + hi));
        }
        t_prev = t;
        v_prev = v;
    }
    Ok(ZeroSet {
        label: series.label.clone(),
        complete: gammas.len() >= k,
        gammas,
        k,
        t_max,
    })
}

/// Zero sets as CSV: `label,gamma1..gammaK,complete,t_max`; missing ordinates
/// of incomplete sets are left empty.
pub fn write_zero_sets<W: Write>(sets: &[ZeroSet], mut w: W) -> Result<(), LError> {
    let k = sets.iter().map(|z| z.k).max().unwrap_or(5);
    let io = |e: std::io::Error| LError::Io(e.to_string());
    let cols: Vec<String> = (1..=k).map(|j| format!("gamma{j}")).collect();
    writeln!(w, "label,{},complete,t_max", cols.join(",")).map_err(io)?;
    for z in sets {
        let g: Vec<String> = (0..k).map(|j| z.gammas.get(j).map(|v| v.to_string()).unwrap_or_default()).collect();
        writeln!(w, "{},{},{},{}", z.label, g.join(","), z.complete, z.t_max).map_err(io)?;
    }
    Ok(())
}

pub fn read_zero_sets<R: BufRead>(r: R) -> Result<Vec<ZeroSet>, LError> {
    let mut lines = r.lines().enumerate();
    let bad = |line: usize, reason: &str| LError::ZeroCsv {
        line,
        reason: reason.into(),
    };
    let header = match lines.next() {
        Some((_, h)) => h.map_err(|e| LError::Io(e.to_string()))?,
        None => return Ok(Vec::new()),
    };
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 4 || cols[0] != "label" || cols[cols.len() - 2] != "complete" || cols[cols.len() - 1] != "t_max" {
        return Err(bad(1, "expected header label,gamma1..gammaK,complete,t_max"));
    }
    let k = cols.len() - 3;
    let mut out = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| LError::Io(e.to_string()))?;
        let ln = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != k + 3 {
            return Err(bad(ln, "wrong field count"));
        }
        let mut gammas = Vec::new();
        for g in &f[1..=k] {
            if g.is_empty() {
                break;
            }
            gammas.push(g.parse::<f64>().map_err(|_| bad(ln, "bad ordinate"))?);
        }
        if gammas.windows(2).any(|w| w[0] >= w[1]) || gammas.iter().any(|&g| !(g > 0.0)) {
            return Err(bad(ln, "ordinates must be positive and strictly increasing"));
        }
        let complete = f[k + 1].parse::<bool>().map_err(|_| bad(ln, "bad complete flag"))?;
        let t_max = f[k + 2].parse::<f64>().map_err(|_| bad(ln, "bad t_max"))?;
        out.push(ZeroSet {
            label: f[0].to_string(),
            gammas,
            k,
            t_max,
            complete,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const E11A1: [i128; 5] = [0, -1, 1, -10, -20];
    const L_11A1: f64 = 0.253841860855911;

    fn s11(n: usize) -> LSeries {
        LSeries::from_model("11a1", &E11A1, 11, 1, n).unwrap()
    }

    #[test]
    fn central_value_of_11a1() {
        let l = l_value_series(&s11(200)).unwrap();
        assert!((l - L_11A1).abs() < 1e-10, "{l}");
        let l2 = l_value_series(&s11(400)).unwrap();
        assert!((l - l2).abs() < 1e-10);
    }

    #[test]
    fn shortfalls_and_odd_sign_refused() {
        assert!(matches!(l_value_series(&s11(3)), Err(LError::Coefficients { need: 16, .. })));
        let odd = LSeries::from_model("37a1", &[0, 0, 1, -1, 0], 37, -1, 100).unwrap();
        assert!(matches!(l_value_series(&odd), Err(LError::OddRootNumber { .. })));
        assert!(matches!(lambda_critical(&s11(100), 40.0), Err(LError::Height { .. })));
    }

    #[test]
    fn lambda_at_center() {
        let v = lambda_critical(&s11(200), 0.0).unwrap();
        let want = 11f64.sqrt() / (2.0 * PI) * L_11A1;
        assert!((v.value - want).abs() < 1e-10);
        assert!((v.value - 0.1340).abs() < 5e-5);
    }

    #[test]
    fn even_and_real_on_the_line() {
        let s = s11(200);
        for i in 1..40 {
            let t = 0.37 * i as f64;
            let a = lambda_critical(&s, t).unwrap();
            let b = lambda_critical(&s, -t).unwrap();
            assert!((a.value - b.value).abs() < 1e-12);
            assert!(a.imag_residue < REALNESS_TOL);
        }
    }

    #[test]
    fn first_zero_of_11a1() {
        let z = locate_zeros(&s11(200), 3, 12.0).unwrap();
        assert!(z.complete);
        assert!((z.gammas[0] - 6.362613894713).abs() < 1e-5, "{:?}", z.gammas);
        assert!(z.gammas.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn zero_csv_round_trip() {
        let sets = vec![
            ZeroSet {
                label: "a".into(),
                gammas: vec![1.5, 2.25, 3.0],
                k: 3,
                t_max: 10.0,
                complete: true,
            },
            ZeroSet {
                label: "b".into(),
                gammas: vec![4.0],
                k: 3,
                t_max: 10.0,
                complete: false,
            },
        ];
        let mut buf = Vec::new();
        write_zero_sets(&sets, &mut buf).unwrap();
        assert_eq!(read_zero_sets(buf.as_slice()).unwrap(), sets);
        let bad = "label,gamma1,gamma2,complete,t_max\nx,2.0,1.0,true,5\n";
        assert!(matches!(read_zero_sets(bad.as_bytes()), Err(LError::ZeroCsv { line: 2, .. })));
    }
}
