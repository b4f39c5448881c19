//! Frobenius traces a_p by point counting over F_p.
//!
//! Good primes p ≥ 5 go through the short model y² = x³ − 27c₄x − 54c₆ and a
//! quadratic-character sum over a precomputed residue table. p ∈ {2, 3} use
//! direct enumeration of the full Weierstrass equation. Bad primes count the
//! smooth locus, so a_p comes out as 0 (additive), +1 (split) or −1 (non-split).

use thiserror::Error;

use crate::primes::is_prime;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("prime {0} outside supported range")]
    PrimeTooLarge(u64),
    #[error("curve {label}: {source}")]
    Curve { label: String, source: Box<TraceError> },
    #[error("curve {label}: a_{p} = {ap} violates the Hasse bound")]
    Hasse { label: String, p: u32, ap: i32 },
    #[error("curve {label}: bad-prime a_{p} = {ap} outside {{-1, 0, 1}}")]
    BadPrimeValue { label: String, p: u32, ap: i32 },
    #[error("missing trace for prime {0}")]
    MissingPrime(u32),
}

/// Legendre-symbol table χ(x) for x in 0..p.
#[derive(Debug, Clone)]
pub struct ResidueTable {
    p: u32,
    chi: Vec<i8>,
}

impl ResidueTable {
    pub fn new(p: u32) -> Self {
        let mut chi = vec![-1i8; p as usize];
        chi[0] = 0;
        let pu = p as u64;
        for y in 1..=(p as u64) / 2 {
            chi[((y * y) % pu) as usize] = 1;
        }
        if p == 2 {
            chi[1] = 1;
        }
        Self { p, chi }
    }

    pub fn prime(&self) -> u32 {
        self.p
    }

    #[inline]
    pub fn chi(&self, x: u32) -> i8 {
        self.chi[x as usize]
    }
}

#[inline]
fn red(a: i128, p: u32) -> u64 {
    a.rem_euclid(p as i128) as u64
}

/// a_p for a single (model, prime). Builds its own residue table.
pub fn ap_at_prime(model: &[i128; 5], conductor: u64, p: u32) -> Result<i32, TraceError> {
    if !is_prime(p) {
        return Err(TraceError::NotPrime(p as u64));
    }
    if p > (1u32 << 31) {
        return Err(TraceError::PrimeTooLarge(p as u64));
    }
    Ok(ap_with_table(model, conductor, &ResidueTable::new(p)))
}

/// a_p using a shared residue table for p.
pub fn ap_with_table(model: &[i128; 5], conductor: u64, table: &ResidueTable) -> i32 {
    let p = table.p;
    let bad = conductor.is_multiple_of(p as u64);
    if p < 5 {
        let (affine_smooth, _) = enumerate_points(model, p);
        return p as i32 - affine_smooth as i32 - i32::from(bad);
    }
    if bad {
        return smooth_locus_trace(model, table);
    }
    match short_model(model, p) {
        Some((a, b)) => -character_sum(a, b, table),
        None => {
            let (affine_smooth, _) = enumerate_points(model, p);
            p as i32 - affine_smooth as i32
        }
    }
}

/// (A, B) of y² = x³ + Ax + B over F_p (p ≥ 5), or None if singular there.
fn short_model(model: &[i128; 5], p: u32) -> Option<(u64, u64)> {
    let pm = p as u64;
    let [a1, a2, a3, a4, a6] = model.map(|a| red(a, p));
    let m = |x: u64, y: u64| (x * y) % pm;
    let b2 = (m(a1, a1) + 4 * a2) % pm;
    let b4 = (2 * a4 + m(a1, a3)) % pm;
    let b6 = (m(a3, a3) + 4 * a6) % pm;
    let c4 = (m(b2, b2) + pm - m(24, b4)) % pm;
    let c6 = (m(36, m(b2, b4)) + 2 * pm - m(m(b2, b2), b2) - m(216, b6)) % pm;
    let a = (pm - m(27, c4)) % pm;
    let b = (pm - m(54, c6)) % pm;
    let disc = (m(4, m(m(a, a), a)) + m(27, m(b, b))) % pm;
    (disc != 0).then_some((a, b))
}

/// Σ_x χ(x³ + Ax + B) by third-order finite differences.
fn character_sum(a: u64, b: u64, table: &ResidueTable) -> i32 {
    let p = table.p;
    let chi = &table.chi;
    // f(x) = x³ + Ax + B; Δf = 3x² + 3x + 1 + A; Δ²f = 6x + 6; Δ³f = 6.
    let mut f = b as u32;
    let mut d1 = ((1 + a) % p as u64) as u32;
    let mut d2 = 6 % p;
    let six = 6 % p;
    let mut s: i32 = 0;
    let add = |x: u32, y: u32| {
        let z = x + y;
        if z >= p {
            z - p
        } else {
            z
        }
    };
    for _ in 0..p {
        s += chi[f as usize] as i32;
        f = add(f, d1);
        d1 = add(d1, d2);
        d2 = add(d2, six);
    }
    s
}

/// Bad odd prime: a_p = p − #E_ns(F_p), counted in O(p) via the discriminant in y.
fn smooth_locus_trace(model: &[i128; 5], table: &ResidueTable) -> i32 {
    let p = table.p;
    let pm = p as u64;
    let [a1, a2, a3, a4, a6] = model.map(|a| red(a, p));
    let m = |x: u64, y: u64| (x * y) % pm;
    let b2 = (m(a1, a1) + 4 * a2) % pm;
    let b4 = (2 * a4 + m(a1, a3)) % pm;
    let b6 = (m(a3, a3) + 4 * a6) % pm;
    let inv2 = pm.div_ceil(2);
    let mut smooth_affine: i64 = 0;
    for x in 0..pm {
        // (2y + a1 x + a3)² = 4x³ + b2 x² + 2 b4 x + b6
        let x2 = m(x, x);
        let g = (m(4, m(x2, x)) + m(b2, x2) + m(2 * b4 % pm, x) + b6) % pm;
        if g != 0 {
            smooth_affine += 1 + table.chi(g as u32) as i64;
            continue;
        }
        let y = m(pm - (m(a1, x) + a3) % pm, inv2) % pm;
        // F_x = a1 y − 3x² − 2 a2 x − a4; F_y vanishes by construction.
        let fx = (m(a1, y) + 3 * pm * pm - m(3, x2) - m(2 * a2 % pm, x) - a4) % pm;
        if fx != 0 {
            smooth_affine += 1;
        }
    }
    p as i32 - (smooth_affine as i32 + 1)
}

/// Direct enumeration: (smooth affine points, all affine points).
fn enumerate_points(model: &[i128; 5], p: u32) -> (u64, u64) {
    let pm = p as u64;
    let [a1, a2, a3, a4, a6] = model.map(|a| red(a, p));
    let mut smooth = 0;
    let mut all = 0;
    for x in 0..pm {
        for y in 0..pm {
            let lhs = (y * y + a1 * x % pm * y + a3 * y) % pm;
            let rhs = (x * x % pm * x + a2 * x % pm * x + a4 * x + a6) % pm;
            if lhs != rhs {
                continue;
            }
            all += 1;
            let fx = (a1 * y + 3 * pm * pm - (3 * x * x + 2 * a2 * x + a4) % pm) % pm;
            let fy = (2 * y + a1 * x + a3) % pm;
            if fx != 0 || fy != 0 {
                smooth += 1;
            }
        }
    }
    (smooth, all)
}

#[cfg(test)]
mod tests {
    use super::*;

    const E11A1: [i128; 5] = [0, -1, 1, -10, -20];

    #[test]
    fn residue_table_small() {
        let t = ResidueTable::new(7);
        // squares mod 7: 1, 2, 4
        assert_eq!(
            (0..7).map(|x| t.chi(x)).collect::<Vec<_>>(),
            vec![0, 1, 1, -1, 1, -1, -1]
        );
    }

    #[test]
    fn e11a1_known_traces() {
        let got: Vec<i32> = [2, 3, 5, 7, 11, 13]
            .iter()
            .map(|&p| ap_at_prime(&E11A1, 11, p).unwrap())
            .collect();
        assert_eq!(got, vec![-2, -1, 1, -2, 1, 4]);
    }

    #[test]
    fn rejects_composites() {
        assert_eq!(ap_at_prime(&E11A1, 11, 9), Err(TraceError::NotPrime(9)));
        assert_eq!(ap_at_prime(&E11A1, 11, 1), Err(TraceError::NotPrime(1)));
    }

    #[test]
    fn additive_and_nonsplit_examples() {
        // 27a1: y² + y = x³ − 7, additive at 3.
        assert_eq!(ap_at_prime(&[0, 0, 1, 0, -7], 27, 3).unwrap(), 0);
        // 14a1: [1,0,1,4,-6]; a_2 = -1 (non-split), a_7 = +1 (split).
        assert_eq!(ap_at_prime(&[1, 0, 1, 4, -6], 14, 2).unwrap(), -1);
        assert_eq!(ap_at_prime(&[1, 0, 1, 4, -6], 14, 7).unwrap(), 1);
        // 15a1: a_3 = -1, a_5 = +1.
        assert_eq!(ap_at_prime(&[1, 1, 1, -10, -10], 15, 3).unwrap(), -1);
        assert_eq!(ap_at_prime(&[1, 1, 1, -10, -10], 15, 5).unwrap(), 1);
    }
}
