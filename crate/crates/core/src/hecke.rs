//! Dirichlet coefficients a_n from prime traces.

use crate::pointcount::TraceError;
use crate::primes::smallest_prime_factors;

/// a_1..a_{n_max} (index 0 holds a_1) from traces at every prime ≤ n_max.
///
/// Good p: a_{p^{k+1}} = a_p a_{p^k} − p a_{p^{k−1}}; bad p: a_{p^k} = a_p^k;
/// coprime factors multiply.
pub fn extend_an(
    primes: &[u32],
    ap: &[i64],
    conductor: u64,
    n_max: usize,
) -> Result<Vec<i64>, TraceError> {
    assert_eq!(primes.len(), ap.len(), "one trace per prime");
    let mut a = vec![0i64; n_max + 1];
    if n_max == 0 {
        return Ok(Vec::new());
    }
    a[1] = 1;
    let spf = smallest_prime_factors(n_max);
    for n in 2..=n_max {
        let p = spf[n] as usize;
        let mut m = n;
        while m % p == 0 {
            m /= p;
        }
        if m > 1 {
            a[n] = a[n / m] * a[m];
            continue;
        }
        let trace = |q: usize| -> Result<i64, TraceError> {
            primes
                .binary_search(&(q as u32))
                .map(|i| ap[i])
                .map_err(|_| TraceError::MissingPrime(q as u32))
        };
        let a_p = trace(p)?;
        a[n] = if n == p {
            a_p
        } else if conductor.is_multiple_of(p as u64) {
            a_p * a[n / p]
        } else {
            a_p * a[n / p] - p as i64 * a[n / (p * p)]
        };
    }
    a.remove(0);
    Ok(a)
}
