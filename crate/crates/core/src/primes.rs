use serde::Serialize;

/// Default number of primes in a trace matrix (last prime 3571).
pub const DEFAULT_PRIME_COUNT: usize = 500;

/// Strictly increasing list of the first K primes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PrimeList {
    primes: Vec<u32>,
}

impl PrimeList {
    /// The first `k` primes.
    pub fn first(k: usize) -> Self {
        if k == 0 {
            return Self { primes: Vec::new() };
        }
        // p_k < k (ln k + ln ln k) for k ≥ 6
        let kf = k.max(6) as f64;
        let bound = (kf * (kf.ln() + kf.ln().ln())).ceil() as usize + 10;
        let mut primes = primes_up_to(bound as u32);
        primes.truncate(k);
        Self { primes }
    }

    /// Wrap an explicit list; returns `None` unless strictly increasing primes.
    pub fn from_vec(primes: Vec<u32>) -> Option<Self> {
        let ok = primes.windows(2).all(|w| w[0] < w[1]) && primes.iter().all(|&p| is_prime(p));
        ok.then_some(Self { primes })
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.primes
    }

    pub fn len(&self) -> usize {
        self.primes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primes.is_empty()
    }

    pub fn index_of(&self, p: u32) -> Option<usize> {
        self.primes.binary_search(&p).ok()
    }
}

impl Default for PrimeList {
    fn default() -> Self {
        Self::first(DEFAULT_PRIME_COUNT)
    }
}

/// All primes ≤ n (sieve of Eratosthenes).
pub fn primes_up_to(n: u32) -> Vec<u32> {
    let n = n as usize;
    if n < 2 {
        return Vec::new();
    }
    let mut composite = vec![false; n + 1];
    let mut out = Vec::new();
    for i in 2..=n {
        if !composite[i] {
            out.push(i as u32);
            let mut j = i * i;
            while j <= n {
                composite[j] = true;
                j += i;
            }
        }
    }
    out
}

pub fn is_prime(n: u32) -> bool {
    if n < 2 {
        return false;
    }
    if n < 4 {
        return true;
    }
    if n.is_multiple_of(2) || n.is_multiple_of(3) {
        return false;
    }
    let n = n as u64;
    let mut d = 5u64;
    while d * d <= n {
        if n.is_multiple_of(d) || n.is_multiple_of(d + 2) {
            return false;
        }
        d += 6;
    }
    true
}

/// Smallest-prime-factor table for 0..=n (entries 0 and 1 are 0).
pub fn smallest_prime_factors(n: usize) -> Vec<u32> {
    let mut spf = vec![0u32; n + 1];
    for i in 2..=n {
        if spf[i] == 0 {
            let mut j = i;
            while j <= n {
                if spf[j] == 0 {
                    spf[j] = i as u32;
                }
                j += i;
            }
        }
    }
    spf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_list_ends_at_3571() {
        let pl = PrimeList::default();
        assert_eq!(pl.len(), 500);
        assert_eq!(*pl.as_slice().last().unwrap(), 3571);
        assert!(pl.as_slice().iter().all(|&p| is_prime(p)));
    }

    #[test]
    fn small_lists() {
        assert_eq!(PrimeList::first(5).as_slice(), &[2, 3, 5, 7, 11]);
        assert!(PrimeList::first(0).is_empty());
        assert!(PrimeList::from_vec(vec![2, 4]).is_none());
        assert!(PrimeList::from_vec(vec![3, 2]).is_none());
    }

    #[test]
    fn spf_matches_trial_division() {
        let spf = smallest_prime_factors(1000);
        for n in 2..=1000usize {
            let p = (2..=n).find(|d| n % d == 0).unwrap();
            assert_eq!(spf[n] as usize, p);
        }
    }
}
