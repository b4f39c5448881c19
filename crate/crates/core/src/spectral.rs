//! Welch power spectra and lagged cross-correlation of residual series.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;
use thiserror::Error;

use crate::stats::{self, StatsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("series of length {len} shorter than one segment ({segment})")]
    TooShort { len: usize, segment: usize },
    #[error("segment length must be ≥ 2 and overlap in [0, 1)")]
    BadParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WelchParams {
    pub segment: usize,
    pub overlap: f64,
}

impl Default for WelchParams {
    fn default() -> Self {
        Self {
            segment: 256,
            overlap: 0.5,
        }
    }
}

/// One-sided power spectral density, frequencies in cycles per sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
    pub segments: usize,
}

impl Spectrum {
    pub fn peak_bin(&self) -> usize {
        self.power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

/// Averaged periodogram over Hann-windowed, mean-removed, overlapping segments.
pub fn welch_psd(x: &[f64], params: WelchParams) -> Result<Spectrum, SpectralError> {
    let n = params.segment;
    if n < 2 || !(0.0..1.0).contains(&params.overlap) {
        return Err(SpectralError::BadParams);
    }
    if x.len() < n {
        return Err(SpectralError::TooShort {
            len: x.len(),
            segment: n,
        });
    }
    let hop = ((n as f64) * (1.0 - params.overlap)).round().max(1.0) as usize;
    // periodic Hann
    let window: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect();
    let wss: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let bins = n / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut segments = 0;
    let mut start = 0;
    while start + n <= x.len() {
        let seg = &x[start..start + n];
        let m = stats::mean(seg);
        for (b, (v, w)) in buf.iter_mut().zip(seg.iter().zip(&window)) {
            *b = Complex::new((v - m) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a += c.norm_sqr();
        }
        segments += 1;
        start += hop;
    }
    let scale = 1.0 / (wss * segments as f64);
    let power = acc
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let one_sided = if k == 0 || (n.is_multiple_of(2) && k == n / 2) { 1.0 } else { 2.0 };
            p * scale * one_sided
        })
        .collect();
    Ok(Spectrum {
        freqs: (0..bins).map(|k| k as f64 / n as f64).collect(),
        power,
        segments,
    })
}

/// Pearson correlation of a[t] with b[t + lag] over the overlap, lag in −max_lag..=max_lag.
pub fn cross_correlation(a: &[f64], b: &[f64], max_lag: usize) -> Result<Vec<(i64, f64)>, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len() as i64;
    let max_lag = (max_lag as i64).min(n - 3).max(0);
    let mut out = Vec::with_capacity(2 * max_lag as usize + 1);
    for lag in -max_lag..=max_lag {
        let (sa, sb) = if lag >= 0 {
            (&a[..(n - lag) as usize], &b[lag as usize..])
        } else {
            (&a[(-lag) as usize..], &b[..(n + lag) as usize])
        };
        out.push((lag, stats::pearson(sa, sb)?));
    }
    Ok(out)
}

/// Lag with the largest correlation.
pub fn peak_lag(xc: &[(i64, f64)]) -> Option<(i64, f64)> {
    xc.iter().copied().max_by(|a, b| a.1.total_cmp(&b.1))
}
