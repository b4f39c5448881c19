//! Savitzky–Golay detrending.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::stats::{self, StatsError};
use crate::windows::WindowSeries;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetrendError {
    #[error("series of length {len} is shorter than the filter window {window}")]
    TooShort { len: usize, window: usize },
    #[error("filter window must be odd and exceed the degree (window {window}, degree {degree})")]
    BadWindow { window: usize, degree: usize },
    #[error("series has empty windows; detrending needs a gap-free series")]
    Gaps,
}

/// Detrended residuals at the interior centers of a series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residuals {
    pub centers: Vec<f64>,
    pub values: Vec<f64>,
}

/// Least-squares weights that evaluate a degree-`degree` local fit at the
/// window center.
pub fn smoothing_weights(window: usize, degree: usize) -> Result<Vec<f64>, DetrendError> {
    if window.is_multiple_of(2) || window <= degree {
        return Err(DetrendError::BadWindow { window, degree });
    }
    let half = (window / 2) as f64;
    // Offsets scaled to [-1, 1] keep the normal equations well conditioned.
    let u: Vec<f64> = (0..window)
        .map(|i| if half > 0.0 { (i as f64 - half) / half } else { 0.0 })
        .collect();
    let v = DMatrix::from_fn(window, degree + 1, |i, j| u[i].powi(j as i32));
    let gram = v.transpose() * &v;
    let chol = gram
        .cholesky()
        .ok_or(DetrendError::BadWindow { window, degree })?;
    // Fitted value at u = 0 is the constant coefficient: e0ᵀ (VᵀV)⁻¹ Vᵀ.
    let mut e0 = DVector::zeros(degree + 1);
    e0[0] = 1.0;
    let c = chol.solve(&e0);
    Ok((&v * c).iter().copied().collect())
}

/// value − local polynomial fit, emitted only where the window is fully interior.
pub fn savgol_residuals(values: &[f64], window: usize, degree: usize) -> Result<Vec<f64>, DetrendError> {
    if values.len() < window {
        return Err(DetrendError::TooShort {
            len: values.len(),
            window,
        });
    }
    let w = smoothing_weights(window, degree)?;
    let half = window / 2;
    Ok(values
        .windows(window)
        .map(|seg| {
            let fit: f64 = seg.iter().zip(&w).map(|(x, c)| x * c).sum();
            seg[half] - fit
        })
        .collect())
}

/// Detrend a window series (default filter: window 101, degree 3).
pub fn savgol_detrend(series: &WindowSeries, window: usize, degree: usize) -> Result<Residuals, DetrendError> {
    if series.has_gaps() {
        return Err(DetrendError::Gaps);
    }
    let values: Vec<f64> = series.values.iter().map(|v| v.unwrap_or(0.0)).collect();
    let res = savgol_residuals(&values, window, degree)?;
    let half = window / 2;
    Ok(Residuals {
        centers: series.centers[half..half + res.len()].to_vec(),
        values: res,
    })
}

/// Pearson correlation of two residual series over their common centers.
pub fn residual_correlation(a: &Residuals, b: &Residuals) -> Result<f64, StatsError> {
    let (xa, xb) = align(a, b);
    stats::pearson(&xa, &xb)
}

/// Values of `a` and `b` at the centers they share.
pub fn align(a: &Residuals, b: &Residuals) -> (Vec<f64>, Vec<f64>) {
    let (mut i, mut j) = (0, 0);
    let (mut xa, mut xb) = (Vec::new(), Vec::new());
    while i < a.centers.len() && j < b.centers.len() {
        let (ca, cb) = (a.centers[i], b.centers[j]);
        let tol = 1e-9 * ca.abs().max(1.0);
        if (ca - cb).abs() <= tol {
            xa.push(a.values[i]);
            xb.push(b.values[j]);
            i += 1;
            j += 1;
        } else if ca < cb {
            i += 1;
        } else {
            j += 1;
        }
    }
    (xa, xb)
}
