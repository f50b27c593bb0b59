//! Savitzky-Golay smoothing.
//!
//! Each output point is the value at that point of a least-squares
//! polynomial fitted to the surrounding window. Near the ends the window is
//! truncated to the available samples, which makes it one-sided; the
//! polynomial order drops if the truncated window is too short to support it.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub fn savgol_smooth(series: &[f64], window: usize, poly_order: usize) -> Result<Vec<f64>> {
    if window % 2 == 0 {
        return Err(Error::validation(format!("window {window} must be odd")));
    }
    if poly_order >= window {
        return Err(Error::validation(format!(
            "polynomial order {poly_order} must be below window {window}"
        )));
    }
    if series.len() < window {
        return Err(Error::validation(format!(
            "series length {} shorter than window {window}",
            series.len()
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("series contains non-finite values"));
    }

    let half = window / 2;
    let n = series.len();
    let centred = fit_weights(half, half, poly_order);

    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let lo = k.saturating_sub(half);
        let hi = (k + half).min(n - 1);
        let value = if k >= half && k + half < n {
            dot(&centred, &series[lo..=hi])
        } else {
            let order = poly_order.min(hi - lo);
            let w = fit_weights(k - lo, hi - k, order);
            dot(&w, &series[lo..=hi])
        };
        out.push(value);
    }
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Weights giving the fitted value at offset 0 from samples at offsets
/// `-left..=right`.
fn fit_weights(left: usize, right: usize, order: usize) -> Vec<f64> {
    let len = left + right + 1;
    let cols = order + 1;
    // Offsets are scaled to [-1, 1] to keep the Vandermonde matrix well conditioned.
    let scale = left.max(right).max(1) as f64;
    let vander = DMatrix::from_fn(len, cols, |r, c| {
        let x = (r as f64 - left as f64) / scale;
        x.powi(c as i32)
    });
    // Row 0 of (V^T V)^-1 V^T is the intercept estimator.
    let gram = vander.transpose() * &vander;
    let mut e0 = DVector::zeros(cols);
    e0[0] = 1.0;
    let solved = gram
        .lu()
        .solve(&e0)
        .expect("Vandermonde Gram matrix is non-singular for distinct offsets");
    (vander * solved).iter().copied().collect()
}
