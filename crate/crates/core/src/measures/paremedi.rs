//! Pre-averaging estimator with autocovariance noise correction.
//!
//! The first term is a plain pre-averaged quadratic sum; the second removes
//! the noise contribution using lagged cross products of widely separated
//! increments, which estimate the noise autocovariance at each lag without
//! assuming the noise is iid. The pre-averaging window adapts to the
//! estimated noise-to-signal ratio through a pilot variance estimate.

use crate::error::Error;
use crate::measures::msrv::msrv_default;
use crate::measures::{g_weight, phi_weight, preaveraged};
use crate::Result;

/// Separation between the two increments of each noise cross product;
/// large enough that signal increments decorrelate.
pub const K0: usize = 10;
/// Window constant for the adaptive pre-averaging span.
pub const K_PHI: f64 = 4.78;

/// Largest autocovariance lag used: `floor(log m)`, capped at [`K0`] so the
/// separated windows stay valid.
fn max_lag(m: usize) -> usize {
    ((m as f64).ln().floor() as usize).clamp(1, K0)
}

/// Weight-profile autocovariance coefficient: the factor multiplying the
/// noise autocovariance at lag `sigma` inside a squared pre-averaged
/// increment, scaled by `w`.
pub fn phi_bar(w: usize, sigma: i64) -> f64 {
    let dg = |k: i64| {
        g_weight((k + 1) as f64 / w as f64) - g_weight(k as f64 / w as f64)
    };
    let mut s = 0.0;
    for k in sigma.min(0)..=(w as i64) {
        s += dg(k) * dg(k - sigma);
    }
    w as f64 * s
}

/// Pre-averaging/autocovariance-corrected estimate of one session's
/// integrated variance from (jump-adjusted) tick prices.
pub fn paremedi(y: &[f64]) -> Result<f64> {
    let m = y.len().saturating_sub(1);
    let lag = max_lag(m);
    if m < 2 * (K0 + lag) + 4 {
        return Err(Error::data(format!(
            "session with {m} increments is too short for the noise windows"
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("non-finite tick price"));
    }

    // noise autocovariance at lags 0..=lag from widely separated increment
    // cross products; with a nonnegative lag the two difference windows
    // never overlap, so the diffusion part has mean zero, while the noise
    // part reduces to the lag-s autocovariance
    let mut gamma_hat = vec![0.0; lag + 1];
    for (s, gh) in gamma_hat.iter_mut().enumerate() {
        let mut acc = 0.0;
        let mut count = 0usize;
        for k in K0..=(m - s - K0) {
            acc += (y[k + s] - y[k + s + K0]) * (y[k] - y[k - K0]);
            count += 1;
        }
        *gh = acc / count as f64;
    }

    // window from the noise-to-signal ratio with a pilot variance estimate;
    // the noise level is the long-run variance over the estimated lags
    let r: f64 = gamma_hat[0] + 2.0 * gamma_hat[1..].iter().sum::<f64>();
    let pilot = msrv_default(y)?.max(1e-12);
    let varpi = K_PHI * r.max(0.0).sqrt() / pilot.sqrt();
    let w_max = (m - K0 - lag - 2).max(2);
    let w = ((varpi * (m as f64).sqrt()).ceil() as usize).clamp(2, w_max);
    let phi = phi_weight(w);

    let mut first = 0.0;
    for k in 0..=(m - w) {
        let p = preaveraged(y, k, w);
        first += p * p;
    }
    first /= w as f64 * phi;

    // each squared pre-averaged increment carries a noise inflation of
    // sum_sigma phi_bar(w, sigma) gamma(sigma) / w; remove it with the
    // estimated autocovariances, folding negative lags in by symmetry
    let mut bias = phi_bar(w, 0) * gamma_hat[0];
    for (s, gh) in gamma_hat.iter().enumerate().skip(1) {
        bias += 2.0 * phi_bar(w, s as i64) * gh;
    }
    let second = (m - w + 1) as f64 * bias / ((w * w) as f64 * phi);

    Ok(first - second)
}
