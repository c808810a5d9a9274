//! Realized measures from noisy tick prices.
//!
//! The pipeline per market-day is: detect jumps on the raw session
//! ([`jumps`]), estimate signed jump variations from local window means,
//! subtract the estimated jump sizes from all post-jump ticks, and hand the
//! adjusted series to one of three integrated-variance estimators:
//!
//! * [`msrv`] - multi-scale realized variance with exact noise-cancelling
//!   weights (the workhorse);
//! * [`arp`] - adaptive robust pre-averaging with log-truncation, for
//!   heavy-tailed data;
//! * [`paremedi`] - pre-averaging with an autocovariance correction, for
//!   serially dependent noise.
//!
//! [`daily`] assembles the per-day panels (including the squared overnight
//! return and the lunch-break composite) that the daily filter consumes.

pub mod arp;
pub mod daily;
pub mod jumps;
pub mod msrv;
pub mod paremedi;

pub use arp::arp;
pub use daily::{build_daily_measures, DailyMeasures, EstimatorKind, JumpEstimate, MeasureOptions};
pub use jumps::{detect_jumps, jump_adjusted, signed_jump_variations, DetectedJump};
pub use msrv::{msrv, msrv_default};
pub use paremedi::paremedi;

/// Pre-averaging weight `g(x) = x ∧ (1 - x)`, extended by zero outside
/// `(0, 1)`.
pub(crate) fn g_weight(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        x.min(1.0 - x)
    }
}

/// Normalized squared-weight sum `(1/w) Σ g²(k/w)`.
pub(crate) fn phi_weight(w: usize) -> f64 {
    let mut s = 0.0;
    for k in 0..w {
        let g = g_weight(k as f64 / w as f64);
        s += g * g;
    }
    s / w as f64
}

/// Squared-increment sum of the weight profile, `Σ_j (Δg)²` over the
/// `w + 1` gaps of the profile including both zero endpoints.
pub(crate) fn psi_weight(w: usize) -> f64 {
    let mut s = 0.0;
    let mut prev = 0.0;
    for j in 1..=w {
        let g = g_weight(j as f64 / w as f64);
        let d = g - prev;
        s += d * d;
        prev = g;
    }
    s
}

/// Weighted pre-averaged increment `Σ_{r=0}^{w-1} g(r/w)(y[k+r+1] - y[k+r])`.
pub(crate) fn preaveraged(y: &[f64], k: usize, w: usize) -> f64 {
    let mut s = 0.0;
    for r in 1..w {
        s += g_weight(r as f64 / w as f64) * (y[k + r + 1] - y[k + r]);
    }
    s
}
