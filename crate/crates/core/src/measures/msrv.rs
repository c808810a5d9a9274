//! Multi-scale realized variance.
//!
//! Combines subsampled quadratic variations across `M` lags `K_k = k + C`
//! with quadratic weights chosen so that the signal passes at unit gain
//! (`Σ a_k = 1`) while the iid-noise contribution cancels (`Σ a_k / K_k = 0`),
//! plus a two-scale correction that removes the remaining O(1) noise term
//! exactly in expectation.

use crate::error::Error;
use crate::Result;

/// Default number of scales.
pub const DEFAULT_SCALES: usize = 11;
/// Default scale offset; the smallest lag used is `C + 1`.
pub const DEFAULT_OFFSET: usize = 4;

/// Weight `a_k` for scale index `k` (1-based) with `M` scales and offset `C`.
pub fn msrv_weight(k: usize, m_scales: usize, c_offset: usize) -> f64 {
    let m = m_scales as f64;
    let k = k as f64;
    let c = c_offset as f64;
    12.0 * (k + c) * (k - m / 2.0 - 0.5) / (m * (m * m - 1.0))
}

/// Lag-`K` subsampled quadratic variation `(1/K) Σ_j (y[j+K] - y[j])²`.
fn subsampled_qv(y: &[f64], k_lag: usize) -> f64 {
    let mut s = 0.0;
    for j in 0..=(y.len() - 1 - k_lag) {
        let d = y[j + k_lag] - y[j];
        s += d * d;
    }
    s / k_lag as f64
}

/// Multi-scale realized variance of one session of (jump-adjusted) tick
/// prices with `M = m_scales` scales at lags `C+1 .. C+M`.
pub fn msrv(y: &[f64], m_scales: usize, c_offset: usize) -> Result<f64> {
    if m_scales < 3 {
        return Err(Error::invalid("need at least three scales"));
    }
    let m = y.len().saturating_sub(1);
    let k_max = m_scales + c_offset;
    if m <= k_max {
        return Err(Error::data(format!(
            "session with {m} increments is shorter than the largest scale {k_max}"
        )));
    }
    let mut rv = 0.0;
    for k in 1..=m_scales {
        rv += msrv_weight(k, m_scales, c_offset) * subsampled_qv(y, k + c_offset);
    }
    let zeta = ((m_scales + c_offset) * (c_offset + 1)) as f64
        / ((m + 1) * (m_scales - 1)) as f64;
    rv += zeta * (subsampled_qv(y, c_offset + 1) - subsampled_qv(y, k_max));
    Ok(rv)
}

/// [`msrv`] at the default 11 scales, offset 4.
pub fn msrv_default(y: &[f64]) -> Result<f64> {
    msrv(y, DEFAULT_SCALES, DEFAULT_OFFSET)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn weight_identities_hold_exactly() {
        for (m_scales, c) in [(11usize, 4usize), (3, 0), (5, 2), (8, 1), (16, 7)] {
            let mut sum = 0.0;
            let mut sum_over_k = 0.0;
            for k in 1..=m_scales {
                let a = msrv_weight(k, m_scales, c);
                sum += a;
                sum_over_k += a / (k + c) as f64;
            }
            assert!((sum - 1.0).abs() < 1e-12, "gain at M={m_scales}, C={c}");
            assert!(sum_over_k.abs() < 1e-12, "noise leak at M={m_scales}, C={c}");
        }
    }

    #[test]
    fn frozen_weight_and_correction_values() {
        // a_1 = 12 * 5 * (-5) / 1320
        assert!((msrv_weight(1, 11, 4) - (-0.2272727272727273)).abs() < 1e-15);
        // correction multiplier at m = 2160: 15 * 5 / (2161 * 10)
        let m = 2160usize;
        let zeta = ((11 + 4) * (4 + 1)) as f64 / ((m + 1) * 10) as f64;
        assert!((zeta - 75.0 / 21610.0).abs() < 1e-18);
        assert!((zeta - 3.4706154558075e-3).abs() < 1e-15);
    }

    #[test]
    fn constant_and_affine_guards() {
        let y = vec![0.3; 256];
        assert_eq!(msrv_default(&y).unwrap(), 0.0);
        assert!(msrv(&y, 2, 4).is_err());
        assert!(msrv(&vec![0.0; 15], 11, 4).is_err());
    }

    #[test]
    fn translation_invariant_and_quadratically_homogeneous() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut y = vec![0.0; 721];
        for i in 1..y.len() {
            y[i] = y[i - 1] + 1e-3 * rng.sample::<f64, _>(StandardNormal);
        }
        let base = msrv_default(&y).unwrap();
        let shifted: Vec<f64> = y.iter().map(|v| v + 3.7).collect();
        assert!((msrv_default(&shifted).unwrap() - base).abs() < 1e-15);
        let scaled: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        assert!((msrv_default(&scaled).unwrap() - 4.0 * base).abs() < 1e-10);
    }

    /// Exact finite-sample expectation under iid Gaussian increments with
    /// per-step variance v and iid noise: E = v(m - 19) + 75 v/(m + 1),
    /// independent of the noise variance (the noise terms cancel exactly).
    fn exact_mean(v: f64, m: usize) -> f64 {
        v * (m as f64 - 19.0) + 75.0 * v / (m as f64 + 1.0)
    }

    #[test]
    fn matches_exact_expectation_with_and_without_noise() {
        let m = 720usize;
        let v = 1e-4 / m as f64;
        let mut rng = ChaCha12Rng::seed_from_u64(88);
        for noise_sd in [0.0, 5e-4] {
            let reps = 300;
            let mut vals = Vec::with_capacity(reps);
            for _ in 0..reps {
                let mut x = 0.0;
                let mut y = Vec::with_capacity(m + 1);
                for i in 0..=m {
                    if i > 0 {
                        x += v.sqrt() * rng.sample::<f64, _>(StandardNormal);
                    }
                    let e: f64 = rng.sample(StandardNormal);
                    y.push(x + noise_sd * e);
                }
                vals.push(msrv_default(&y).unwrap());
            }
            let mean = vals.iter().sum::<f64>() / reps as f64;
            let sd = (vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>()
                / (reps - 1) as f64)
                .sqrt();
            let se = sd / (reps as f64).sqrt();
            let expect = exact_mean(v, m);
            assert!(
                (mean - expect).abs() < 4.0 * se,
                "noise sd {noise_sd}: mean {mean:.3e} vs exact {expect:.3e} (se {se:.3e})"
            );
            // sanity: the raw quadratic variation would be wildly biased
            if noise_sd > 0.0 {
                let raw_bias = 2.0 * m as f64 * noise_sd * noise_sd;
                assert!((mean - expect).abs() < raw_bias / 50.0);
            }
        }
    }

    #[test]
    fn noise_only_series_is_debiased() {
        let m = 2160usize;
        let sd = 1e-3;
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let reps = 200;
        let mut vals = Vec::with_capacity(reps);
        for _ in 0..reps {
            let y: Vec<f64> =
                (0..=m).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
            vals.push(msrv_default(&y).unwrap());
        }
        let mean = vals.iter().sum::<f64>() / reps as f64;
        let sd_hat = (vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>()
            / (reps - 1) as f64)
            .sqrt();
        assert!(mean.abs() < 4.0 * sd_hat / (reps as f64).sqrt() + 1e-9);
        // raw noise energy is 2 m sd^2; the estimator must be orders below it
        assert!(mean.abs() < 2.0 * m as f64 * sd * sd / 1000.0);
    }
}
