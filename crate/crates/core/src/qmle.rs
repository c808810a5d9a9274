//! Daily conditional-variance filter and quasi-likelihood estimation.
//!
//! The filter maps daily realized inputs (realized variance, signed jump
//! variation, squared overnight return) to conditional variances through the
//! day-level recursion implied by the continuous-time model:
//!
//! * market 1 on day `i` loads on its own day `i - 1` measures, its own
//!   overnight return into day `i`, and market 2's day `i - 1` measures;
//! * market 2 on day `i` loads on its own day `i - 1` measures, its own
//!   overnight return into day `i`, and market 1's *same-day* measures,
//!   because market 1 has already closed when market 2 opens.
//!
//! `h1_step` / `h2_step` are the single source of truth for that recursion;
//! the simulator drives its ground-truth variances through the same
//! functions so filter and simulator agree to the last bit.
//!
//! Estimation maximizes the Gaussian quasi-likelihood of session-scaled
//! realized variances with an analytic gradient (the filter is affine in
//! each market's nine coordinates) under box constraints, from several
//! deterministic starting points.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::calendar::MarketCalendar;
use crate::error::Error;
use crate::optim::{maximize_in_box, OptimOptions};
use crate::params::{GarchParams, ParamBox, GARCH_COORD_NAMES, GARCH_DIM};
use crate::Result;

/// Conditional variances below this are floored and their parameter
/// tangents zeroed.
pub const H_FLOOR: f64 = 1e-12;

/// One market-day of realized inputs to the recursion.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DayInnovations {
    /// Realized (or integrated) variance over the session.
    pub rv: f64,
    /// Positive-jump variation.
    pub jv_pos: f64,
    /// Negative-jump variation.
    pub jv_neg: f64,
}

/// Daily measure panel for both markets, day-aligned.
///
/// `ov[l][i]` is the squared close-to-open return over the overnight ending
/// at day `i + 1`'s open for market `l + 1`; the first entry is never read
/// by the filter and is conventionally zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DailyData {
    pub rv: [Vec<f64>; 2],
    pub jv_pos: [Vec<f64>; 2],
    pub jv_neg: [Vec<f64>; 2],
    pub ov: [Vec<f64>; 2],
}

impl DailyData {
    pub fn n_days(&self) -> usize {
        self.rv[0].len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_days();
        if n == 0 {
            return Err(Error::data("daily panel is empty"));
        }
        for l in 0..2 {
            if self.rv[l].len() != n
                || self.jv_pos[l].len() != n
                || self.jv_neg[l].len() != n
                || self.ov[l].len() != n
            {
                return Err(Error::data("daily panel columns have unequal lengths"));
            }
            for i in 0..n {
                let vals = [self.rv[l][i], self.jv_pos[l][i], self.jv_neg[l][i], self.ov[l][i]];
                if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::data(format!(
                        "market {} day {} has a negative or non-finite measure",
                        l + 1,
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Sub-panel over the day range `[start, end)` (0-based).
    pub fn window(&self, start: usize, end: usize) -> Result<DailyData> {
        if start >= end || end > self.n_days() {
            return Err(Error::invalid(format!(
                "bad window [{start}, {end}) for a {}-day panel",
                self.n_days()
            )));
        }
        let cut = |v: &[Vec<f64>; 2]| [v[0][start..end].to_vec(), v[1][start..end].to_vec()];
        Ok(DailyData {
            rv: cut(&self.rv),
            jv_pos: cut(&self.jv_pos),
            jv_neg: cut(&self.jv_neg),
            ov: cut(&self.ov),
        })
    }
}

/// Market-1 recursion step: previous own day, overnight into today, and the
/// other market's previous day.
pub fn h1_step(
    p: &GarchParams,
    cal: &MarketCalendar,
    h_prev: f64,
    own_prev: &DayInnovations,
    ov_today: f64,
    other_prev: &DayInnovations,
) -> f64 {
    let l1 = cal.lambda1;
    let l2 = cal.lambda2;
    p.omega1
        + p.gamma1 * h_prev
        + p.alpha1 / l1 * own_prev.rv
        + p.beta1_pos / l1 * own_prev.jv_pos
        + p.beta1_neg / l1 * own_prev.jv_neg
        + p.kappa1 / (1.0 - l1) * ov_today
        + p.alpha12 / l2 * other_prev.rv
        + p.beta12_pos / l2 * other_prev.jv_pos
        + p.beta12_neg / l2 * other_prev.jv_neg
}

/// Market-2 recursion step: previous own day, overnight into today, and
/// market 1's same-day session, which is already closed.
pub fn h2_step(
    p: &GarchParams,
    cal: &MarketCalendar,
    h_prev: f64,
    own_prev: &DayInnovations,
    ov_today: f64,
    other_same_day: &DayInnovations,
) -> f64 {
    let l1 = cal.lambda1;
    let l2 = cal.lambda2;
    p.omega2
        + p.gamma2 * h_prev
        + p.alpha2 / l2 * own_prev.rv
        + p.beta2_pos / l2 * own_prev.jv_pos
        + p.beta2_neg / l2 * own_prev.jv_neg
        + p.kappa2 / (1.0 - l2) * ov_today
        + p.alpha21 / l1 * other_same_day.rv
        + p.beta21_pos / l1 * other_same_day.jv_pos
        + p.beta21_neg / l1 * other_same_day.jv_neg
}

/// Filtered conditional variances with per-day parameter tangents.
///
/// `dh[l][i]` holds the nine derivatives of `h[l][i]` with respect to
/// market `l + 1`'s own coordinate block; derivatives with respect to the
/// other market's block are identically zero.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub h: [Vec<f64>; 2],
    pub dh: [Vec<[f64; 9]>; 2],
    /// Days on which the floor was active, per market.
    pub floored: [usize; 2],
}

/// Runs the filter with the default initialization
/// `h_{l,1} = mean(rv_l) / lambda_l`.
pub fn filter(p: &GarchParams, cal: &MarketCalendar, data: &DailyData) -> Result<FilterOutput> {
    filter_with_init(p, cal, data, None)
}

/// Runs the filter, optionally overriding the day-1 conditional variances.
pub fn filter_with_init(
    p: &GarchParams,
    cal: &MarketCalendar,
    data: &DailyData,
    h_init: Option<[f64; 2]>,
) -> Result<FilterOutput> {
    data.validate()?;
    if !p.is_finite() {
        return Err(Error::invalid("non-finite filter parameters"));
    }
    let n = data.n_days();
    let lam = [cal.lambda1, cal.lambda2];
    let init = match h_init {
        Some(h) => h,
        None => {
            let mut init = [0.0; 2];
            for l in 0..2 {
                let mean: f64 = data.rv[l].iter().sum::<f64>() / n as f64;
                init[l] = (mean / lam[l]).max(H_FLOOR);
            }
            init
        }
    };

    let mut h: [Vec<f64>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut dh: [Vec<[f64; 9]>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut floored = [0usize; 2];
    for l in 0..2 {
        h[l].push(init[l].max(H_FLOOR));
        dh[l].push([0.0; 9]);
    }

    let day = |l: usize, i: usize| DayInnovations {
        rv: data.rv[l][i],
        jv_pos: data.jv_pos[l][i],
        jv_neg: data.jv_neg[l][i],
    };

    for i in 1..n {
        // market 1: own lag, overnight into day i, market-2 lag
        let own = day(0, i - 1);
        let cross = day(1, i - 1);
        let raw = h1_step(p, cal, h[0][i - 1], &own, data.ov[0][i], &cross);
        let prev = dh[0][i - 1];
        if raw < H_FLOOR {
            h[0].push(H_FLOOR);
            dh[0].push([0.0; 9]);
            floored[0] += 1;
        } else {
            h[0].push(raw);
            let mut d = [0.0; 9];
            d[0] = 1.0 + p.gamma1 * prev[0];
            d[1] = h[0][i - 1] + p.gamma1 * prev[1];
            d[2] = own.rv / lam[0] + p.gamma1 * prev[2];
            d[3] = own.jv_pos / lam[0] + p.gamma1 * prev[3];
            d[4] = own.jv_neg / lam[0] + p.gamma1 * prev[4];
            d[5] = data.ov[0][i] / (1.0 - lam[0]) + p.gamma1 * prev[5];
            d[6] = cross.rv / lam[1] + p.gamma1 * prev[6];
            d[7] = cross.jv_pos / lam[1] + p.gamma1 * prev[7];
            d[8] = cross.jv_neg / lam[1] + p.gamma1 * prev[8];
            dh[0].push(d);
        }

        // market 2: own lag, overnight into day i, market-1 same day
        let own = day(1, i - 1);
        let cross = day(0, i);
        let raw = h2_step(p, cal, h[1][i - 1], &own, data.ov[1][i], &cross);
        let prev = dh[1][i - 1];
        if raw < H_FLOOR {
            h[1].push(H_FLOOR);
            dh[1].push([0.0; 9]);
            floored[1] += 1;
        } else {
            h[1].push(raw);
            let mut d = [0.0; 9];
            d[0] = 1.0 + p.gamma2 * prev[0];
            d[1] = h[1][i - 1] + p.gamma2 * prev[1];
            d[2] = own.rv / lam[1] + p.gamma2 * prev[2];
            d[3] = own.jv_pos / lam[1] + p.gamma2 * prev[3];
            d[4] = own.jv_neg / lam[1] + p.gamma2 * prev[4];
            d[5] = data.ov[1][i] / (1.0 - lam[1]) + p.gamma2 * prev[5];
            d[6] = cross.rv / lam[0] + p.gamma2 * prev[6];
            d[7] = cross.jv_pos / lam[0] + p.gamma2 * prev[7];
            d[8] = cross.jv_neg / lam[0] + p.gamma2 * prev[8];
            dh[1].push(d);
        }
    }

    Ok(FilterOutput { h, dh, floored })
}

/// Average quasi log-likelihood of the panel under `p`.
pub fn quasi_loglik(p: &GarchParams, cal: &MarketCalendar, data: &DailyData) -> Result<f64> {
    Ok(quasi_loglik_grad(p, cal, data)?.0)
}

/// Average quasi log-likelihood and its 18-coordinate gradient.
pub fn quasi_loglik_grad(
    p: &GarchParams,
    cal: &MarketCalendar,
    data: &DailyData,
) -> Result<(f64, [f64; GARCH_DIM])> {
    let out = filter(p, cal, data)?;
    let n = data.n_days();
    let lam = [cal.lambda1, cal.lambda2];
    let mut ll = 0.0;
    let mut grad = [0.0; GARCH_DIM];
    for l in 0..2 {
        for i in 0..n {
            let h = out.h[l][i];
            let x = data.rv[l][i] / lam[l];
            ll += h.ln() + x / h;
            let w = 1.0 / h - x / (h * h);
            for k in 0..9 {
                grad[l * 9 + k] += w * out.dh[l][i][k];
            }
        }
    }
    let scale = -1.0 / (2.0 * n as f64);
    for g in grad.iter_mut() {
        *g *= scale;
    }
    Ok((scale * ll, grad))
}

/// Estimation controls.
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Number of starting points (moment-based first, then seeded draws).
    pub starts: usize,
    pub optim: OptimOptions,
    pub bounds: ParamBox,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { starts: 5, optim: OptimOptions::default(), bounds: ParamBox::default() }
    }
}

/// Fitted parameters with diagnostics.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: GarchParams,
    /// Average quasi log-likelihood at the optimum.
    pub loglik: f64,
    /// Projected gradient norm at the reported optimum.
    pub grad_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Index of the winning start.
    pub start_index: usize,
    /// Coordinates pinned at a box edge, e.g. `"gamma1 at upper bound"`.
    pub at_bounds: Vec<String>,
}

fn starting_points(data: &DailyData, cal: &MarketCalendar, opts: &FitOptions) -> Vec<[f64; GARCH_DIM]> {
    let n = data.n_days() as f64;
    let lam = [cal.lambda1, cal.lambda2];
    let mut mean = [0.0; 2];
    for l in 0..2 {
        mean[l] = (data.rv[l].iter().sum::<f64>() / n / lam[l]).max(1e-8);
    }

    let mut starts = Vec::with_capacity(opts.starts);
    for gamma in [0.1, 0.5, 0.9] {
        if starts.len() >= opts.starts {
            break;
        }
        let mut x = [0.0; GARCH_DIM];
        for l in 0..2 {
            let b = l * 9;
            x[b] = (mean[l] * (1.0 - gamma - 0.05)).max(1e-8);
            x[b + 1] = gamma;
            x[b + 2] = 0.05;
            x[b + 3] = 0.01;
            x[b + 4] = 0.01;
            x[b + 5] = 0.01;
            x[b + 6] = 0.01;
            x[b + 7] = 0.01;
            x[b + 8] = 0.01;
        }
        starts.push(x);
    }
    // seeded draws are data-independent, so runs stay reproducible
    let mut rng = ChaCha12Rng::seed_from_u64(0x9e3779b97f4a7c15);
    while starts.len() < opts.starts {
        let mut x = [0.0; GARCH_DIM];
        for l in 0..2 {
            let b = l * 9;
            x[b] = mean[l] * (0.05 + 0.45 * rng.gen::<f64>());
            x[b + 1] = 0.05 + 0.9 * rng.gen::<f64>();
            x[b + 2] = 0.01 + 0.59 * rng.gen::<f64>();
            x[b + 3] = -0.5 + rng.gen::<f64>();
            x[b + 4] = -0.5 + rng.gen::<f64>();
            x[b + 5] = 0.5 * rng.gen::<f64>();
            x[b + 6] = -0.3 + 0.6 * rng.gen::<f64>();
            x[b + 7] = -0.3 + 0.6 * rng.gen::<f64>();
            x[b + 8] = -0.3 + 0.6 * rng.gen::<f64>();
        }
        starts.push(x);
    }
    starts
}

/// Maximizes the quasi-likelihood over the parameter box.
pub fn fit(cal: &MarketCalendar, data: &DailyData, opts: &FitOptions) -> Result<FitResult> {
    data.validate()?;
    if data.n_days() < 10 {
        return Err(Error::invalid("need at least 10 days to estimate the recursion"));
    }
    if opts.starts == 0 {
        return Err(Error::invalid("need at least one starting point"));
    }
    let lo = opts.bounds.lo.to_vec();
    let hi = opts.bounds.hi.to_vec();

    let mut best: Option<(usize, crate::optim::OptimResult)> = None;
    for (idx, x0) in starting_points(data, cal, opts).into_iter().enumerate() {
        let obj = |x: &[f64], g: &mut [f64]| -> f64 {
            let p = GarchParams::from_slice(x).expect("optimizer preserves the dimension");
            match quasi_loglik_grad(&p, cal, data) {
                Ok((v, grad)) => {
                    g.copy_from_slice(&grad);
                    v
                }
                Err(_) => {
                    g.iter_mut().for_each(|gi| *gi = 0.0);
                    f64::NEG_INFINITY
                }
            }
        };
        let res = maximize_in_box(obj, &x0, &lo, &hi, &opts.optim)?;
        let better = match &best {
            None => true,
            Some((_, b)) => res.value > b.value,
        };
        if better {
            best = Some((idx, res));
        }
    }
    let (start_index, res) = best.expect("at least one start ran");

    let mut at_bounds = Vec::new();
    for k in 0..GARCH_DIM {
        if res.at_lower[k] {
            at_bounds.push(format!("{} at lower bound", GARCH_COORD_NAMES[k]));
        } else if res.at_upper[k] {
            at_bounds.push(format!("{} at upper bound", GARCH_COORD_NAMES[k]));
        }
    }
    Ok(FitResult {
        params: GarchParams::from_slice(&res.x).expect("optimizer preserves the dimension"),
        loglik: res.value,
        grad_norm: res.grad_norm,
        converged: res.converged,
        iterations: res.iterations,
        start_index,
        at_bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{map_structural_to_garch, JumpSpec, StructuralParams};
    use crate::sim::{simulate_panel, NoiseSpec, SimConfig};

    fn sim_daily(days: u32, m: u32, seed: u64) -> (MarketCalendar, GarchParams, DailyData, [Vec<f64>; 2]) {
        let s = StructuralParams::baseline();
        let cal = MarketCalendar::baseline();
        let cfg = SimConfig { burn_in_days: 30, ..SimConfig::new(days, m, seed) };
        let out = simulate_panel(&s, &JumpSpec::baseline(), &NoiseSpec::none(), &cal, &cfg).unwrap();
        let truth = out.truth;
        let data = DailyData {
            rv: truth.iv.clone(),
            jv_pos: truth.ijp.clone(),
            jv_neg: truth.ijn.clone(),
            ov: truth.ov.clone(),
        };
        (cal, out.mapped, data, truth.h)
    }

    #[test]
    fn filter_matches_simulator_bit_for_bit_with_shared_init() {
        let (cal, p, data, h_true) = sim_daily(80, 48, 21);
        let out = filter_with_init(&p, &cal, &data, Some([h_true[0][0], h_true[1][0]])).unwrap();
        for l in 0..2 {
            for i in 0..data.n_days() {
                assert_eq!(out.h[l][i], h_true[l][i], "market {l} day {i}");
            }
        }
    }

    #[test]
    fn default_init_forgets_within_thirty_days() {
        let (cal, p, data, h_true) = sim_daily(80, 48, 22);
        let out = filter(&p, &cal, &data).unwrap();
        for l in 0..2 {
            for i in 30..data.n_days() {
                let diff = (out.h[l][i] - h_true[l][i]).abs();
                assert!(diff <= 1e-10, "market {l} day {i} diff {diff}");
            }
        }
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let (cal, p, data, _) = sim_daily(60, 32, 23);
        // move off the mapped point so every coordinate is generic
        let mut x = p.to_vec();
        for (k, v) in x.iter_mut().enumerate() {
            *v *= 1.0 + 0.03 * ((k % 5) as f64 - 2.0) / 10.0;
        }
        let p0 = GarchParams::from_slice(&x).unwrap();
        let (_, grad) = quasi_loglik_grad(&p0, &cal, &data).unwrap();
        for k in 0..GARCH_DIM {
            let hstep = 1e-5 * x[k].abs().max(1e-3);
            let mut xp = x.clone();
            xp[k] += hstep;
            let mut xm = x.clone();
            xm[k] -= hstep;
            let fp = quasi_loglik(&GarchParams::from_slice(&xp).unwrap(), &cal, &data).unwrap();
            let fm = quasi_loglik(&GarchParams::from_slice(&xm).unwrap(), &cal, &data).unwrap();
            let fd = (fp - fm) / (2.0 * hstep);
            let err = (grad[k] - fd).abs();
            assert!(
                err <= 1e-4 * grad[k].abs().max(1.0),
                "coordinate {}: analytic {} vs fd {}",
                GARCH_COORD_NAMES[k],
                grad[k],
                fd
            );
        }
    }

    #[test]
    fn floored_days_zero_the_tangent() {
        let cal = MarketCalendar::baseline();
        let mut p = map_structural_to_garch(&StructuralParams::baseline(), &JumpSpec::baseline())
            .unwrap();
        p.omega1 = 1e-12;
        p.gamma1 = 1e-6;
        p.alpha1 = 1e-6;
        p.beta1_pos = -5.0;
        p.kappa1 = 0.0;
        p.alpha12 = 0.0;
        p.beta12_pos = 0.0;
        p.beta12_neg = 0.0;
        p.beta1_neg = 0.0;
        let n = 6;
        let data = DailyData {
            rv: [vec![0.04; n], vec![0.04; n]],
            jv_pos: [vec![0.02; n], vec![0.0; n]],
            jv_neg: [vec![0.0; n], vec![0.0; n]],
            ov: [vec![0.0; n], vec![0.0; n]],
        };
        let out = filter(&p, &cal, &data).unwrap();
        assert!(out.floored[0] >= n - 1, "market 1 should floor after day 1");
        for i in 1..n {
            assert_eq!(out.h[0][i], H_FLOOR);
            assert_eq!(out.dh[0][i], [0.0; 9]);
        }
        assert_eq!(out.floored[1], 0);
    }

    #[test]
    fn panel_validation_rejects_bad_shapes() {
        let cal = MarketCalendar::baseline();
        let p = map_structural_to_garch(&StructuralParams::baseline(), &JumpSpec::baseline())
            .unwrap();
        let mut data = DailyData {
            rv: [vec![0.01; 4], vec![0.01; 3]],
            jv_pos: [vec![0.0; 4], vec![0.0; 4]],
            jv_neg: [vec![0.0; 4], vec![0.0; 4]],
            ov: [vec![0.0; 4], vec![0.0; 4]],
        };
        assert!(filter(&p, &cal, &data).is_err());
        data.rv[1].push(0.01);
        assert!(filter(&p, &cal, &data).is_ok());
        data.rv[0][2] = -0.5;
        assert!(filter(&p, &cal, &data).is_err());
    }

    #[test]
    fn window_slices_are_consistent() {
        let (_, _, data, _) = sim_daily(40, 24, 29);
        let w = data.window(10, 30).unwrap();
        assert_eq!(w.n_days(), 20);
        assert_eq!(w.rv[0][0], data.rv[0][10]);
        assert_eq!(w.ov[1][19], data.ov[1][29]);
        assert!(data.window(30, 10).is_err());
        assert!(data.window(0, 99).is_err());
    }

    #[test]
    fn fit_beats_the_truth_likelihood_on_its_own_sample() {
        let (cal, p_true, data, _) = sim_daily(400, 48, 31);
        let fit = fit(&cal, &data, &FitOptions::default()).unwrap();
        let ll_true = quasi_loglik(&p_true, &cal, &data).unwrap();
        assert!(
            fit.loglik >= ll_true - 1e-9,
            "optimum {} must not fall below the truth value {}",
            fit.loglik,
            ll_true
        );
        assert!(fit.converged, "projected gradient should vanish");
        assert!((fit.params.gamma1 - p_true.gamma1).abs() < 0.25);
        assert!((fit.params.gamma2 - p_true.gamma2).abs() < 0.25);
    }

    #[test]
    fn short_panels_are_rejected() {
        let cal = MarketCalendar::baseline();
        let data = DailyData {
            rv: [vec![0.01; 5], vec![0.01; 5]],
            jv_pos: [vec![0.0; 5], vec![0.0; 5]],
            jv_neg: [vec![0.0; 5], vec![0.0; 5]],
            ov: [vec![0.0; 5], vec![0.0; 5]],
        };
        assert!(fit(&cal, &data, &FitOptions::default()).is_err());
    }
}
