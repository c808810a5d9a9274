//! Heterogeneous-lag contagion model for daily realized measures.
//!
//! The conditional mean of scaled realized variance is affine in lagged
//! 1/5/22-day realized-variance averages, signed jump variations, the
//! overnight squared return, and the other market's session measures, with
//! the same cross-market timing as the variance recursion: market 1 reads
//! market 2 lagged one day, market 2 reads market 1's already-closed
//! same-day session. Estimation maximizes the same Gaussian
//! quasi-likelihood used for the recursion fit, and break tests reuse the
//! sandwich machinery at 20/10/1 degrees of freedom.

use nalgebra::DMatrix;

use crate::calendar::MarketCalendar;
use crate::error::Error;
use crate::inference::{break_test, BreakTestReport, SandwichAccumulator, SandwichCov, COND_LIMIT};
use crate::optim::{maximize_in_box, OptimOptions};
use crate::qmle::{DailyData, H_FLOOR};
use crate::Result;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Total coordinate count, two markets of [`HAR_BLOCK`].
pub const HAR_DIM: usize = 20;
/// Coordinates per market: intercept, three lag averages, two jump
/// loadings, overnight loading, and three cross-market loadings.
pub const HAR_BLOCK: usize = 10;
/// Lag-average horizons in days.
pub const HAR_LAGS: [usize; 3] = [1, 5, 22];
/// History needed before the first modeled day.
pub const HAR_MAX_LAG: usize = 22;

pub const HAR_COORD_NAMES: [&str; HAR_DIM] = [
    "omega1", "alpha1_1", "alpha1_5", "alpha1_22", "beta1_pos", "beta1_neg", "kappa1", "alpha12",
    "beta12_pos", "beta12_neg", "omega2", "alpha2_1", "alpha2_5", "alpha2_22", "beta2_pos",
    "beta2_neg", "kappa2", "alpha21", "beta21_pos", "beta21_neg",
];

/// Coefficient vector, market-1 block first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarParams {
    pub coords: [f64; HAR_DIM],
}

impl HarParams {
    pub fn from_slice(v: &[f64]) -> Self {
        let mut coords = [0.0; HAR_DIM];
        coords.copy_from_slice(v);
        HarParams { coords }
    }

    pub fn to_vec(&self) -> [f64; HAR_DIM] {
        self.coords
    }

    pub fn block(&self, l: usize) -> &[f64] {
        &self.coords[l * HAR_BLOCK..(l + 1) * HAR_BLOCK]
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|v| v.is_finite())
    }
}

/// Regressor rows and targets for both markets, aligned on the same days.
///
/// Row `r` models day `first_day + r` (0-based); regressor order matches
/// one block of [`HAR_COORD_NAMES`].
#[derive(Debug, Clone)]
pub struct HarDesign {
    pub regs: [Vec<[f64; HAR_BLOCK]>; 2],
    /// Scaled realized variance `RV / lambda` being predicted.
    pub target: [Vec<f64>; 2],
    pub first_day: usize,
}

impl HarDesign {
    pub fn n_rows(&self) -> usize {
        self.regs[0].len()
    }
}

/// Builds the regressor panel; needs more than [`HAR_MAX_LAG`] days.
pub fn har_design(cal: &MarketCalendar, data: &DailyData) -> Result<HarDesign> {
    data.validate()?;
    let n = data.n_days();
    if n <= HAR_MAX_LAG {
        return Err(Error::invalid(format!(
            "need more than {HAR_MAX_LAG} days of history, got {n}"
        )));
    }
    let lam = [cal.lambda1, cal.lambda2];
    let mut regs: [Vec<[f64; HAR_BLOCK]>; 2] = [Vec::new(), Vec::new()];
    let mut target: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for l in 0..2 {
        let o = 1 - l; // other market
        // market 1 reads market 2 at i-1; market 2 reads market 1 at i
        let cross_shift = l; // iota
        for i in HAR_MAX_LAG..n {
            let mut row = [0.0; HAR_BLOCK];
            row[0] = 1.0;
            for (slot, d) in HAR_LAGS.iter().enumerate() {
                let mean: f64 = data.rv[l][i - d..i].iter().sum::<f64>() / *d as f64;
                row[1 + slot] = mean / lam[l];
            }
            row[4] = data.jv_pos[l][i - 1] / lam[l];
            row[5] = data.jv_neg[l][i - 1] / lam[l];
            row[6] = data.ov[l][i] / (1.0 - lam[l]);
            let ci = i - 1 + cross_shift;
            row[7] = data.rv[o][ci] / lam[o];
            row[8] = data.jv_pos[o][ci] / lam[o];
            row[9] = data.jv_neg[o][ci] / lam[o];
            regs[l].push(row);
            target[l].push(data.rv[l][i] / lam[l]);
        }
    }
    Ok(HarDesign { regs, target, first_day: HAR_MAX_LAG })
}

fn dot_block(block: &[f64], row: &[f64; HAR_BLOCK]) -> f64 {
    let mut s = 0.0;
    for k in 0..HAR_BLOCK {
        s += block[k] * row[k];
    }
    s
}

/// Fitted conditional means with the positivity floor applied; returns the
/// per-market floor counts as well.
pub fn har_mean(p: &HarParams, design: &HarDesign) -> ([Vec<f64>; 2], [usize; 2]) {
    let mut h: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut floored = [0usize; 2];
    for l in 0..2 {
        h[l] = design.regs[l]
            .iter()
            .map(|row| {
                let v = dot_block(p.block(l), row);
                if v < H_FLOOR {
                    floored[l] += 1;
                    H_FLOOR
                } else {
                    v
                }
            })
            .collect();
    }
    (h, floored)
}

/// Average Gaussian quasi log-likelihood and its analytic gradient. The
/// mean is affine in the coefficients, so each row's tangent is its own
/// regressor vector (zeroed on floored rows).
pub fn har_loglik_grad(p: &HarParams, design: &HarDesign) -> (f64, [f64; HAR_DIM]) {
    let n = design.n_rows() as f64;
    let mut ll = 0.0;
    let mut grad = [0.0; HAR_DIM];
    for l in 0..2 {
        let block = p.block(l);
        for (row, &x) in design.regs[l].iter().zip(&design.target[l]) {
            let raw = dot_block(block, row);
            let (h, live) = if raw < H_FLOOR { (H_FLOOR, false) } else { (raw, true) };
            ll += h.ln() + x / h;
            if live {
                let w = 1.0 / h - x / (h * h);
                for k in 0..HAR_BLOCK {
                    grad[l * HAR_BLOCK + k] += w * row[k];
                }
            }
        }
    }
    let scale = -1.0 / (2.0 * n);
    for g in grad.iter_mut() {
        *g *= scale;
    }
    (scale * ll, grad)
}

/// Search box, `lo == hi` pins a coordinate.
#[derive(Debug, Clone)]
pub struct HarBox {
    pub lo: [f64; HAR_DIM],
    pub hi: [f64; HAR_DIM],
}

impl Default for HarBox {
    /// Wide box: intercepts in `[1e-12, 1]`, lag-average loadings in
    /// `[-2, 2]`, jump/overnight/cross loadings in `[-5, 5]`.
    fn default() -> Self {
        let mut lo = [0.0; HAR_DIM];
        let mut hi = [0.0; HAR_DIM];
        for l in 0..2 {
            let o = l * HAR_BLOCK;
            lo[o] = 1e-12;
            hi[o] = 1.0;
            for j in 1..4 {
                lo[o + j] = -2.0;
                hi[o + j] = 2.0;
            }
            for j in 4..HAR_BLOCK {
                lo[o + j] = -5.0;
                hi[o + j] = 5.0;
            }
        }
        HarBox { lo, hi }
    }
}

/// Estimation controls.
#[derive(Debug, Clone)]
pub struct HarFitOptions {
    pub starts: usize,
    pub optim: OptimOptions,
    pub bounds: HarBox,
}

impl Default for HarFitOptions {
    fn default() -> Self {
        HarFitOptions { starts: 5, optim: OptimOptions::default(), bounds: HarBox::default() }
    }
}

/// Fitted coefficients with diagnostics.
#[derive(Debug, Clone)]
pub struct HarFitResult {
    pub params: HarParams,
    pub loglik: f64,
    pub grad_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub start_index: usize,
    pub at_bounds: Vec<String>,
}

/// Errors when any market's regressor Gram matrix is numerically rank
/// deficient, which would leave coordinates unidentified.
fn check_collinearity(design: &HarDesign, bounds: &HarBox) -> Result<()> {
    for l in 0..2 {
        let mut free = Vec::new();
        for k in 0..HAR_BLOCK {
            let j = l * HAR_BLOCK + k;
            if bounds.lo[j] < bounds.hi[j] {
                free.push(k);
            }
        }
        if free.is_empty() {
            continue;
        }
        let dim = free.len();
        let mut gram = DMatrix::zeros(dim, dim);
        for row in &design.regs[l] {
            for (a, &ka) in free.iter().enumerate() {
                for (b, &kb) in free.iter().enumerate() {
                    gram[(a, b)] += row[ka] * row[kb];
                }
            }
        }
        gram /= design.n_rows() as f64;
        let sv = gram.svd(false, false).singular_values;
        let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
        let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(smax > 0.0) || smin < smax / COND_LIMIT {
            return Err(Error::numerical(format!(
                "market {} regressors are collinear (condition number above {COND_LIMIT:.0e})",
                l + 1
            )));
        }
    }
    Ok(())
}

fn starting_points(design: &HarDesign, opts: &HarFitOptions) -> Vec<[f64; HAR_DIM]> {
    let mut mean = [0.0; 2];
    for l in 0..2 {
        mean[l] = (design.target[l].iter().sum::<f64>() / design.n_rows() as f64).max(1e-8);
    }
    let mut starts = Vec::with_capacity(opts.starts);
    let presets: [[f64; HAR_BLOCK]; 3] = [
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.4, 0.3, 0.2, 0.1, 0.01, 0.01, 0.01, 0.01, 0.0, 0.0],
        [0.2, 0.5, 0.2, 0.1, 0.05, 0.05, 0.05, 0.02, 0.01, 0.01],
    ];
    for preset in presets {
        if starts.len() >= opts.starts {
            break;
        }
        let mut x = [0.0; HAR_DIM];
        for l in 0..2 {
            let o = l * HAR_BLOCK;
            x[o] = preset[0] * mean[l]
                * (1.0 - preset[1] - preset[2] - preset[3]).max(0.1);
            x[o + 1..o + HAR_BLOCK].copy_from_slice(&preset[1..]);
        }
        starts.push(x);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(0x9e3779b97f4a7c15);
    while starts.len() < opts.starts {
        let mut x = [0.0; HAR_DIM];
        for l in 0..2 {
            let o = l * HAR_BLOCK;
            x[o] = mean[l] * (0.05 + 0.9 * rng.gen::<f64>());
            for j in 1..4 {
                x[o + j] = 0.3 * rng.gen::<f64>();
            }
            for j in 4..HAR_BLOCK {
                x[o + j] = -0.1 + 0.2 * rng.gen::<f64>();
            }
        }
        starts.push(x);
    }
    starts
}

/// Maximizes the quasi-likelihood over the coefficient box.
pub fn har_fit(design: &HarDesign, opts: &HarFitOptions) -> Result<HarFitResult> {
    if design.n_rows() == 0 {
        return Err(Error::invalid("empty design"));
    }
    if opts.starts == 0 {
        return Err(Error::invalid("need at least one starting point"));
    }
    check_collinearity(design, &opts.bounds)?;

    let mut best: Option<(usize, crate::optim::OptimResult)> = None;
    for (idx, mut x0) in starting_points(design, opts).into_iter().enumerate() {
        for j in 0..HAR_DIM {
            x0[j] = x0[j].clamp(opts.bounds.lo[j], opts.bounds.hi[j]);
        }
        let obj = |x: &[f64], g: &mut [f64]| -> f64 {
            let p = HarParams::from_slice(x);
            let (v, grad) = har_loglik_grad(&p, design);
            g.copy_from_slice(&grad);
            v
        };
        let res = maximize_in_box(obj, &x0, &opts.bounds.lo, &opts.bounds.hi, &opts.optim)?;
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
    for k in 0..HAR_DIM {
        if opts.bounds.lo[k] == opts.bounds.hi[k] {
            continue; // pinned on purpose
        }
        if res.at_lower[k] {
            at_bounds.push(format!("{} at lower bound", HAR_COORD_NAMES[k]));
        } else if res.at_upper[k] {
            at_bounds.push(format!("{} at upper bound", HAR_COORD_NAMES[k]));
        }
    }
    Ok(HarFitResult {
        params: HarParams::from_slice(&res.x),
        loglik: res.value,
        grad_norm: res.grad_norm,
        converged: res.converged,
        iterations: res.iterations,
        start_index,
        at_bounds,
    })
}

/// Sandwich covariance of a fitted design; each row contributes its own
/// regressor vector as the tangent, embedded in the market's block.
pub fn har_sandwich(p: &HarParams, design: &HarDesign) -> Result<SandwichCov> {
    let n = design.n_rows();
    if n <= HAR_DIM {
        return Err(Error::invalid(format!(
            "need more than {HAR_DIM} modeled days for the sandwich, got {n}"
        )));
    }
    let mut acc = SandwichAccumulator::new(HAR_DIM, n);
    for l in 0..2 {
        let block = p.block(l);
        let mut g = [0.0; HAR_DIM];
        for (row, &x) in design.regs[l].iter().zip(&design.target[l]) {
            let raw = dot_block(block, row);
            let h = raw.max(H_FLOOR);
            if raw < H_FLOOR {
                g[l * HAR_BLOCK..(l + 1) * HAR_BLOCK].fill(0.0);
            } else {
                g[l * HAR_BLOCK..(l + 1) * HAR_BLOCK].copy_from_slice(row);
            }
            acc.add(h, x, &g);
        }
    }
    acc.finish()
}

/// Break test plus both window fits for the 20-coordinate model.
#[derive(Debug, Clone)]
pub struct HarBreakTest {
    pub report: BreakTestReport,
    pub fit1: HarFitResult,
    pub fit2: HarFitResult,
    pub cov1: SandwichCov,
    pub cov2: SandwichCov,
}

/// Fits both windows of a daily panel split at `break_day` (0-based start
/// of window 2, each window keeping its own 22-day warmup) and tests
/// `H₀: θ₁ − θ₂ = δ₀`.
pub fn har_break_test(
    cal: &MarketCalendar,
    data: &DailyData,
    break_day: usize,
    delta0: &[f64; HAR_DIM],
    opts: &HarFitOptions,
) -> Result<HarBreakTest> {
    let n = data.n_days();
    let min_window = HAR_MAX_LAG + HAR_DIM + 2;
    if break_day < min_window || n.saturating_sub(break_day) < min_window {
        return Err(Error::invalid(format!(
            "break at day {break_day} leaves a window shorter than {min_window} days"
        )));
    }
    let d1 = har_design(cal, &data.window(0, break_day)?)?;
    let d2 = har_design(cal, &data.window(break_day, n)?)?;
    let fit1 = har_fit(&d1, opts)?;
    let fit2 = har_fit(&d2, opts)?;
    let cov1 = har_sandwich(&fit1.params, &d1)?;
    let cov2 = har_sandwich(&fit2.params, &d2)?;
    let report = break_test(
        &HAR_COORD_NAMES,
        &fit1.params.to_vec(),
        &cov1,
        &fit2.params.to_vec(),
        &cov2,
        delta0,
    )?;
    Ok(HarBreakTest { report, fit1, fit2, cov1, cov2 })
}
