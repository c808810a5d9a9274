//! Sandwich covariance estimation and structural-break tests.
//!
//! Each fitted window contributes an outer-product meat matrix A and bread
//! matrix B built from per-day conditional variances and their parameter
//! tangents; the asymptotic covariance is the sandwich B⁻¹AB⁻¹. Two windows
//! are compared with a joint Wald statistic, per-market block Walds, and
//! per-coordinate Z statistics, all with p-values from the hand-rolled
//! distribution functions in [`crate::stats`].
//!
//! Everything is generic over the coordinate dimension so the same code
//! serves the 18-coordinate variance recursion and the 20-coordinate
//! heterogeneous-lag model.

use nalgebra::DMatrix;

use crate::calendar::{Market, MarketCalendar};
use crate::error::Error;
use crate::params::{GarchParams, GARCH_COORD_NAMES, GARCH_DIM};
use crate::qmle::{self, DailyData, FitOptions, FitResult};
use crate::stats::{chi2_sf, z_two_sided_p};
use crate::Result;

/// Condition-number limit beyond which a symmetric solve is abandoned for
/// an SVD pseudo-inverse.
pub const COND_LIMIT: f64 = 1e12;

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let mt = m.transpose();
    (m + mt) * 0.5
}

/// Inverse of a symmetric matrix: Cholesky when well conditioned, SVD
/// pseudo-inverse otherwise. Returns the inverse and whether the fallback
/// was used.
fn symmetric_inverse(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if smax > 0.0 && smin > smax / COND_LIMIT {
        if let Some(chol) = m.clone().cholesky() {
            return Ok((symmetrize(chol.inverse()), false));
        }
    }
    let pinv = m
        .clone()
        .pseudo_inverse(smax.max(f64::MIN_POSITIVE) / COND_LIMIT)
        .map_err(|e| Error::numerical(format!("pseudo-inverse failed: {e}")))?;
    Ok((symmetrize(pinv), true))
}

/// Per-window sandwich covariance.
#[derive(Debug, Clone)]
pub struct SandwichCov {
    /// Outer-product meat matrix, weighted by squared scaled residuals.
    pub a_hat: DMatrix<f64>,
    /// Outer-product bread matrix, weighted by inverse squared variances.
    pub b_hat: DMatrix<f64>,
    /// Sandwich `B⁻¹ A B⁻¹`, symmetrized.
    pub sigma_hat: DMatrix<f64>,
    /// Window sample size in days.
    pub n: usize,
    /// True when the bread matrix needed the pseudo-inverse fallback.
    pub pseudo_inverse: bool,
}

impl SandwichCov {
    pub fn dim(&self) -> usize {
        self.sigma_hat.nrows()
    }

    /// Asymptotic standard error of coordinate `j`: `sqrt(Sigma_jj / n)`.
    pub fn std_error(&self, j: usize) -> f64 {
        (self.sigma_hat[(j, j)] / self.n as f64).max(0.0).sqrt()
    }
}

/// Accumulates one observation at a time: conditional variance `h`, scaled
/// target `x` (realized variance over session length), and the gradient of
/// `h` in the full coordinate vector.
#[derive(Debug, Clone)]
pub struct SandwichAccumulator {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    n: usize,
}

impl SandwichAccumulator {
    /// `n` is the window's day count, the normalizer of both sums.
    pub fn new(dim: usize, n: usize) -> Self {
        SandwichAccumulator { a: DMatrix::zeros(dim, dim), b: DMatrix::zeros(dim, dim), n }
    }

    pub fn add(&mut self, h: f64, x: f64, grad: &[f64]) {
        debug_assert_eq!(grad.len(), self.a.nrows());
        let r = x - h;
        let h2 = h * h;
        let wa = r * r / (h2 * h2);
        let wb = 1.0 / h2;
        let dim = grad.len();
        for j in 0..dim {
            if grad[j] == 0.0 {
                continue;
            }
            for k in 0..dim {
                let g = grad[j] * grad[k];
                self.a[(j, k)] += wa * g;
                self.b[(j, k)] += wb * g;
            }
        }
    }

    pub fn finish(self) -> Result<SandwichCov> {
        if self.n == 0 {
            return Err(Error::invalid("sandwich over an empty window"));
        }
        let n = self.n as f64;
        let a_hat = symmetrize(self.a / (4.0 * n));
        let b_hat = symmetrize(self.b / (2.0 * n));
        let (b_inv, pseudo_inverse) = symmetric_inverse(&b_hat)?;
        let sigma_hat = symmetrize(&b_inv * &a_hat * &b_inv);
        Ok(SandwichCov { a_hat, b_hat, sigma_hat, n: self.n, pseudo_inverse })
    }
}

/// Sandwich covariance of the 18-coordinate fit on one window.
///
/// Re-runs the filter at `params`; each market-day contributes its own
/// 9-coordinate tangent block, embedded in the full vector.
pub fn sandwich_covariance(
    params: &GarchParams,
    cal: &MarketCalendar,
    data: &DailyData,
) -> Result<SandwichCov> {
    let n = data.n_days();
    if n <= GARCH_DIM {
        return Err(Error::invalid(format!(
            "need more than {GARCH_DIM} days for the sandwich, got {n}"
        )));
    }
    let out = qmle::filter(params, cal, data)?;
    let lam = [cal.lambda1, cal.lambda2];
    let mut acc = SandwichAccumulator::new(GARCH_DIM, n);
    for l in 0..2 {
        let mut g = [0.0; GARCH_DIM];
        for i in 0..n {
            for k in 0..9 {
                g[l * 9 + k] = out.dh[l][i][k];
            }
            acc.add(out.h[l][i], data.rv[l][i] / lam[l], &g);
        }
    }
    acc.finish()
}

/// Which coordinate block a Wald test covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestScope {
    /// All coordinates.
    Joint,
    /// One market's own block: the first or second half of the vector.
    Market(Market),
}

impl TestScope {
    fn indices(self, dim: usize) -> Result<std::ops::Range<usize>> {
        match self {
            TestScope::Joint => Ok(0..dim),
            TestScope::Market(m) => {
                if dim % 2 != 0 {
                    return Err(Error::invalid(format!(
                        "market-block test needs an even dimension, got {dim}"
                    )));
                }
                let half = dim / 2;
                Ok(match m {
                    Market::One => 0..half,
                    Market::Two => half..dim,
                })
            }
        }
    }
}

/// One Wald statistic with its reference distribution.
#[derive(Debug, Clone, Copy)]
pub struct WaldOutcome {
    pub stat: f64,
    pub df: usize,
    pub p: f64,
}

/// One per-coordinate Z statistic with its two-sided p-value.
#[derive(Debug, Clone, Copy)]
pub struct ZOutcome {
    pub z: f64,
    pub p: f64,
}

fn combined_covariance(cov1: &SandwichCov, cov2: &SandwichCov) -> Result<(DMatrix<f64>, f64)> {
    if cov1.dim() != cov2.dim() {
        return Err(Error::invalid("windows have different coordinate dimensions"));
    }
    if cov1.n == 0 || cov2.n == 0 {
        return Err(Error::invalid("empty window"));
    }
    let r = cov1.n as f64 / cov2.n as f64;
    Ok((&cov1.sigma_hat + &cov2.sigma_hat * r, r))
}

/// Wald statistic `n₁ dᵀ (Σ̂₁ + r Σ̂₂)⁻¹ d` with `d = θ̂₁ − θ̂₂ − δ₀` over
/// the selected block; the reference distribution is χ² with the block size
/// as degrees of freedom.
pub fn wald_test(
    theta1: &[f64],
    cov1: &SandwichCov,
    theta2: &[f64],
    cov2: &SandwichCov,
    delta0: &[f64],
    scope: TestScope,
) -> Result<WaldOutcome> {
    let dim = cov1.dim();
    if theta1.len() != dim || theta2.len() != dim || delta0.len() != dim {
        return Err(Error::invalid("coordinate vectors do not match the covariance dimension"));
    }
    let (m, _r) = combined_covariance(cov1, cov2)?;
    let idx = scope.indices(dim)?;
    let df = idx.len();
    let d = nalgebra::DVector::from_iterator(
        df,
        idx.clone().map(|j| theta1[j] - theta2[j] - delta0[j]),
    );
    let block = m.view((idx.start, idx.start), (df, df)).into_owned();
    let (inv, pseudo) = symmetric_inverse(&block)?;
    if pseudo {
        return Err(Error::numerical("combined covariance is numerically singular"));
    }
    let stat = (cov1.n as f64 * d.dot(&(&inv * &d))).max(0.0);
    Ok(WaldOutcome { stat, df, p: chi2_sf(stat, df as f64) })
}

/// Per-coordinate Z statistics `√n₁ (Σ̂₁ + r Σ̂₂)_jj^{-1/2} (θ̂₁ − θ̂₂ − δ₀)_j`
/// with two-sided normal p-values.
pub fn z_tests(
    theta1: &[f64],
    cov1: &SandwichCov,
    theta2: &[f64],
    cov2: &SandwichCov,
    delta0: &[f64],
) -> Result<Vec<ZOutcome>> {
    let dim = cov1.dim();
    if theta1.len() != dim || theta2.len() != dim || delta0.len() != dim {
        return Err(Error::invalid("coordinate vectors do not match the covariance dimension"));
    }
    let (m, _r) = combined_covariance(cov1, cov2)?;
    let sqrt_n1 = (cov1.n as f64).sqrt();
    let mut out = Vec::with_capacity(dim);
    for j in 0..dim {
        let v = m[(j, j)];
        if !(v > 0.0) {
            return Err(Error::numerical(format!(
                "combined covariance has a non-positive diagonal entry at coordinate {j}"
            )));
        }
        let z = sqrt_n1 * (theta1[j] - theta2[j] - delta0[j]) / v.sqrt();
        out.push(ZOutcome { z, p: z_two_sided_p(z) });
    }
    Ok(out)
}

/// Per-coordinate row of a break-test report.
#[derive(Debug, Clone)]
pub struct CoordinateRow {
    pub name: String,
    pub estimate1: f64,
    pub se1: f64,
    pub estimate2: f64,
    pub se2: f64,
    pub z: f64,
    pub p: f64,
}

/// Full two-window comparison: joint and per-market Walds plus one row per
/// coordinate with both estimates, standard errors, and the Z test.
#[derive(Debug, Clone)]
pub struct BreakTestReport {
    pub joint: WaldOutcome,
    pub market1: WaldOutcome,
    pub market2: WaldOutcome,
    pub rows: Vec<CoordinateRow>,
    /// Window size ratio `n₁ / n₂`.
    pub r: f64,
    pub n1: usize,
    pub n2: usize,
    /// True when either window's bread matrix needed the fallback inverse.
    pub pseudo_inverse: bool,
}

/// Runs all three test families on two fitted windows.
pub fn break_test(
    names: &[&str],
    theta1: &[f64],
    cov1: &SandwichCov,
    theta2: &[f64],
    cov2: &SandwichCov,
    delta0: &[f64],
) -> Result<BreakTestReport> {
    let dim = cov1.dim();
    if names.len() != dim {
        return Err(Error::invalid("coordinate name list does not match the dimension"));
    }
    let joint = wald_test(theta1, cov1, theta2, cov2, delta0, TestScope::Joint)?;
    let market1 = wald_test(theta1, cov1, theta2, cov2, delta0, TestScope::Market(Market::One))?;
    let market2 = wald_test(theta1, cov1, theta2, cov2, delta0, TestScope::Market(Market::Two))?;
    let zs = z_tests(theta1, cov1, theta2, cov2, delta0)?;
    let rows = (0..dim)
        .map(|j| CoordinateRow {
            name: names[j].to_string(),
            estimate1: theta1[j],
            se1: cov1.std_error(j),
            estimate2: theta2[j],
            se2: cov2.std_error(j),
            z: zs[j].z,
            p: zs[j].p,
        })
        .collect();
    Ok(BreakTestReport {
        joint,
        market1,
        market2,
        rows,
        r: cov1.n as f64 / cov2.n as f64,
        n1: cov1.n,
        n2: cov2.n,
        pseudo_inverse: cov1.pseudo_inverse || cov2.pseudo_inverse,
    })
}

impl std::fmt::Display for BreakTestReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "two-window break test (n1 = {}, n2 = {}, r = {:.6})", self.n1, self.n2, self.r)?;
        writeln!(
            f,
            "joint     W = {:10.4}  df = {:2}  p = {:.6}",
            self.joint.stat, self.joint.df, self.joint.p
        )?;
        writeln!(
            f,
            "market 1  W = {:10.4}  df = {:2}  p = {:.6}",
            self.market1.stat, self.market1.df, self.market1.p
        )?;
        writeln!(
            f,
            "market 2  W = {:10.4}  df = {:2}  p = {:.6}",
            self.market2.stat, self.market2.df, self.market2.p
        )?;
        if self.pseudo_inverse {
            writeln!(f, "warning: a bread matrix was near singular; pseudo-inverse used")?;
        }
        writeln!(
            f,
            "{:<14} {:>12} {:>12} {:>12} {:>12} {:>9} {:>9}",
            "coordinate", "window1", "se1", "window2", "se2", "Z", "p"
        )?;
        for row in &self.rows {
            writeln!(
                f,
                "{:<14} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>9.4} {:>9.6}",
                row.name, row.estimate1, row.se1, row.estimate2, row.se2, row.z, row.p
            )?;
        }
        Ok(())
    }
}

/// Break test plus both window fits for the 18-coordinate model.
#[derive(Debug, Clone)]
pub struct GarchBreakTest {
    pub report: BreakTestReport,
    pub fit1: FitResult,
    pub fit2: FitResult,
    pub cov1: SandwichCov,
    pub cov2: SandwichCov,
}

/// Fits both windows of a daily panel split at `break_day` (0-based start
/// of window 2) and tests `H₀: θ₁ − θ₂ = δ₀`.
pub fn garch_break_test(
    cal: &MarketCalendar,
    data: &DailyData,
    break_day: usize,
    delta0: &[f64; GARCH_DIM],
    opts: &FitOptions,
) -> Result<GarchBreakTest> {
    let n = data.n_days();
    if break_day <= GARCH_DIM || n.saturating_sub(break_day) <= GARCH_DIM {
        return Err(Error::invalid(format!(
            "break at day {break_day} leaves a window too short in a {n}-day panel"
        )));
    }
    let w1 = data.window(0, break_day)?;
    let w2 = data.window(break_day, n)?;
    let fit1 = qmle::fit(cal, &w1, opts)?;
    let fit2 = qmle::fit(cal, &w2, opts)?;
    let cov1 = sandwich_covariance(&fit1.params, cal, &w1)?;
    let cov2 = sandwich_covariance(&fit2.params, cal, &w2)?;
    let report = break_test(
        &GARCH_COORD_NAMES,
        &fit1.params.to_vec(),
        &cov1,
        &fit2.params.to_vec(),
        &cov2,
        delta0,
    )?;
    Ok(GarchBreakTest { report, fit1, fit2, cov1, cov2 })
}
