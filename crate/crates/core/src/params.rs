//! Model parameters and the structural-to-daily mapping.
//!
//! The continuous-time model is parameterized per market by an open-session
//! block (intercept, mean reversion, variance accumulation, signed jump
//! loadings, leverage-noise loading) and an overnight block (intercept, mean
//! reversion, squared-overnight-return loading, plus loadings on the other
//! market's realized variance and signed jump variation while that market
//! trades). Integrating the variance over one trading day collapses this
//! structural model onto an 18-coordinate daily GARCH filter; the collapse
//! is [`map_structural_to_garch`].
//!
//! The daily coordinates, in the fixed order used everywhere (CSV rows,
//! optimizer vectors, covariance matrices):
//!
//! ```text
//! omega1 gamma1 alpha1 beta1_pos beta1_neg kappa1 alpha12 beta12_pos beta12_neg
//! omega2 gamma2 alpha2 beta2_pos beta2_neg kappa2 alpha21 beta21_pos beta21_neg
//! ```

use crate::calendar::Market;
use crate::error::Error;
use crate::Result;

/// Number of daily filter coordinates.
pub const GARCH_DIM: usize = 18;

/// Coordinate names in vector order.
pub const GARCH_COORD_NAMES: [&str; GARCH_DIM] = [
    "omega1", "gamma1", "alpha1", "beta1_pos", "beta1_neg", "kappa1", "alpha12", "beta12_pos",
    "beta12_neg", "omega2", "gamma2", "alpha2", "beta2_pos", "beta2_neg", "kappa2", "alpha21",
    "beta21_pos", "beta21_neg",
];

/// Structural block of one market.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketStructural {
    /// Open-session variance intercept.
    pub omega_h: f64,
    /// Open-session mean-reversion coefficient, in (0, 1).
    pub gamma_h: f64,
    /// Open-session variance accumulation coefficient, in (0, 1).
    pub alpha_h: f64,
    /// Loading on the running sum of squared positive jumps.
    pub beta_h_pos: f64,
    /// Loading on the running sum of squared negative jumps.
    pub beta_h_neg: f64,
    /// Loading on the squared session Brownian shock (decaying weight).
    pub nu_h: f64,
    /// Overnight variance intercept.
    pub omega_l: f64,
    /// Overnight mean-reversion coefficient, in (0, 1).
    pub gamma_l: f64,
    /// Loading on the squared close-to-open diffusion return.
    pub alpha_l: f64,
    /// Loading on the other market's realized variance during its session.
    pub alpha_cross: f64,
    /// Loading on the other market's positive squared jumps.
    pub beta_cross_pos: f64,
    /// Loading on the other market's negative squared jumps.
    pub beta_cross_neg: f64,
}

/// Full structural parameter set for both markets.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralParams {
    /// Per-market blocks, index 0 = market 1.
    pub market: [MarketStructural; 2],
    /// Drifts, fixed at zero in the simulation study.
    pub mu: [f64; 2],
    /// Correlation of the two price Brownian motions, in [-1, 1].
    pub rho: f64,
}

impl StructuralParams {
    /// Baseline set of the simulation study.
    pub fn baseline() -> Self {
        StructuralParams {
            market: [
                MarketStructural {
                    omega_h: 0.001,
                    gamma_h: 0.3,
                    alpha_h: 0.7,
                    beta_h_pos: 0.25,
                    beta_h_neg: 0.3,
                    nu_h: 0.1,
                    omega_l: 0.0005,
                    gamma_l: 0.4,
                    alpha_l: 0.1,
                    alpha_cross: 0.12,
                    beta_cross_pos: 0.1,
                    beta_cross_neg: 0.12,
                },
                MarketStructural {
                    omega_h: 0.0015,
                    gamma_h: 0.4,
                    alpha_h: 0.6,
                    beta_h_pos: 0.3,
                    beta_h_neg: 0.4,
                    nu_h: 0.1,
                    omega_l: 0.0005,
                    gamma_l: 0.4,
                    alpha_l: 0.1,
                    alpha_cross: 0.12,
                    beta_cross_pos: 0.1,
                    beta_cross_neg: 0.1,
                },
            ],
            mu: [0.0, 0.0],
            rho: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (l, m) in self.market.iter().enumerate() {
            let name = |f: &str| format!("market {} {}", l + 1, f);
            let fields = [
                (m.omega_h, "omega_h"),
                (m.gamma_h, "gamma_h"),
                (m.alpha_h, "alpha_h"),
                (m.beta_h_pos, "beta_h_pos"),
                (m.beta_h_neg, "beta_h_neg"),
                (m.nu_h, "nu_h"),
                (m.omega_l, "omega_l"),
                (m.gamma_l, "gamma_l"),
                (m.alpha_l, "alpha_l"),
                (m.alpha_cross, "alpha_cross"),
                (m.beta_cross_pos, "beta_cross_pos"),
                (m.beta_cross_neg, "beta_cross_neg"),
            ];
            for (v, f) in fields {
                if !v.is_finite() {
                    return Err(Error::invalid(format!("{} must be finite", name(f))));
                }
            }
            if m.omega_h < 0.0 || m.omega_l < 0.0 {
                return Err(Error::invalid(name("intercepts must be nonnegative")));
            }
            if !(m.gamma_h > 0.0 && m.gamma_h < 1.0) {
                return Err(Error::invalid(name("gamma_h must be in (0,1)")));
            }
            if !(m.gamma_l > 0.0 && m.gamma_l < 1.0) {
                return Err(Error::invalid(name("gamma_l must be in (0,1)")));
            }
            if !(m.alpha_h > 0.0 && m.alpha_h < 1.0) {
                return Err(Error::invalid(name("alpha_h must be in (0,1)")));
            }
            if m.nu_h < 0.0 {
                return Err(Error::invalid(name("nu_h must be nonnegative")));
            }
        }
        for mu in self.mu {
            if !mu.is_finite() {
                return Err(Error::invalid("drifts must be finite"));
            }
        }
        if !(self.rho >= -1.0 && self.rho <= 1.0) {
            return Err(Error::invalid(format!("rho must be in [-1,1], got {}", self.rho)));
        }
        Ok(())
    }
}

/// One Poisson jump stream: arrival intensity per unit of time and the law
/// of the squared jump size, `b + M` with `M ~ N(0, m_sd^2)` redrawn until
/// positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpStream {
    pub intensity: f64,
    pub b: f64,
    pub m_sd: f64,
}

impl JumpStream {
    /// Mean squared jump size. The redraw truncation is negligible whenever
    /// `b` is several `m_sd` above zero, so the offset itself is used.
    pub fn mean_squared_size(&self) -> f64 {
        self.b
    }
}

/// Jump specification: four independent streams, one per (market, sign).
#[derive(Debug, Clone, PartialEq)]
pub struct JumpSpec {
    /// `streams[market][0]` = positive stream, `streams[market][1]` = negative.
    pub streams: [[JumpStream; 2]; 2],
}

impl JumpSpec {
    /// Baseline intensities and size law of the simulation study.
    pub fn baseline() -> Self {
        let s = |intensity| JumpStream { intensity, b: 0.005, m_sd: 0.0005 };
        JumpSpec { streams: [[s(12.0), s(16.0)], [s(16.0), s(12.0)]] }
    }

    /// Spec with all intensities zero (jump-free model).
    pub fn none() -> Self {
        let s = JumpStream { intensity: 0.0, b: 0.005, m_sd: 0.0 };
        JumpSpec { streams: [[s, s], [s, s]] }
    }

    pub fn pos(&self, market: Market) -> JumpStream {
        self.streams[market.idx()][0]
    }

    pub fn neg(&self, market: Market) -> JumpStream {
        self.streams[market.idx()][1]
    }

    pub fn validate(&self) -> Result<()> {
        for ms in &self.streams {
            for s in ms {
                if !(s.intensity.is_finite() && s.intensity >= 0.0) {
                    return Err(Error::invalid("jump intensity must be finite and nonnegative"));
                }
                if !(s.b.is_finite() && s.b > 0.0) {
                    return Err(Error::invalid("jump size offset b must be positive"));
                }
                if !(s.m_sd.is_finite() && s.m_sd >= 0.0) {
                    return Err(Error::invalid("jump size sd must be finite and nonnegative"));
                }
            }
        }
        Ok(())
    }
}

/// Daily GARCH filter coordinates. See the module docs for vector order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GarchParams {
    pub omega1: f64,
    pub gamma1: f64,
    pub alpha1: f64,
    pub beta1_pos: f64,
    pub beta1_neg: f64,
    pub kappa1: f64,
    pub alpha12: f64,
    pub beta12_pos: f64,
    pub beta12_neg: f64,
    pub omega2: f64,
    pub gamma2: f64,
    pub alpha2: f64,
    pub beta2_pos: f64,
    pub beta2_neg: f64,
    pub kappa2: f64,
    pub alpha21: f64,
    pub beta21_pos: f64,
    pub beta21_neg: f64,
}

impl GarchParams {
    pub fn to_vec(&self) -> [f64; GARCH_DIM] {
        [
            self.omega1,
            self.gamma1,
            self.alpha1,
            self.beta1_pos,
            self.beta1_neg,
            self.kappa1,
            self.alpha12,
            self.beta12_pos,
            self.beta12_neg,
            self.omega2,
            self.gamma2,
            self.alpha2,
            self.beta2_pos,
            self.beta2_neg,
            self.kappa2,
            self.alpha21,
            self.beta21_pos,
            self.beta21_neg,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != GARCH_DIM {
            return Err(Error::invalid(format!(
                "daily parameter vector must have {GARCH_DIM} coordinates, got {}",
                v.len()
            )));
        }
        Ok(GarchParams {
            omega1: v[0],
            gamma1: v[1],
            alpha1: v[2],
            beta1_pos: v[3],
            beta1_neg: v[4],
            kappa1: v[5],
            alpha12: v[6],
            beta12_pos: v[7],
            beta12_neg: v[8],
            omega2: v[9],
            gamma2: v[10],
            alpha2: v[11],
            beta2_pos: v[12],
            beta2_neg: v[13],
            kappa2: v[14],
            alpha21: v[15],
            beta21_pos: v[16],
            beta21_neg: v[17],
        })
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|v| v.is_finite())
    }
}

/// Coordinate-wise bounds for the daily parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBox {
    pub lo: [f64; GARCH_DIM],
    pub hi: [f64; GARCH_DIM],
}

impl Default for ParamBox {
    /// Default search box: intercepts in `[1e-12, 1]`, persistence and own
    /// realized-variance loadings in `[1e-6, 0.999]`, cross
    /// realized-variance loadings in `[-0.999, 0.999]`, jump and overnight
    /// loadings in `[-5, 5]`.
    fn default() -> Self {
        let mut lo = [0.0; GARCH_DIM];
        let mut hi = [0.0; GARCH_DIM];
        for block in 0..2 {
            let o = block * 9;
            lo[o] = 1e-12; // omega
            hi[o] = 1.0;
            lo[o + 1] = 1e-6; // gamma
            hi[o + 1] = 0.999;
            lo[o + 2] = 1e-6; // own alpha
            hi[o + 2] = 0.999;
            for j in 3..6 {
                lo[o + j] = -5.0; // beta_pos, beta_neg, kappa
                hi[o + j] = 5.0;
            }
            lo[o + 6] = -0.999; // cross alpha
            hi[o + 6] = 0.999;
            for j in 7..9 {
                lo[o + j] = -5.0; // cross betas
                hi[o + j] = 5.0;
            }
        }
        ParamBox { lo, hi }
    }
}

impl ParamBox {
    pub fn validate(&self) -> Result<()> {
        for i in 0..GARCH_DIM {
            if !(self.lo[i].is_finite() && self.hi[i].is_finite() && self.lo[i] <= self.hi[i]) {
                return Err(Error::invalid(format!(
                    "box bound {} invalid: [{}, {}]",
                    GARCH_COORD_NAMES[i], self.lo[i], self.hi[i]
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, v: &[f64; GARCH_DIM]) -> bool {
        (0..GARCH_DIM).all(|i| v[i] >= self.lo[i] && v[i] <= self.hi[i])
    }

    pub fn clamp(&self, v: &mut [f64; GARCH_DIM]) {
        for i in 0..GARCH_DIM {
            v[i] = v[i].clamp(self.lo[i], self.hi[i]);
        }
    }
}

/// Per-coordinate box check for a daily parameter vector.
#[derive(Debug, Clone)]
pub struct BoxReport {
    /// True when every coordinate is finite and inside the box.
    pub in_box: bool,
    /// `true` entries mark offending coordinates, in vector order.
    pub violations: [bool; GARCH_DIM],
}

impl BoxReport {
    /// Names of offending coordinates.
    pub fn offending(&self) -> Vec<&'static str> {
        (0..GARCH_DIM).filter(|&i| self.violations[i]).map(|i| GARCH_COORD_NAMES[i]).collect()
    }
}

/// Checks each coordinate of `p` against `bounds`, flagging non-finite or
/// out-of-box entries.
pub fn validate_garch_params(p: &GarchParams, bounds: &ParamBox) -> BoxReport {
    let v = p.to_vec();
    let mut violations = [false; GARCH_DIM];
    for i in 0..GARCH_DIM {
        violations[i] = !v[i].is_finite() || v[i] < bounds.lo[i] || v[i] > bounds.hi[i];
    }
    BoxReport { in_box: !violations.iter().any(|&b| b), violations }
}

/// `(e^x - 1) / x`: first-order exponential remainder ratio. Tends to 1 as
/// `x -> 0`.
pub fn exp_ratio1(x: f64) -> f64 {
    if x.abs() < 1e-5 {
        // series: sum_k x^k / (k+1)!
        1.0 + x / 2.0 + x * x / 6.0 + x * x * x / 24.0
    } else {
        x.exp_m1() / x
    }
}

/// `(e^x - 1 - x) / x^2`: second-order remainder ratio. Tends to 1/2.
///
/// The closed form cancels catastrophically for small `x` (relative error
/// grows like `eps / x`), so arguments below 1/4 go through the Taylor
/// series, which converges in a handful of terms there.
pub fn exp_ratio2(x: f64) -> f64 {
    if x.abs() < 0.25 {
        // sum_k x^k / (k+2)!: term_k = term_{k-1} * x / (k+2)
        let mut term = 0.5;
        let mut sum = term;
        for k in 1..30 {
            term *= x / (k as f64 + 2.0);
            sum += term;
            if term.abs() < 1e-20 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        (x.exp_m1() - x) / (x * x)
    }
}

/// `(e^x - 1 - x - x^2/2) / x^3`: third-order remainder ratio. Tends to 1/6.
///
/// Same cancellation guard as [`exp_ratio2`], with an even stronger
/// amplification (`eps / x^2`), hence the same series cutoff at 1/4.
pub fn exp_ratio3(x: f64) -> f64 {
    if x.abs() < 0.25 {
        // sum_k x^k / (k+3)!: term_k = term_{k-1} * x / (k+3)
        let mut term = 1.0 / 6.0;
        let mut sum = term;
        for k in 1..30 {
            term *= x / (k as f64 + 3.0);
            sum += term;
            if term.abs() < 1e-20 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        (x.exp_m1() - x - 0.5 * x * x) / (x * x * x)
    }
}

/// Gain with which the open-session variance enters the daily filter:
/// `(gamma_h - 1) * exp_ratio2(alpha_h) + exp_ratio1(alpha_h)`.
///
/// Positive for all `gamma_h in (0,1)`, `alpha_h in (0,1)`; the mapping
/// rejects parameter sets where rounding drives it nonpositive.
pub fn variance_carry_gain(gamma_h: f64, alpha_h: f64) -> f64 {
    (gamma_h - 1.0) * exp_ratio2(alpha_h) + exp_ratio1(alpha_h)
}

/// Intercept of the day-level conditional variance contributed by the
/// open-session dynamics (leverage noise, expected jump flow, session
/// intercept), before overnight aggregation.
pub fn session_intercept(m: &MarketStructural, pos: &JumpStream, neg: &JumpStream) -> f64 {
    let r2 = exp_ratio2(m.alpha_h);
    let r3 = exp_ratio3(m.alpha_h);
    let jump_flow = m.beta_h_pos * pos.intensity * pos.mean_squared_size()
        + m.beta_h_neg * neg.intensity * neg.mean_squared_size();
    (r2 - 2.0 * r3) * m.nu_h + r2 * jump_flow + r2 * m.omega_h
}

/// Day-level conditional variance of one market's session, given the
/// instantaneous variance at that session's open:
/// `session_intercept + variance_carry_gain * sigma2_open`.
pub fn session_h(m: &MarketStructural, pos: &JumpStream, neg: &JumpStream, sigma2_open: f64) -> f64 {
    session_intercept(m, pos, neg) + variance_carry_gain(m.gamma_h, m.alpha_h) * sigma2_open
}

/// Collapses the structural model onto the 18-coordinate daily GARCH filter.
///
/// Requires a jump spec because the filter intercepts absorb the expected
/// jump variance flow per session.
pub fn map_structural_to_garch(s: &StructuralParams, jumps: &JumpSpec) -> Result<GarchParams> {
    s.validate()?;
    jumps.validate()?;
    let mut out = [0.0f64; GARCH_DIM];
    for (l, m) in s.market.iter().enumerate() {
        let gain = variance_carry_gain(m.gamma_h, m.alpha_h);
        if !(gain > 0.0) || !gain.is_finite() {
            return Err(Error::numerical(format!(
                "market {} variance carry gain is not positive: {gain}",
                l + 1
            )));
        }
        let market = if l == 0 { Market::One } else { Market::Two };
        let gamma = m.gamma_l * m.gamma_h;
        let intercept = (1.0 - gamma)
            * session_intercept(m, &jumps.pos(market), &jumps.neg(market))
            + gain * (m.omega_l + m.gamma_l * m.omega_h);
        let o = l * 9;
        out[o] = intercept;
        out[o + 1] = gamma;
        out[o + 2] = gain * m.gamma_l * m.alpha_h;
        out[o + 3] = gain * m.gamma_l * m.beta_h_pos;
        out[o + 4] = gain * m.gamma_l * m.beta_h_neg;
        out[o + 5] = gain * m.alpha_l;
        out[o + 6] = gain * m.alpha_cross;
        out[o + 7] = gain * m.beta_cross_pos;
        out[o + 8] = gain * m.beta_cross_neg;
    }
    let p = GarchParams::from_slice(&out)?;
    if !p.is_finite() {
        return Err(Error::numerical("mapped daily parameters are not finite"));
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle for the remainder ratios: the Taylor series
    /// `sum_k x^k / (k + order)!` evaluated to convergence.
    fn ratio_series(order: u32, x: f64) -> f64 {
        let mut term = 1.0;
        for j in 1..=order {
            term /= j as f64;
        }
        let mut sum = term;
        for k in 1..60 {
            term *= x / (k as f64 + order as f64);
            sum += term;
            if term.abs() < 1e-20 * sum.abs() {
                break;
            }
        }
        sum
    }

    #[test]
    fn exp_ratios_match_series_oracle() {
        for &x in &[1e-9, 1e-6, 1e-4, 1e-3, 0.04, 0.3, 0.6, 0.7, 0.95] {
            assert!((exp_ratio1(x) - ratio_series(1, x)).abs() < 1e-14, "r1 at {x}");
            assert!((exp_ratio2(x) - ratio_series(2, x)).abs() < 1e-14, "r2 at {x}");
            assert!((exp_ratio3(x) - ratio_series(3, x)).abs() < 1e-13, "r3 at {x}");
        }
    }

    #[test]
    fn exp_ratio_values_at_baseline_accumulation() {
        // frozen values for alpha_h = 0.7
        assert!((exp_ratio1(0.7) - 1.448218).abs() < 1e-6);
        assert!((exp_ratio1(0.7) - 1.4482181535292522).abs() < 1e-14);
        assert!((exp_ratio2(0.7) - 0.6403116478989317).abs() < 1e-14);
        assert!((exp_ratio3(0.7) - 0.2004452112841881).abs() < 1e-14);
    }

    #[test]
    fn exp_ratios_tend_to_taylor_limits() {
        let x = 1e-4;
        assert!((exp_ratio1(x) - 1.0).abs() < 1e-4 + 1e-9);
        assert!((exp_ratio2(x) - 0.5).abs() < 1e-4);
        assert!((exp_ratio3(x) - 1.0 / 6.0).abs() < 1e-4);
        // and much closer at a truly tiny argument
        assert!((exp_ratio2(1e-9) - 0.5).abs() < 1e-9);
        assert!((exp_ratio3(1e-9) - 1.0 / 6.0).abs() < 1e-9);
    }

    #[test]
    fn carry_gain_positive_on_grid() {
        let mut g = 0.05;
        while g < 1.0 {
            let mut a = 0.05;
            while a < 1.0 {
                assert!(variance_carry_gain(g, a) > 0.0, "gain at gamma={g}, alpha={a}");
                a += 0.05;
            }
            g += 0.05;
        }
    }

    #[test]
    fn baseline_mapping_matches_hand_values() {
        let g =
            map_structural_to_garch(&StructuralParams::baseline(), &JumpSpec::baseline()).unwrap();
        // gamma_l * gamma_h
        assert!((g.gamma1 - 0.12).abs() < 1e-12);
        assert!((g.gamma2 - 0.16).abs() < 1e-12);
        // for the baseline set gamma_h = 1 - alpha_h, which makes the carry
        // gain exactly 1, so slope coordinates are plain products
        assert!((variance_carry_gain(0.3, 0.7) - 1.0).abs() < 1e-10);
        assert!((g.alpha1 - 0.28).abs() < 1e-10);
        assert!((g.beta1_pos - 0.10).abs() < 1e-10);
        assert!((g.beta1_neg - 0.12).abs() < 1e-10);
        assert!((g.kappa1 - 0.10).abs() < 1e-10);
        assert!((g.alpha12 - 0.12).abs() < 1e-10);
        assert!((g.alpha2 - 0.24).abs() < 1e-10);
        assert!((g.beta2_pos - 0.12).abs() < 1e-10);
        assert!((g.beta2_neg - 0.16).abs() < 1e-10);
        assert!((g.alpha21 - 0.12).abs() < 1e-10);
        // intercepts, assembled by hand from the remainder ratios
        let hand = |r2: f64, r3: f64, nu: f64, jf: f64, wh: f64, gamma: f64, wl: f64, gl: f64| {
            (1.0 - gamma) * ((r2 - 2.0 * r3) * nu + r2 * jf + r2 * wh) + (wl + gl * wh)
        };
        let w1 = hand(
            exp_ratio2(0.7),
            exp_ratio3(0.7),
            0.1,
            0.25 * 12.0 * 0.005 + 0.3 * 16.0 * 0.005,
            0.001,
            0.12,
            0.0005,
            0.4,
        );
        let w2 = hand(
            exp_ratio2(0.6),
            exp_ratio3(0.6),
            0.1,
            0.3 * 16.0 * 0.005 + 0.4 * 12.0 * 0.005,
            0.0015,
            0.16,
            0.0005,
            0.4,
        );
        assert!((g.omega1 - w1).abs() < 1e-12, "omega1 {} vs {}", g.omega1, w1);
        assert!((g.omega2 - w2).abs() < 1e-12, "omega2 {} vs {}", g.omega2, w2);
        // magnitudes frozen from an independent high-precision evaluation
        assert!((g.omega1 - 0.0445080378).abs() < 1e-9);
        assert!((g.omega2 - 0.0458233746).abs() < 1e-9);
    }

    #[test]
    fn baseline_mapping_lands_inside_default_box() {
        let g =
            map_structural_to_garch(&StructuralParams::baseline(), &JumpSpec::baseline()).unwrap();
        let report = validate_garch_params(&g, &ParamBox::default());
        assert!(report.in_box, "offending: {:?}", report.offending());
    }

    #[test]
    fn mapping_is_locally_continuous() {
        let base = StructuralParams::baseline();
        let jumps = JumpSpec::baseline();
        let g0 = map_structural_to_garch(&base, &jumps).unwrap().to_vec();
        // bump every structural field by 1e-9 one at a time
        for field in 0..12 {
            for l in 0..2 {
                let mut s = base.clone();
                let m = &mut s.market[l];
                let f = [
                    &mut m.omega_h,
                    &mut m.gamma_h,
                    &mut m.alpha_h,
                    &mut m.beta_h_pos,
                    &mut m.beta_h_neg,
                    &mut m.nu_h,
                    &mut m.omega_l,
                    &mut m.gamma_l,
                    &mut m.alpha_l,
                    &mut m.alpha_cross,
                    &mut m.beta_cross_pos,
                    &mut m.beta_cross_neg,
                ];
                *f[field] += 1e-9;
                let g1 = map_structural_to_garch(&s, &jumps).unwrap().to_vec();
                for i in 0..GARCH_DIM {
                    assert!(
                        (g1[i] - g0[i]).abs() <= 1e-6,
                        "coordinate {} jumped under field {} of market {}",
                        GARCH_COORD_NAMES[i],
                        field,
                        l
                    );
                }
            }
        }
    }

    #[test]
    fn vector_round_trip_and_names() {
        let g =
            map_structural_to_garch(&StructuralParams::baseline(), &JumpSpec::baseline()).unwrap();
        let v = g.to_vec();
        let back = GarchParams::from_slice(&v).unwrap();
        assert_eq!(g, back);
        let mut names: Vec<_> = GARCH_COORD_NAMES.to_vec();
        names.dedup();
        assert_eq!(names.len(), GARCH_DIM);
        assert!(GarchParams::from_slice(&v[..17]).is_err());
    }

    #[test]
    fn box_report_flags_offenders() {
        let mut g =
            map_structural_to_garch(&StructuralParams::baseline(), &JumpSpec::baseline()).unwrap();
        g.gamma1 = 1.5;
        g.kappa2 = -7.0;
        let report = validate_garch_params(&g, &ParamBox::default());
        assert!(!report.in_box);
        assert_eq!(report.offending(), vec!["gamma1", "kappa2"]);
        g.gamma1 = f64::NAN;
        let report = validate_garch_params(&g, &ParamBox::default());
        assert!(report.violations[1]);
    }

    #[test]
    fn invalid_structurals_rejected() {
        let mut s = StructuralParams::baseline();
        s.market[0].gamma_h = 1.0;
        assert!(s.validate().is_err());
        let mut s = StructuralParams::baseline();
        s.market[1].alpha_h = 0.0;
        assert!(s.validate().is_err());
        let mut s = StructuralParams::baseline();
        s.rho = 1.5;
        assert!(s.validate().is_err());
        let mut j = JumpSpec::baseline();
        j.streams[0][0].b = 0.0;
        assert!(j.validate().is_err());
    }

    #[test]
    fn mapping_finite_on_random_valid_structurals() {
        // coarse deterministic sweep across the admissible region
        let grid = [0.1, 0.35, 0.65, 0.9];
        for &gh in &grid {
            for &ah in &grid {
                for &gl in &grid {
                    let mut s = StructuralParams::baseline();
                    for l in 0..2 {
                        s.market[l].gamma_h = gh;
                        s.market[l].alpha_h = ah;
                        s.market[l].gamma_l = gl;
                    }
                    let g = map_structural_to_garch(&s, &JumpSpec::baseline()).unwrap();
                    assert!(g.is_finite());
                    assert!(g.gamma1 > 0.0 && g.gamma1 < 1.0);
                }
            }
        }
    }
}
