//! Daily measure panels from tick panels.
//!
//! Per market-day: detect jumps, form signed jump variations, subtract jump
//! sizes, run the selected variance estimator on the adjusted ticks, and
//! record the squared close-to-open return. Markets with a declared lunch
//! break are measured per sub-session and combined: variances add across
//! the halves plus the squared bridge return over the halt, jump variations
//! add directly.

use crate::calendar::Market;
use crate::error::Error;
use crate::measures::jumps::{default_window, detect_jumps, jump_adjusted};
use crate::measures::{arp, msrv, paremedi};
use crate::qmle::DailyData;
use crate::sim::TickPanel;
use crate::Result;

/// Floor for debiased variance estimates, which can dip below zero.
pub const RV_FLOOR: f64 = 1e-12;

/// Which integrated-variance estimator to run on jump-adjusted ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Msrv,
    Arp,
    Paremedi,
}

impl EstimatorKind {
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::Msrv => "msrv",
            EstimatorKind::Arp => "arp",
            EstimatorKind::Paremedi => "paremedi",
        }
    }

    pub fn from_label(s: &str) -> Result<Self> {
        match s {
            "msrv" => Ok(EstimatorKind::Msrv),
            "arp" => Ok(EstimatorKind::Arp),
            "paremedi" => Ok(EstimatorKind::Paremedi),
            other => Err(Error::invalid(format!(
                "unknown estimator '{other}' (expected msrv, arp, or paremedi)"
            ))),
        }
    }
}

/// Tuning knobs for the measurement pipeline.
#[derive(Debug, Clone, Copy)]
pub struct MeasureOptions {
    pub estimator: EstimatorKind,
    pub msrv_scales: usize,
    pub msrv_offset: usize,
    pub arp_c: f64,
    pub arp_a: f64,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        MeasureOptions {
            estimator: EstimatorKind::Msrv,
            msrv_scales: crate::measures::msrv::DEFAULT_SCALES,
            msrv_offset: crate::measures::msrv::DEFAULT_OFFSET,
            arp_c: crate::measures::arp::DEFAULT_C,
            arp_a: crate::measures::arp::DEFAULT_A,
        }
    }
}

impl MeasureOptions {
    pub fn with_estimator(estimator: EstimatorKind) -> Self {
        MeasureOptions { estimator, ..Default::default() }
    }
}

/// One detected jump in model-time units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEstimate {
    /// Midpoint of the tick gap containing the jump; strictly inside the
    /// session.
    pub time: f64,
    /// Signed size in log-price units.
    pub size: f64,
    /// Detection statistic that flagged it.
    pub stat: f64,
}

/// Daily panel plus provenance and diagnostics.
#[derive(Debug, Clone)]
pub struct DailyMeasures {
    pub data: DailyData,
    pub estimator: EstimatorKind,
    /// Number of variance estimates raised to [`RV_FLOOR`].
    pub floored: usize,
    /// Detected jumps per market per day.
    pub jumps: [Vec<Vec<JumpEstimate>>; 2],
}

impl DailyMeasures {
    pub fn n_days(&self) -> usize {
        self.data.n_days()
    }
}

struct SessionMeasures {
    rv: f64,
    jv_pos: f64,
    jv_neg: f64,
    jumps: Vec<JumpEstimate>,
}

fn run_estimator(adj: &[f64], opts: &MeasureOptions) -> Result<f64> {
    match opts.estimator {
        EstimatorKind::Msrv => msrv(adj, opts.msrv_scales, opts.msrv_offset),
        EstimatorKind::Arp => arp(adj, opts.arp_c, opts.arp_a),
        EstimatorKind::Paremedi => paremedi(adj),
    }
}

fn measure_session(times: &[f64], prices: &[f64], opts: &MeasureOptions) -> Result<SessionMeasures> {
    let m = prices.len().saturating_sub(1);
    if m + 1 < 16 {
        return Err(Error::data(format!("session with {} ticks is too short", m + 1)));
    }
    let detected = detect_jumps(prices, default_window(m))?;
    let mut jv_pos = 0.0;
    let mut jv_neg = 0.0;
    let mut jumps = Vec::with_capacity(detected.len());
    for j in &detected {
        if j.size > 0.0 {
            jv_pos += j.size * j.size;
        } else {
            jv_neg += j.size * j.size;
        }
        jumps.push(JumpEstimate {
            time: 0.5 * (times[j.index] + times[j.index + 1]),
            size: j.size,
            stat: j.stat,
        });
    }
    let adj = jump_adjusted(prices, &detected);
    let rv = run_estimator(&adj, opts)?;
    Ok(SessionMeasures { rv, jv_pos, jv_neg, jumps })
}

/// Builds the daily (RV, JV⁺, JV⁻, OV) panel for both markets.
pub fn build_daily_measures(panel: &TickPanel, opts: &MeasureOptions) -> Result<DailyMeasures> {
    let n = panel.days[0].len();
    if n == 0 {
        return Err(Error::data("empty tick panel"));
    }
    if panel.days[1].len() != n {
        return Err(Error::data("markets cover different day ranges"));
    }
    panel.calendar.validate()?;

    let mut data = DailyData::default();
    let mut floored = 0usize;
    let mut all_jumps: [Vec<Vec<JumpEstimate>>; 2] = [Vec::new(), Vec::new()];

    for (l, market) in [(0usize, Market::One), (1, Market::Two)] {
        for d in 0..n {
            let day = &panel.days[l][d];
            if day.times.len() != day.prices.len() || day.times.is_empty() {
                return Err(Error::data(format!(
                    "market {} day {} has a malformed session",
                    l + 1,
                    d + 1
                )));
            }

            let sm = match panel.calendar.lunch(market) {
                None => measure_session(&day.times, &day.prices, opts)?,
                Some(lb) => {
                    let (open, _) = panel.calendar.session_bounds(market, day.day);
                    let tol = 1e-9;
                    let split_am = day
                        .times
                        .iter()
                        .position(|&t| t > open + lb.start + tol)
                        .unwrap_or(day.times.len());
                    let pm_start = day
                        .times
                        .iter()
                        .position(|&t| t >= open + lb.end - tol)
                        .ok_or_else(|| {
                            Error::data(format!("market {} day {} has no afternoon ticks", l + 1, d + 1))
                        })?;
                    if split_am == 0 {
                        return Err(Error::data(format!(
                            "market {} day {} has no morning ticks",
                            l + 1,
                            d + 1
                        )));
                    }
                    if pm_start > split_am {
                        return Err(Error::data(format!(
                            "market {} day {} has ticks inside the lunch halt",
                            l + 1,
                            d + 1
                        )));
                    }
                    let am = measure_session(&day.times[..split_am], &day.prices[..split_am], opts)?;
                    let pm = measure_session(&day.times[pm_start..], &day.prices[pm_start..], opts)?;
                    let bridge = day.prices[pm_start] - day.prices[split_am - 1];
                    let mut jumps = am.jumps;
                    jumps.extend(pm.jumps);
                    SessionMeasures {
                        rv: am.rv + pm.rv + bridge * bridge,
                        jv_pos: am.jv_pos + pm.jv_pos,
                        jv_neg: am.jv_neg + pm.jv_neg,
                        jumps,
                    }
                }
            };

            let rv = if sm.rv < RV_FLOOR {
                floored += 1;
                RV_FLOOR
            } else {
                sm.rv
            };
            let ov = if d == 0 {
                0.0
            } else {
                let prev = &panel.days[l][d - 1];
                let r = day.prices[0] - prev.prices[prev.prices.len() - 1];
                r * r
            };
            data.rv[l].push(rv);
            data.jv_pos[l].push(sm.jv_pos);
            data.jv_neg[l].push(sm.jv_neg);
            data.ov[l].push(ov);
            all_jumps[l].push(sm.jumps);
        }
    }

    Ok(DailyMeasures { data, estimator: opts.estimator, floored, jumps: all_jumps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::{LunchBreak, MarketCalendar};
    use crate::measures::msrv::msrv_default;
    use crate::sim::DayTicks;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn lattice(open: f64, lam: f64, m: usize) -> Vec<f64> {
        (0..=m).map(|j| open + lam * j as f64 / m as f64).collect()
    }

    fn walk(n: usize, sd: f64, rng: &mut ChaCha12Rng) -> Vec<f64> {
        let mut y = vec![0.0; n];
        for i in 1..n {
            y[i] = y[i - 1] + sd * rng.sample::<f64, _>(StandardNormal);
        }
        y
    }

    fn panel_from(cal: MarketCalendar, prices: [Vec<Vec<f64>>; 2]) -> TickPanel {
        let mut days: [Vec<DayTicks>; 2] = [Vec::new(), Vec::new()];
        for l in 0..2 {
            let market = if l == 0 { Market::One } else { Market::Two };
            for (d, p) in prices[l].iter().enumerate() {
                let day = d as u32 + 1;
                let (open, _) = cal.session_bounds(market, day);
                let times = if p.is_empty() {
                    Vec::new() // placeholder day, replaced by the caller
                } else {
                    lattice(open, cal.session_len(market), p.len() - 1)
                };
                days[l].push(DayTicks { day, times, prices: p.clone() });
            }
        }
        TickPanel { calendar: cal, days }
    }

    #[test]
    fn estimator_labels_round_trip() {
        for k in [EstimatorKind::Msrv, EstimatorKind::Arp, EstimatorKind::Paremedi] {
            assert_eq!(EstimatorKind::from_label(k.label()).unwrap(), k);
        }
        assert!(EstimatorKind::from_label("krv").is_err());
    }

    #[test]
    fn plain_day_equals_direct_session_estimate() {
        let mut rng = ChaCha12Rng::seed_from_u64(100);
        let p1: Vec<Vec<f64>> = (0..2).map(|_| walk(129, 1e-3, &mut rng)).collect();
        let p2: Vec<Vec<f64>> = (0..2).map(|_| walk(129, 1e-3, &mut rng)).collect();
        let panel = panel_from(MarketCalendar::baseline(), [p1.clone(), p2]);
        let dm = build_daily_measures(&panel, &MeasureOptions::default()).unwrap();
        let detected = detect_jumps(&p1[0], default_window(128)).unwrap();
        let direct = msrv_default(&jump_adjusted(&p1[0], &detected)).unwrap();
        assert_eq!(dm.data.rv[0][0], direct.max(RV_FLOOR));
    }

    #[test]
    fn overnight_is_the_squared_close_to_open_return() {
        let mut d1 = vec![0.0; 64];
        d1[63] = 0.03;
        for v in d1.iter_mut().take(63) {
            *v = 0.03;
        }
        let d2 = vec![0.05; 64];
        let flat = vec![0.0; 64];
        let panel = panel_from(
            MarketCalendar::baseline(),
            [vec![d1, d2], vec![flat.clone(), flat]],
        );
        let dm = build_daily_measures(&panel, &MeasureOptions::default()).unwrap();
        assert_eq!(dm.data.ov[0][0], 0.0);
        assert!((dm.data.ov[0][1] - 4e-4).abs() < 1e-15);
        assert_eq!(dm.data.ov[1][1], 0.0);
    }

    #[test]
    fn lunch_composite_reduces_to_the_bridge_on_flat_halves() {
        let cal = MarketCalendar::baseline()
            .with_lunch(Market::One, LunchBreak { start: 0.10, end: 0.15 })
            .unwrap();
        // AM flat at 0, PM flat at 0.01; m = 40 ticks per half
        let mut times = Vec::new();
        let mut prices = Vec::new();
        for j in 0..=40 {
            times.push(0.10 * j as f64 / 40.0);
            prices.push(0.0);
        }
        for j in 0..=40 {
            times.push(0.15 + 0.10 * j as f64 / 40.0);
            prices.push(0.01);
        }
        let flat = vec![0.0; 64];
        let mut panel = panel_from(cal.clone(), [vec![vec![]], vec![flat]]);
        panel.days[0][0] = DayTicks { day: 1, times, prices };
        let dm = build_daily_measures(&panel, &MeasureOptions::default()).unwrap();
        assert!((dm.data.rv[0][0] - 1e-4).abs() < 1e-15);
        assert_eq!(dm.data.jv_pos[0][0], 0.0);
        assert_eq!(dm.data.jv_neg[0][0], 0.0);
    }

    #[test]
    fn ticks_inside_the_halt_are_rejected() {
        let cal = MarketCalendar::baseline()
            .with_lunch(Market::One, LunchBreak { start: 0.10, end: 0.15 })
            .unwrap();
        let mut times = Vec::new();
        let mut prices = Vec::new();
        for j in 0..=90 {
            times.push(0.25 * j as f64 / 90.0); // lattice crosses the halt
            prices.push(0.0);
        }
        let flat = vec![0.0; 64];
        let mut panel = panel_from(cal, [vec![vec![]], vec![flat]]);
        panel.days[0][0] = DayTicks { day: 1, times, prices };
        assert!(build_daily_measures(&panel, &MeasureOptions::default()).is_err());
    }

    #[test]
    fn jumps_are_removed_and_reported_inside_the_session() {
        let mut p = vec![0.0; 2161];
        for v in p.iter_mut().skip(1001) {
            *v += 0.01;
        }
        for v in p.iter_mut().skip(1801) {
            *v -= 0.02;
        }
        let flat = vec![0.0; 64];
        let panel = panel_from(MarketCalendar::baseline(), [vec![p], vec![flat]]);
        let dm = build_daily_measures(&panel, &MeasureOptions::default()).unwrap();
        assert!((dm.data.jv_pos[0][0] - 1e-4).abs() < 1e-12);
        assert!((dm.data.jv_neg[0][0] - 4e-4).abs() < 1e-12);
        assert!(dm.data.rv[0][0] <= 1e-9, "jumps must not leak into rv");
        assert_eq!(dm.jumps[0][0].len(), 2);
        for j in &dm.jumps[0][0] {
            assert!(j.time > 0.0 && j.time < 0.25);
            assert!(j.size.abs() > 0.0);
        }
    }

    #[test]
    fn short_sessions_error() {
        let tiny = vec![0.0; 8];
        let flat = vec![0.0; 64];
        let panel = panel_from(MarketCalendar::baseline(), [vec![tiny], vec![flat]]);
        assert!(build_daily_measures(&panel, &MeasureOptions::default()).is_err());
    }
}
