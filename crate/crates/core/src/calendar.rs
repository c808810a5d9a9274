//! Trading calendar for two markets with disjoint daily sessions.
//!
//! Time is measured in days. On day `i` (1-based) market 1 trades over
//! `[i-1, i-1+lambda1]` and market 2 over `[i-1+tau, i-1+tau+lambda2]`,
//! so market 1 always opens first and both sessions fit inside one day.
//! Everything outside a market's session is that market's overnight
//! period; the other market's session is always contained in it.

use crate::error::Error;
use crate::Result;

/// Market label. `One` opens at integer days, `Two` opens `tau` later.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Market {
    One,
    Two,
}

impl Market {
    /// 0-based index, handy for per-market arrays.
    pub fn idx(self) -> usize {
        match self {
            Market::One => 0,
            Market::Two => 1,
        }
    }

    pub fn other(self) -> Market {
        match self {
            Market::One => Market::Two,
            Market::Two => Market::One,
        }
    }

    /// 1-based label used in CSV files.
    pub fn label(self) -> u8 {
        self.idx() as u8 + 1
    }

    pub fn from_label(label: u8) -> Result<Market> {
        match label {
            1 => Ok(Market::One),
            2 => Ok(Market::Two),
            other => Err(Error::data(format!("market label must be 1 or 2, got {other}"))),
        }
    }
}

/// Intraday trading halt, stored as day-fraction offsets from the open.
///
/// Ticks never fall inside `(start, end)`; realized measures bridge the
/// halt with a dedicated squared return term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LunchBreak {
    /// Offset of the halt start from the session open, in day fractions.
    pub start: f64,
    /// Offset of the halt end from the session open, in day fractions.
    pub end: f64,
}

/// Session lengths and offset of the two markets.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketCalendar {
    /// Session length of market 1 as a day fraction, in (0, 1).
    pub lambda1: f64,
    /// Session length of market 2 as a day fraction, in (0, 1).
    pub lambda2: f64,
    /// Offset of market 2's open after market 1's open; `lambda1 <= tau`
    /// and `tau + lambda2 <= 1`.
    pub tau: f64,
    /// Optional intraday halt per market (index 0 = market 1).
    pub lunch: [Option<LunchBreak>; 2],
}

impl MarketCalendar {
    /// Calendar with both constraints checked.
    pub fn new(lambda1: f64, lambda2: f64, tau: f64) -> Result<Self> {
        let cal = MarketCalendar { lambda1, lambda2, tau, lunch: [None, None] };
        cal.validate()?;
        Ok(cal)
    }

    /// Quarter-day sessions with market 2 opening half a day late; the
    /// baseline layout of the simulation study.
    pub fn baseline() -> Self {
        MarketCalendar { lambda1: 0.25, lambda2: 0.25, tau: 0.5, lunch: [None, None] }
    }

    pub fn with_lunch(mut self, market: Market, lunch: LunchBreak) -> Result<Self> {
        self.lunch[market.idx()] = Some(lunch);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        if !(self.lambda1 > 0.0 && self.lambda1 < 1.0) || !self.lambda1.is_finite() {
            return bad(format!("lambda1 must be in (0,1), got {}", self.lambda1));
        }
        if !(self.lambda2 > 0.0 && self.lambda2 < 1.0) || !self.lambda2.is_finite() {
            return bad(format!("lambda2 must be in (0,1), got {}", self.lambda2));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if self.lambda1 > self.tau {
            return bad(format!(
                "market 1 must close before market 2 opens: lambda1 {} > tau {}",
                self.lambda1, self.tau
            ));
        }
        if self.tau + self.lambda2 > 1.0 {
            return bad(format!(
                "market 2 must close within the day: tau + lambda2 = {} > 1",
                self.tau + self.lambda2
            ));
        }
        for m in [Market::One, Market::Two] {
            if let Some(l) = self.lunch[m.idx()] {
                let len = self.session_len(m);
                if !(l.start > 0.0 && l.start < l.end && l.end < len) {
                    return bad(format!(
                        "lunch break ({}, {}) must satisfy 0 < start < end < session length {}",
                        l.start, l.end, len
                    ));
                }
            }
        }
        Ok(())
    }

    /// Session length of `market` as a day fraction.
    pub fn session_len(&self, market: Market) -> f64 {
        match market {
            Market::One => self.lambda1,
            Market::Two => self.lambda2,
        }
    }

    /// `(open, close)` times of `market`'s session on 1-based `day`.
    ///
    /// ```
    /// use contagion_garch::calendar::{Market, MarketCalendar};
    ///
    /// let cal = MarketCalendar::baseline(); // lambda = 0.25 / 0.25, tau = 0.5
    /// assert_eq!(cal.session_bounds(Market::One, 1), (0.0, 0.25));
    /// assert_eq!(cal.session_bounds(Market::Two, 1), (0.5, 0.75));
    /// ```
    pub fn session_bounds(&self, market: Market, day: u32) -> (f64, f64) {
        debug_assert!(day >= 1, "days are 1-based");
        let base = f64::from(day - 1);
        match market {
            Market::One => (base, base + self.lambda1),
            Market::Two => (base + self.tau, base + self.tau + self.lambda2),
        }
    }

    /// Overnight period that follows `market`'s day-`day` session: from that
    /// session's close to the next day's open.
    pub fn overnight_bounds(&self, market: Market, day: u32) -> (f64, f64) {
        let (_, close) = self.session_bounds(market, day);
        let (next_open, _) = self.session_bounds(market, day + 1);
        (close, next_open)
    }

    /// Length of each overnight period of `market`, `1 - lambda`.
    pub fn overnight_len(&self, market: Market) -> f64 {
        1.0 - self.session_len(market)
    }

    /// Lunch break of `market`, if declared.
    pub fn lunch(&self, market: Market) -> Option<LunchBreak> {
        self.lunch[market.idx()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_session_bounds() {
        let cal = MarketCalendar::baseline();
        assert_eq!(cal.session_bounds(Market::One, 1), (0.0, 0.25));
        assert_eq!(cal.session_bounds(Market::Two, 1), (0.5, 0.75));
        assert_eq!(cal.session_bounds(Market::One, 2), (1.0, 1.25));
    }

    #[test]
    fn asian_session_hours() {
        // 5.5 trading hours opening at integer days.
        let cal = MarketCalendar::new(5.5 / 24.0, 6.5 / 24.0, 13.0 / 24.0).unwrap();
        let (open, close) = cal.session_bounds(Market::One, 3);
        assert_eq!(open, 2.0);
        assert!((close - (2.0 + 5.5 / 24.0)).abs() < 1e-15);
    }

    #[test]
    fn overnight_spans_other_session() {
        let cal = MarketCalendar::baseline();
        let (c1, o1) = cal.overnight_bounds(Market::One, 1);
        assert_eq!((c1, o1), (0.25, 1.0));
        // market 2's whole day-1 session sits inside market 1's overnight
        let (o2, c2) = cal.session_bounds(Market::Two, 1);
        assert!(c1 <= o2 && c2 <= o1);
    }

    #[test]
    fn ordering_constraints_enforced() {
        assert!(MarketCalendar::new(0.6, 0.25, 0.5).is_err()); // lambda1 > tau
        assert!(MarketCalendar::new(0.25, 0.6, 0.5).is_err()); // tau + lambda2 > 1
        assert!(MarketCalendar::new(0.0, 0.25, 0.5).is_err());
        assert!(MarketCalendar::new(0.25, 1.0, 0.5).is_err());
        assert!(MarketCalendar::new(0.25, 0.25, 0.0).is_err());
    }

    #[test]
    fn lunch_must_sit_inside_session() {
        let cal = MarketCalendar::new(5.5 / 24.0, 6.5 / 24.0, 13.0 / 24.0).unwrap();
        let ok = cal
            .clone()
            .with_lunch(Market::One, LunchBreak { start: 2.0 / 24.0, end: 3.5 / 24.0 });
        assert!(ok.is_ok());
        let bad = cal.with_lunch(Market::One, LunchBreak { start: 2.0 / 24.0, end: 6.0 / 24.0 });
        assert!(bad.is_err());
    }
}
