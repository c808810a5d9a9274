//! Tick ingestion, including the wall-clock to model-time mapping.
//!
//! Model time runs in days with market 1 opening at integer times and
//! market 2 opening `tau` later. Data providers stamp ticks with exchange
//! wall-clock times instead; when the configuration declares a `[clock]`
//! section, the `time` column is read as `HH:MM:SS` and mapped affinely
//! onto each market's model session. Without a clock declaration the
//! column is already model time and the core reader is used unchanged.

use std::path::Path;

use contagion_garch::calendar::{Market, MarketCalendar};
use contagion_garch::io::{assemble_tick_panel, read_tick_panel, TickRow};
use contagion_garch::sim::TickPanel;

use crate::config::ClockSection;
use crate::error::{CliError, CliResult};

/// Seconds since midnight for a `HH:MM:SS` stamp (fractional seconds
/// allowed).
fn parse_wall_seconds(s: &str) -> Option<f64> {
    let mut parts = s.trim().split(':');
    let h: u32 = parts.next()?.parse().ok()?;
    let m: u32 = parts.next()?.parse().ok()?;
    let sec: f64 = parts.next()?.parse().ok()?;
    if parts.next().is_some() || h > 23 || m > 59 || !(0.0..60.0).contains(&sec) {
        return None;
    }
    Some(f64::from(h) * 3600.0 + f64::from(m) * 60.0 + sec)
}

/// Per-market affine session maps derived from a clock declaration.
#[derive(Debug, Clone, Copy)]
pub struct SessionClock {
    open_secs: [f64; 2],
    close_secs: [f64; 2],
    model_open_offset: [f64; 2],
    lambda: [f64; 2],
}

impl SessionClock {
    pub fn from_config(clock: &ClockSection, cal: &MarketCalendar) -> CliResult<Self> {
        let mut open_secs = [0.0; 2];
        let mut close_secs = [0.0; 2];
        for (l, (open, close)) in
            [(&clock.open1, &clock.close1), (&clock.open2, &clock.close2)].iter().enumerate()
        {
            open_secs[l] = parse_wall_seconds(open).ok_or_else(|| {
                CliError::validation(format!("clock: cannot parse open time '{open}'"))
            })?;
            close_secs[l] = parse_wall_seconds(close).ok_or_else(|| {
                CliError::validation(format!("clock: cannot parse close time '{close}'"))
            })?;
            if close_secs[l] <= open_secs[l] {
                return Err(CliError::validation(format!(
                    "clock: market {} closes at or before it opens",
                    l + 1
                )));
            }
        }
        Ok(SessionClock {
            open_secs,
            close_secs,
            model_open_offset: [0.0, cal.tau],
            lambda: [cal.lambda1, cal.lambda2],
        })
    }

    /// Maps a wall-clock stamp on `day` to model time, erroring on stamps
    /// outside the declared session.
    pub fn to_model_time(&self, market: Market, day: u32, wall: &str, line: u64) -> CliResult<f64> {
        let l = market.idx();
        let secs = parse_wall_seconds(wall).ok_or_else(|| {
            CliError::validation(format!("line {line}: cannot parse wall-clock time '{wall}'"))
        })?;
        if secs < self.open_secs[l] || secs > self.close_secs[l] {
            return Err(CliError::validation(format!(
                "line {line}: time {wall} outside market {} trading hours",
                l + 1
            )));
        }
        let frac = (secs - self.open_secs[l]) / (self.close_secs[l] - self.open_secs[l]);
        Ok(f64::from(day - 1) + self.model_open_offset[l] + frac * self.lambda[l])
    }
}

/// Reads a tick CSV into a validated panel.
///
/// With a clock declaration the `time` column holds `HH:MM:SS` stamps;
/// otherwise it holds model time directly. All structural validation
/// (ordering, session bounds, lunch halts, day alignment) reports the
/// offending line either way.
pub fn ingest_ticks(
    path: &Path,
    cal: &MarketCalendar,
    clock: Option<&ClockSection>,
) -> CliResult<TickPanel> {
    let Some(clock) = clock else {
        return Ok(read_tick_panel(path, cal)?);
    };
    let session = SessionClock::from_config(clock, cal)?;

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
        .clone();
    let cols: Vec<&str> = headers.iter().map(str::trim).collect();
    if cols != ["market", "day", "time", "price"] {
        return Err(CliError::validation(format!(
            "tick file must have columns [\"market\", \"day\", \"time\", \"price\"], found {cols:?}"
        )));
    }

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::validation(e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 4 {
            return Err(CliError::validation(format!("line {line}: expected 4 fields")));
        }
        let market_raw: u8 = record[0]
            .trim()
            .parse()
            .map_err(|_| CliError::validation(format!("line {line}: bad market '{}'", &record[0])))?;
        let market = Market::from_label(market_raw)
            .map_err(|e| CliError::validation(format!("line {line}: {e}")))?;
        let day: u32 = record[1]
            .trim()
            .parse()
            .map_err(|_| CliError::validation(format!("line {line}: bad day '{}'", &record[1])))?;
        if day == 0 {
            return Err(CliError::validation(format!("line {line}: days are 1-based")));
        }
        let price: f64 = record[3]
            .trim()
            .parse()
            .map_err(|_| CliError::validation(format!("line {line}: bad price '{}'", &record[3])))?;
        let time = session.to_model_time(market, day, &record[2], line)?;
        rows.push(TickRow { line, market, day, time, price });
    }
    Ok(assemble_tick_panel(rows, cal)?)
}
