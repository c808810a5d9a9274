//! CSV serialization for panels, measures, parameters and reports.
//!
//! Every writer accepts an optional run stamp that is emitted as `#`
//! comment lines before the header, so each artifact names the
//! configuration hash and master seed that produced it; readers skip
//! comment lines. Floating-point columns are written with 17 significant
//! digits, which round-trips every finite `f64` bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write as IoWrite};
use std::path::Path;

use crate::calendar::{Market, MarketCalendar};
use crate::error::Error;
use crate::inference::BreakTestReport;
use crate::measures::{DailyMeasures, EstimatorKind};
use crate::qmle::DailyData;
use crate::sim::{DayTicks, GroundTruth, TickPanel};
use crate::Result;

/// Provenance written into every output file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunStamp {
    pub config_hash: u64,
    pub seed: u64,
}

impl RunStamp {
    fn comment_line(&self) -> String {
        format!("# config_hash={:016x} seed={}\n", self.config_hash, self.seed)
    }
}

/// 17 significant digits: enough to reproduce any finite `f64` exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(field: &str, line: u64, what: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::data(format!("line {line}: cannot parse {what} '{field}'")))
}

fn parse_u32(field: &str, line: u64, what: &str) -> Result<u32> {
    field
        .trim()
        .parse::<u32>()
        .map_err(|_| Error::data(format!("line {line}: cannot parse {what} '{field}'")))
}

fn parse_market(field: &str, line: u64) -> Result<Market> {
    let raw = parse_u32(field, line, "market")?;
    if raw == 0 || raw > 2 {
        return Err(Error::data(format!("line {line}: market label must be 1 or 2, got {raw}")));
    }
    Market::from_label(raw as u8)
}

fn open_with_stamp(path: &Path, stamp: Option<&RunStamp>, extra: &[String]) -> Result<BufWriter<File>> {
    let mut w = BufWriter::new(File::create(path)?);
    if let Some(s) = stamp {
        w.write_all(s.comment_line().as_bytes())?;
    }
    for line in extra {
        writeln!(w, "# {line}")?;
    }
    Ok(w)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_path(path)?)
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

/// Scans the leading `#` comments of a file for `key=value` pairs.
fn comment_value(path: &Path, key: &str) -> Result<Option<String>> {
    let reader = BufReader::new(File::open(path)?);
    let needle = format!("{key}=");
    for line in reader.lines() {
        let line = line?;
        if !line.starts_with('#') {
            break;
        }
        for token in line.trim_start_matches('#').split_whitespace() {
            if let Some(rest) = token.strip_prefix(&needle) {
                return Ok(Some(rest.to_string()));
            }
        }
    }
    Ok(None)
}

/// Writes tick rows `market,day,time,price`, market 1 first.
pub fn write_tick_panel(path: &Path, panel: &TickPanel, stamp: Option<&RunStamp>) -> Result<()> {
    let mut w = open_with_stamp(path, stamp, &[])?;
    writeln!(w, "market,day,time,price")?;
    for (l, days) in panel.days.iter().enumerate() {
        for day in days {
            for (t, p) in day.times.iter().zip(&day.prices) {
                writeln!(w, "{},{},{},{}", l + 1, day.day, fmt_f64(*t), fmt_f64(*p))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// One parsed tick row tagged with its source line for error reporting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickRow {
    /// 1-based source line for error messages; 0 when synthetic.
    pub line: u64,
    pub market: Market,
    pub day: u32,
    pub time: f64,
    pub price: f64,
}

/// Validates tick rows against a declared calendar and groups them into a
/// panel.
///
/// Rejects unsorted or duplicate timestamps, out-of-session ticks, and
/// ticks inside a declared lunch halt, naming the offending line. Front
/// ends that map wall-clock stamps to model time feed this directly.
pub fn assemble_tick_panel(
    rows: impl IntoIterator<Item = TickRow>,
    cal: &MarketCalendar,
) -> Result<TickPanel> {
    cal.validate()?;
    let tol = 1e-9;
    let mut days: [Vec<DayTicks>; 2] = [Vec::new(), Vec::new()];
    for row in rows {
        let TickRow { line, market, day, time, price } = row;
        if day == 0 {
            return Err(Error::data(format!("line {line}: days are 1-based")));
        }
        if !price.is_finite() || !time.is_finite() {
            return Err(Error::data(format!("line {line}: non-finite tick")));
        }

        let (open, close) = cal.session_bounds(market, day);
        if time < open - tol || time > close + tol {
            return Err(Error::data(format!(
                "line {line}: time {time} outside market {} day {day} session [{open}, {close}]",
                market.label()
            )));
        }
        if let Some(lb) = cal.lunch(market) {
            if time > open + lb.start + tol && time < open + lb.end - tol {
                return Err(Error::data(format!(
                    "line {line}: time {time} falls inside the lunch halt"
                )));
            }
        }

        let list = &mut days[market.idx()];
        match list.last_mut() {
            Some(last) if last.day == day => {
                let prev = *last.times.last().expect("non-empty day");
                if time <= prev {
                    return Err(Error::data(format!(
                        "line {line}: time {time} not after {prev} (unsorted or duplicate)"
                    )));
                }
                last.times.push(time);
                last.prices.push(price);
            }
            Some(last) if day < last.day => {
                return Err(Error::data(format!(
                    "line {line}: day {day} after day {} (days must be grouped in order)",
                    last.day
                )));
            }
            _ => {
                let expected = list.last().map(|d| d.day + 1).unwrap_or(1);
                if day != expected {
                    return Err(Error::data(format!(
                        "line {line}: market {} jumps to day {day}, expected day {expected}",
                        market.label()
                    )));
                }
                days[market.idx()].push(DayTicks {
                    day,
                    times: vec![time],
                    prices: vec![price],
                });
            }
        }
    }

    if days[0].len() != days[1].len() {
        return Err(Error::data(format!(
            "markets cover different day counts: {} vs {}",
            days[0].len(),
            days[1].len()
        )));
    }
    if days[0].is_empty() {
        return Err(Error::data("tick file holds no rows"));
    }
    Ok(TickPanel { calendar: cal.clone(), days })
}

/// Reads and validates a tick CSV against a declared calendar.
///
/// The `time` column is model time in day units; see
/// [`assemble_tick_panel`] for the validation rules.
pub fn read_tick_panel(path: &Path, cal: &MarketCalendar) -> Result<TickPanel> {
    cal.validate()?;
    let mut reader = csv_reader(path)?;
    let headers = reader.headers()?.clone();
    let expect = ["market", "day", "time", "price"];
    let cols: Vec<&str> = headers.iter().map(str::trim).collect();
    if cols != expect {
        return Err(Error::data(format!(
            "tick file must have columns {expect:?}, found {cols:?}"
        )));
    }

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record_line(&record);
        if record.len() != 4 {
            return Err(Error::data(format!("line {line}: expected 4 fields")));
        }
        rows.push(TickRow {
            line,
            market: parse_market(&record[0], line)?,
            day: parse_u32(&record[1], line, "day")?,
            time: parse_f64(&record[2], line, "time")?,
            price: parse_f64(&record[3], line, "price")?,
        });
    }
    assemble_tick_panel(rows, cal)
}

/// Writes latent per-day rows `market,day,iv,ijp,ijn,ov,h`; the clamp
/// diagnostics ride along as comment lines.
pub fn write_ground_truth(path: &Path, truth: &GroundTruth, stamp: Option<&RunStamp>) -> Result<()> {
    let extra = vec![format!(
        "clamped_steps={} total_steps={}",
        truth.clamped_steps, truth.total_steps
    )];
    let mut w = open_with_stamp(path, stamp, &extra)?;
    writeln!(w, "market,day,iv,ijp,ijn,ov,h")?;
    for l in 0..2 {
        for i in 0..truth.n_days() {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                l + 1,
                i + 1,
                fmt_f64(truth.iv[l][i]),
                fmt_f64(truth.ijp[l][i]),
                fmt_f64(truth.ijn[l][i]),
                fmt_f64(truth.ov[l][i]),
                fmt_f64(truth.h[l][i]),
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a latent panel back, including the clamp diagnostics.
pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    let mut truth = GroundTruth {
        iv: [Vec::new(), Vec::new()],
        ijp: [Vec::new(), Vec::new()],
        ijn: [Vec::new(), Vec::new()],
        ov: [Vec::new(), Vec::new()],
        h: [Vec::new(), Vec::new()],
        clamped_steps: 0,
        total_steps: 0,
    };
    if let Some(v) = comment_value(path, "clamped_steps")? {
        truth.clamped_steps = v.parse().map_err(|_| Error::data("bad clamped_steps comment"))?;
    }
    if let Some(v) = comment_value(path, "total_steps")? {
        truth.total_steps = v.parse().map_err(|_| Error::data("bad total_steps comment"))?;
    }
    let mut reader = csv_reader(path)?;
    for record in reader.records() {
        let record = record?;
        let line = record_line(&record);
        if record.len() != 7 {
            return Err(Error::data(format!("line {line}: expected 7 fields")));
        }
        let market = parse_market(&record[0], line)?;
        let day = parse_u32(&record[1], line, "day")? as usize;
        let l = market.idx();
        if day != truth.iv[l].len() + 1 {
            return Err(Error::data(format!("line {line}: days out of order")));
        }
        truth.iv[l].push(parse_f64(&record[2], line, "iv")?);
        truth.ijp[l].push(parse_f64(&record[3], line, "ijp")?);
        truth.ijn[l].push(parse_f64(&record[4], line, "ijn")?);
        truth.ov[l].push(parse_f64(&record[5], line, "ov")?);
        truth.h[l].push(parse_f64(&record[6], line, "h")?);
    }
    if truth.iv[0].len() != truth.iv[1].len() || truth.iv[0].is_empty() {
        return Err(Error::data("latent panel is empty or unbalanced"));
    }
    Ok(truth)
}

/// Writes daily rows `day,market,rv,jv_pos,jv_neg,ov,estimator`.
pub fn write_daily_measures(
    path: &Path,
    m: &DailyMeasures,
    stamp: Option<&RunStamp>,
) -> Result<()> {
    let mut w = open_with_stamp(path, stamp, &[])?;
    writeln!(w, "day,market,rv,jv_pos,jv_neg,ov,estimator")?;
    let d = &m.data;
    for i in 0..d.n_days() {
        for l in 0..2 {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                i + 1,
                l + 1,
                fmt_f64(d.rv[l][i]),
                fmt_f64(d.jv_pos[l][i]),
                fmt_f64(d.jv_neg[l][i]),
                fmt_f64(d.ov[l][i]),
                m.estimator.label(),
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a daily measure panel; detection diagnostics are not serialized,
/// so the jump lists come back empty.
pub fn read_daily_measures(path: &Path) -> Result<DailyMeasures> {
    let mut reader = csv_reader(path)?;
    let mut data = DailyData::default();
    let mut estimator: Option<EstimatorKind> = None;
    for record in reader.records() {
        let record = record?;
        let line = record_line(&record);
        if record.len() != 7 {
            return Err(Error::data(format!("line {line}: expected 7 fields")));
        }
        let day = parse_u32(&record[0], line, "day")? as usize;
        let market = parse_market(&record[1], line)?;
        let l = market.idx();
        if day != data.rv[l].len() + 1 {
            return Err(Error::data(format!("line {line}: days out of order")));
        }
        data.rv[l].push(parse_f64(&record[2], line, "rv")?);
        data.jv_pos[l].push(parse_f64(&record[3], line, "jv_pos")?);
        data.jv_neg[l].push(parse_f64(&record[4], line, "jv_neg")?);
        data.ov[l].push(parse_f64(&record[5], line, "ov")?);
        let kind = EstimatorKind::from_label(record[6].trim())?;
        match estimator {
            None => estimator = Some(kind),
            Some(k) if k == kind => {}
            Some(k) => {
                return Err(Error::data(format!(
                    "line {line}: mixed estimators {} and {}",
                    k.label(),
                    kind.label()
                )));
            }
        }
    }
    data.validate()?;
    let n = data.n_days();
    Ok(DailyMeasures {
        data,
        estimator: estimator.ok_or_else(|| Error::data("measure file holds no rows"))?,
        floored: 0,
        jumps: [vec![Vec::new(); n], vec![Vec::new(); n]],
    })
}

/// Writes named coordinates as `coordinate,estimate` rows; the workhorse
/// format for parameter vectors and fit results.
pub fn write_coordinates(
    path: &Path,
    names: &[&str],
    values: &[f64],
    stamp: Option<&RunStamp>,
    extra_comments: &[String],
) -> Result<()> {
    if names.len() != values.len() {
        return Err(Error::invalid("coordinate names and values differ in length"));
    }
    let mut w = open_with_stamp(path, stamp, &[])?;
    for line in extra_comments {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "coordinate,estimate")?;
    for (name, v) in names.iter().zip(values) {
        writeln!(w, "{},{}", name, fmt_f64(*v))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `coordinate,estimate` rows in file order.
pub fn read_coordinates(path: &Path) -> Result<Vec<(String, f64)>> {
    let mut reader = csv_reader(path)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record_line(&record);
        if record.len() != 2 {
            return Err(Error::data(format!("line {line}: expected 2 fields")));
        }
        out.push((record[0].trim().to_string(), parse_f64(&record[1], line, "estimate")?));
    }
    if out.is_empty() {
        return Err(Error::data("coordinate file holds no rows"));
    }
    Ok(out)
}

/// Writes a break-test report as CSV: three Wald rows, then one row per
/// coordinate with both window estimates, standard errors, and the Z test.
pub fn write_break_report(path: &Path, report: &BreakTestReport, stamp: Option<&RunStamp>) -> Result<()> {
    let extra = vec![format!("n1={} n2={} r={}", report.n1, report.n2, fmt_f64(report.r))];
    let mut w = open_with_stamp(path, stamp, &extra)?;
    writeln!(w, "kind,name,estimate1,se1,estimate2,se2,statistic,df,p")?;
    for (name, wald) in [
        ("joint", &report.joint),
        ("market1", &report.market1),
        ("market2", &report.market2),
    ] {
        writeln!(
            w,
            "wald,{},,,,,{},{},{}",
            name,
            fmt_f64(wald.stat),
            wald.df,
            fmt_f64(wald.p)
        )?;
    }
    for row in &report.rows {
        writeln!(
            w,
            "z,{},{},{},{},{},{},1,{}",
            row.name,
            fmt_f64(row.estimate1),
            fmt_f64(row.se1),
            fmt_f64(row.estimate2),
            fmt_f64(row.se2),
            fmt_f64(row.z),
            fmt_f64(row.p)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a plain-text artifact (reports, diagnostics) with the stamp.
pub fn write_text(path: &Path, text: &str, stamp: Option<&RunStamp>) -> Result<()> {
    let mut w = open_with_stamp(path, stamp, &[])?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::MeasureOptions;
    use crate::params::GARCH_COORD_NAMES;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn awkward_values(rng: &mut ChaCha12Rng, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let v: f64 = rng.gen::<f64>();
                // mix magnitudes so shortest decimal forms would differ
                v * 10f64.powi(rng.gen_range(-12..6))
            })
            .collect()
    }

    fn tick_fixture(cal: &MarketCalendar, n_days: usize, ticks: usize) -> TickPanel {
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let mut days: [Vec<DayTicks>; 2] = [Vec::new(), Vec::new()];
        for (l, market) in [(0, Market::One), (1, Market::Two)] {
            for d in 1..=n_days {
                let (open, _) = cal.session_bounds(market, d as u32);
                let lam = cal.session_len(market);
                let times: Vec<f64> =
                    (0..=ticks).map(|j| open + lam * j as f64 / ticks as f64).collect();
                let mut price = 0.0;
                let prices: Vec<f64> = (0..=ticks)
                    .map(|_| {
                        price += 1e-3 * (rng.gen::<f64>() - 0.5);
                        price
                    })
                    .collect();
                days[l].push(DayTicks { day: d as u32, times, prices });
            }
        }
        TickPanel { calendar: cal.clone(), days }
    }

    #[test]
    fn seventeen_digit_floats_round_trip_exactly() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for v in awkward_values(&mut rng, 500) {
            let s = fmt_f64(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v} -> {s} -> {back}");
        }
    }

    #[test]
    fn tick_panel_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ticks.csv");
        let cal = MarketCalendar::baseline();
        let panel = tick_fixture(&cal, 3, 32);
        let stamp = RunStamp { config_hash: 0xabcdef, seed: 42 };
        write_tick_panel(&path, &panel, Some(&stamp)).unwrap();
        let back = read_tick_panel(&path, &cal).unwrap();
        assert_eq!(panel, back);
    }

    #[test]
    fn bad_tick_rows_are_rejected_with_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let cal = MarketCalendar::baseline();

        // out-of-session time: market 1 session on day 1 is [0, 0.25]
        let path = dir.path().join("bad1.csv");
        std::fs::write(
            &path,
            "market,day,time,price\n1,1,0.1,0.0\n1,1,0.3,0.0\n2,1,0.6,0.0\n",
        )
        .unwrap();
        let err = read_tick_panel(&path, &cal).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(err.contains("outside"), "{err}");

        // duplicate timestamp
        let path = dir.path().join("bad2.csv");
        std::fs::write(
            &path,
            "market,day,time,price\n1,1,0.1,0.0\n1,1,0.1,0.0\n2,1,0.6,0.0\n",
        )
        .unwrap();
        let err = read_tick_panel(&path, &cal).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");

        // unsorted times
        let path = dir.path().join("bad3.csv");
        std::fs::write(
            &path,
            "market,day,time,price\n1,1,0.2,0.0\n1,1,0.1,0.0\n2,1,0.6,0.0\n",
        )
        .unwrap();
        let err = read_tick_panel(&path, &cal).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn ground_truth_round_trips_with_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.csv");
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let n = 5;
        let col = |rng: &mut ChaCha12Rng| awkward_values(rng, n);
        let truth = GroundTruth {
            iv: [col(&mut rng), col(&mut rng)],
            ijp: [col(&mut rng), col(&mut rng)],
            ijn: [col(&mut rng), col(&mut rng)],
            ov: [col(&mut rng), col(&mut rng)],
            h: [col(&mut rng), col(&mut rng)],
            clamped_steps: 3,
            total_steps: 123456,
        };
        write_ground_truth(&path, &truth, None).unwrap();
        let back = read_ground_truth(&path).unwrap();
        assert_eq!(truth, back);
    }

    #[test]
    fn daily_measures_round_trip_bit_for_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("measures.csv");
        let cal = MarketCalendar::baseline();
        let panel = tick_fixture(&cal, 4, 64);
        let m = crate::measures::build_daily_measures(&panel, &MeasureOptions::default()).unwrap();
        let stamp = RunStamp { config_hash: 7, seed: 9 };
        write_daily_measures(&path, &m, Some(&stamp)).unwrap();
        let back = read_daily_measures(&path).unwrap();
        assert_eq!(back.estimator, m.estimator);
        for l in 0..2 {
            for i in 0..m.data.n_days() {
                assert_eq!(back.data.rv[l][i].to_bits(), m.data.rv[l][i].to_bits());
                assert_eq!(back.data.jv_pos[l][i].to_bits(), m.data.jv_pos[l][i].to_bits());
                assert_eq!(back.data.jv_neg[l][i].to_bits(), m.data.jv_neg[l][i].to_bits());
                assert_eq!(back.data.ov[l][i].to_bits(), m.data.ov[l][i].to_bits());
            }
        }
    }

    #[test]
    fn coordinates_round_trip_and_keep_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.csv");
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let values = awkward_values(&mut rng, GARCH_COORD_NAMES.len());
        write_coordinates(&path, &GARCH_COORD_NAMES, &values, None, &[]).unwrap();
        let back = read_coordinates(&path).unwrap();
        assert_eq!(back.len(), values.len());
        for (j, (name, v)) in back.iter().enumerate() {
            assert_eq!(name, GARCH_COORD_NAMES[j]);
            assert_eq!(v.to_bits(), values[j].to_bits());
        }
    }

    #[test]
    fn stamps_survive_as_comments_and_are_skipped_by_readers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stamped.csv");
        let values = vec![1.5, -2.25];
        write_coordinates(
            &path,
            &["a", "b"],
            &values,
            Some(&RunStamp { config_hash: 0xdead_beef, seed: 2024 }),
            &[],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# config_hash=00000000deadbeef seed=2024\n"), "{text}");
        let back = read_coordinates(&path).unwrap();
        assert_eq!(back[0].0, "a");
        assert_eq!(back[1].1, -2.25);
    }

    #[test]
    fn lunch_ticks_are_validated_on_ingest() {
        use crate::calendar::LunchBreak;
        let dir = tempfile::tempdir().unwrap();
        let cal = MarketCalendar::baseline()
            .with_lunch(Market::One, LunchBreak { start: 0.10, end: 0.15 })
            .unwrap();
        let path = dir.path().join("lunch.csv");
        std::fs::write(
            &path,
            "market,day,time,price\n1,1,0.05,0.0\n1,1,0.12,0.0\n2,1,0.6,0.0\n",
        )
        .unwrap();
        let err = read_tick_panel(&path, &cal).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("lunch"), "{err}");

        // the same file without the halted tick is fine
        std::fs::write(
            &path,
            "market,day,time,price\n1,1,0.05,0.0\n1,1,0.2,0.0\n2,1,0.6,0.0\n",
        )
        .unwrap();
        let panel = read_tick_panel(&path, &cal).unwrap();
        assert_eq!(panel.days[0][0].times.len(), 2);
    }
}
