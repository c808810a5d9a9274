//! Subcommand bodies: each validates, runs the core pipeline, writes
//! stamped artifacts into the output directory, and returns the paths it
//! wrote.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use contagion_garch::har::{har_break_test, har_design, har_fit, har_sandwich, HAR_COORD_NAMES, HAR_DIM};
use contagion_garch::inference::{garch_break_test, sandwich_covariance, SandwichCov};
use contagion_garch::io::{
    fmt_f64, read_daily_measures, write_break_report, write_coordinates, write_daily_measures,
    write_ground_truth, write_text, write_tick_panel,
};
use contagion_garch::params::{map_structural_to_garch, GARCH_COORD_NAMES, GARCH_DIM};
use contagion_garch::qmle::fit;
use contagion_garch::sim::simulate_panel;

use crate::config::Resolved;
use crate::error::{CliError, CliResult};
use crate::ingest::ingest_ticks;
use crate::study::run_study;

pub const TICKS_FILE: &str = "ticks.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const TRUE_PARAMS_FILE: &str = "true_params.csv";
pub const MEASURES_FILE: &str = "measures.csv";
pub const FIT_FILE: &str = "fit.csv";
pub const HAR_FIT_FILE: &str = "har_fit.csv";
pub const BREAK_CSV_FILE: &str = "break_report.csv";
pub const BREAK_TEXT_FILE: &str = "break_report.txt";

/// Simulates one panel at the configured size and writes ticks, latent
/// truth, and the implied true daily parameters.
pub fn cmd_simulate(ctx: &Resolved) -> CliResult<Vec<PathBuf>> {
    let sim_cfg = ctx.cfg.sim.to_sim_config(ctx.cfg.sim.days, ctx.cfg.sim.ticks_per_session, ctx.seed);
    let out = simulate_panel(&ctx.structural, &ctx.jumps, &ctx.noise, &ctx.calendar, &sim_cfg)?;
    let mapped = map_structural_to_garch(&ctx.structural, &ctx.jumps)?;

    let ticks = ctx.out_dir.join(TICKS_FILE);
    write_tick_panel(&ticks, &out.panel, Some(&ctx.stamp))?;
    let truth = ctx.out_dir.join(TRUTH_FILE);
    write_ground_truth(&truth, &out.truth, Some(&ctx.stamp))?;
    let params = ctx.out_dir.join(TRUE_PARAMS_FILE);
    write_coordinates(
        &params,
        &GARCH_COORD_NAMES,
        &mapped.to_vec(),
        Some(&ctx.stamp),
        &["implied daily parameters of the configured model".to_string()],
    )?;

    println!(
        "simulated {} days at {} ticks per session ({} of {} steps clamped)",
        sim_cfg.days, sim_cfg.ticks_per_session, out.truth.clamped_steps, out.truth.total_steps
    );
    Ok(vec![ticks, truth, params])
}

/// Ingests a tick file and reduces it to daily measures.
pub fn cmd_measure(ctx: &Resolved, ticks: &Path) -> CliResult<Vec<PathBuf>> {
    let panel = ingest_ticks(ticks, &ctx.calendar, ctx.cfg.clock.as_ref())?;
    let dm = contagion_garch::measures::build_daily_measures(&panel, &ctx.measure_opts)?;
    let jumps: usize = dm.jumps.iter().flatten().map(Vec::len).sum();
    println!(
        "measured {} days with {} ({} variance estimates floored, {} jumps detected)",
        dm.n_days(),
        dm.estimator.label(),
        dm.floored,
        jumps
    );
    let path = ctx.out_dir.join(MEASURES_FILE);
    write_daily_measures(&path, &dm, Some(&ctx.stamp))?;
    Ok(vec![path])
}

fn write_fit_csv(
    path: &Path,
    ctx: &Resolved,
    names: &[&str],
    estimates: &[f64],
    cov: &SandwichCov,
    comments: &[String],
) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# config_hash={:016x} seed={}", ctx.stamp.config_hash, ctx.stamp.seed)?;
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "coordinate,estimate,std_error")?;
    for (k, name) in names.iter().enumerate() {
        writeln!(w, "{},{},{}", name, fmt_f64(estimates[k]), fmt_f64(cov.std_error(k)))?;
    }
    w.flush()?;
    Ok(())
}

fn fit_comments(loglik: f64, converged: bool, iterations: usize, at_bounds: &[String]) -> Vec<String> {
    let mut c = vec![format!(
        "loglik={} converged={} iterations={}",
        fmt_f64(loglik),
        converged,
        iterations
    )];
    for b in at_bounds {
        c.push(format!("at_bound: {b}"));
    }
    c
}

/// Fits the 18-coordinate daily recursion to a measure file.
pub fn cmd_fit(ctx: &Resolved, measures: &Path) -> CliResult<Vec<PathBuf>> {
    let dm = read_daily_measures(measures)?;
    let fitted = fit(&ctx.calendar, &dm.data, &ctx.fit_opts)?;
    let cov = sandwich_covariance(&fitted.params, &ctx.calendar, &dm.data)?;
    println!(
        "fitted {} days: loglik {:.6}, converged {}, {} coordinates at bounds",
        dm.n_days(),
        fitted.loglik,
        fitted.converged,
        fitted.at_bounds.len()
    );
    let path = ctx.out_dir.join(FIT_FILE);
    write_fit_csv(
        &path,
        ctx,
        &GARCH_COORD_NAMES,
        &fitted.params.to_vec(),
        &cov,
        &fit_comments(fitted.loglik, fitted.converged, fitted.iterations, &fitted.at_bounds),
    )?;
    Ok(vec![path])
}

/// Fits the 20-coordinate lag-average regression to a measure file.
pub fn cmd_har(ctx: &Resolved, measures: &Path) -> CliResult<Vec<PathBuf>> {
    let dm = read_daily_measures(measures)?;
    let design = har_design(&ctx.calendar, &dm.data)?;
    let fitted = har_fit(&design, &ctx.har_opts)?;
    let cov = har_sandwich(&fitted.params, &design)?;
    println!(
        "fitted lag-average regression on {} rows per market: loglik {:.6}, converged {}",
        design.n_rows(),
        fitted.loglik,
        fitted.converged
    );
    let path = ctx.out_dir.join(HAR_FIT_FILE);
    write_fit_csv(
        &path,
        ctx,
        &HAR_COORD_NAMES,
        &fitted.params.to_vec(),
        &cov,
        &fit_comments(fitted.loglik, fitted.converged, fitted.iterations, &fitted.at_bounds),
    )?;
    Ok(vec![path])
}

/// Splits a measure file at a break day and tests parameter equality.
pub fn cmd_test_break(
    ctx: &Resolved,
    measures: &Path,
    break_day: Option<usize>,
    model: Option<&str>,
) -> CliResult<Vec<PathBuf>> {
    let dm = read_daily_measures(measures)?;
    let day = break_day.unwrap_or(ctx.cfg.break_section.day);
    let model = model.unwrap_or(&ctx.cfg.break_section.model);

    let report = match model {
        "garch" => garch_break_test(&ctx.calendar, &dm.data, day, &[0.0; GARCH_DIM], &ctx.fit_opts)?.report,
        "har" => har_break_test(&ctx.calendar, &dm.data, day, &[0.0; HAR_DIM], &ctx.har_opts)?.report,
        other => {
            return Err(CliError::validation(format!(
                "unknown break model '{other}' (expected garch or har)"
            )));
        }
    };
    println!(
        "break at day {day} ({model}): joint W = {:.4}, p = {:.6}",
        report.joint.stat, report.joint.p
    );

    let csv = ctx.out_dir.join(BREAK_CSV_FILE);
    write_break_report(&csv, &report, Some(&ctx.stamp))?;
    let txt = ctx.out_dir.join(BREAK_TEXT_FILE);
    write_text(&txt, &report.to_string(), Some(&ctx.stamp))?;
    Ok(vec![csv, txt])
}

/// Runs the configured Monte Carlo study and prints its summary.
pub fn cmd_study(ctx: &Resolved) -> CliResult<Vec<PathBuf>> {
    let out = run_study(ctx)?;
    for cell in &out.cells {
        let total: f64 = cell.mean_sq.iter().sum();
        println!(
            "cell n={} m={}: {} replications used, {} aborted, total mse {:.6e}",
            cell.n, cell.m, cell.used, cell.aborted, total
        );
    }
    if let Some(cal) = &out.calibration {
        println!(
            "calibration: {} pairs, KS(W) = {:.4}, 5% rejection rate = {:.4}",
            cal.used, cal.ks_wald, cal.reject_rate
        );
    }
    Ok(out.files)
}
