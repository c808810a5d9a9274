//! Monte Carlo study runner: error grids and null calibration.
//!
//! The grid phase repeats simulate-measure-fit over every (days, ticks)
//! cell and records per-coordinate squared errors against the implied true
//! daily parameters. The calibration phase draws pairs of independent
//! windows from the same data-generating process, fits both, and collects
//! the joint Wald statistic and the per-coordinate Z statistics, giving
//! ordered samples for distribution checks against chi-square(18) and the
//! standard normal.
//!
//! Replications run concurrently; each derives its own seed from the
//! master seed and a replication counter, so outputs are bit-identical
//! across reruns and worker counts. Failed replications are logged,
//! excluded and counted; the run fails when more than 2% abort.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use contagion_garch::inference::{wald_test, z_tests, TestScope};
use contagion_garch::io::fmt_f64;
use contagion_garch::params::{map_structural_to_garch, GARCH_COORD_NAMES, GARCH_DIM};
use contagion_garch::seed::derive_seed;
use contagion_garch::stats::{chi2_quantile, chi2_cdf, ks_statistic, normal_quantile};

use crate::config::Resolved;
use crate::error::{CliError, CliResult};
use crate::pipeline::run_replication;

pub const MSE_FILE: &str = "mse.csv";
pub const QQ_WALD_FILE: &str = "qq_wald.csv";
pub const QQ_Z_FILE: &str = "qq_z.csv";
pub const CALIBRATION_FILE: &str = "calibration_summary.csv";
pub const ABORTS_FILE: &str = "aborts.csv";

/// Seed-stream namespace for calibration windows, disjoint from the grid
/// replication counters.
const CALIBRATION_STREAM_BASE: u64 = 1 << 40;

/// Per-cell error summary over the replications that completed.
#[derive(Debug, Clone)]
pub struct CellSummary {
    pub n: u32,
    pub m: u32,
    pub used: u32,
    pub aborted: u32,
    pub mean_sq: [f64; GARCH_DIM],
    pub median_sq: [f64; GARCH_DIM],
}

/// Null-calibration summary over completed pairs.
#[derive(Debug, Clone)]
pub struct CalibrationSummary {
    pub used: usize,
    pub aborted: usize,
    /// Kolmogorov-Smirnov distance of the Wald sample to chi-square(18).
    pub ks_wald: f64,
    /// Empirical rejection rate at the 5% level.
    pub reject_rate: f64,
    pub z_mean: [f64; GARCH_DIM],
    pub z_var: [f64; GARCH_DIM],
    /// Ordered Wald statistics.
    pub wald: Vec<f64>,
    /// Per-coordinate ordered Z statistics.
    pub z: Vec<[f64; GARCH_DIM]>,
}

/// Everything a study run produces, mirrored in the output files.
#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub cells: Vec<CellSummary>,
    pub calibration: Option<CalibrationSummary>,
    pub total_replications: usize,
    pub total_aborted: usize,
    /// Asymptotic-guidance warning, also printed to stderr.
    pub warning: Option<String>,
    pub files: Vec<PathBuf>,
}

fn median(sorted: &[f64]) -> f64 {
    let k = sorted.len();
    if k == 0 {
        return f64::NAN;
    }
    if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    }
}

struct Abort {
    phase: &'static str,
    n: u32,
    m: u32,
    replication: u64,
    message: String,
}

/// Runs the configured study into `ctx.out_dir`.
pub fn run_study(ctx: &Resolved) -> CliResult<StudyOutcome> {
    let study = &ctx.cfg.study;
    let theta0 = map_structural_to_garch(&ctx.structural, &ctx.jumps)?.to_vec();

    let max_n = *study.n_list.iter().max().expect("non-empty grid");
    let min_m = *study.m_list.iter().min().expect("non-empty grid");
    let warning = if u64::from(max_n) * u64::from(max_n) > 100 * u64::from(min_m) {
        let w = format!(
            "grid has max(n)^2 / min(m) = {:.0} > 100; the asymptotic regime wants n^2/m small, \
             expect visible estimation bias in the largest-n, smallest-m cells",
            f64::from(max_n) * f64::from(max_n) / f64::from(min_m)
        );
        eprintln!("warning: {w}");
        Some(w)
    } else {
        None
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.workers)
        .build()
        .map_err(|e| CliError::validation(format!("cannot build worker pool: {e}")))?;

    // grid phase: one stream per (cell, replication)
    let reps = u64::from(study.replications);
    let cells: Vec<(u32, u32)> = study
        .n_list
        .iter()
        .flat_map(|&n| study.m_list.iter().map(move |&m| (n, m)))
        .collect();
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| (0..reps).map(move |r| (c, r)))
        .collect();

    let grid_results: Vec<Result<[f64; GARCH_DIM], String>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, r)| {
                let (n, m) = cells[c];
                let stream = c as u64 * reps + r;
                let seed = derive_seed(ctx.seed, stream);
                match run_replication(ctx, n, m, seed) {
                    Ok(rep) => {
                        let theta = rep.fit.params.to_vec();
                        let mut sq = [0.0; GARCH_DIM];
                        for k in 0..GARCH_DIM {
                            sq[k] = (theta[k] - theta0[k]) * (theta[k] - theta0[k]);
                        }
                        Ok(sq)
                    }
                    Err(e) => Err(e.to_string()),
                }
            })
            .collect()
    });

    let mut aborts: Vec<Abort> = Vec::new();
    let mut cell_summaries = Vec::with_capacity(cells.len());
    for (c, &(n, m)) in cells.iter().enumerate() {
        let mut per_coord: Vec<Vec<f64>> = vec![Vec::new(); GARCH_DIM];
        let mut aborted = 0u32;
        for r in 0..reps {
            match &grid_results[c * reps as usize + r as usize] {
                Ok(sq) => {
                    for k in 0..GARCH_DIM {
                        per_coord[k].push(sq[k]);
                    }
                }
                Err(msg) => {
                    aborted += 1;
                    eprintln!("abort: cell n={n} m={m} replication {r}: {msg}");
                    aborts.push(Abort { phase: "grid", n, m, replication: r, message: msg.clone() });
                }
            }
        }
        let used = per_coord[0].len() as u32;
        let mut mean_sq = [f64::NAN; GARCH_DIM];
        let mut median_sq = [f64::NAN; GARCH_DIM];
        if used > 0 {
            for k in 0..GARCH_DIM {
                mean_sq[k] = per_coord[k].iter().sum::<f64>() / f64::from(used);
                per_coord[k].sort_by(|a, b| a.partial_cmp(b).expect("finite squared errors"));
                median_sq[k] = median(&per_coord[k]);
            }
        }
        cell_summaries.push(CellSummary { n, m, used, aborted, mean_sq, median_sq });
    }

    // calibration phase: two independent null windows per replication
    let cal_reps = u64::from(study.calibration_replications);
    let calibration = if cal_reps > 0 {
        let zeros = vec![0.0; GARCH_DIM];
        let outcomes: Vec<Result<(f64, bool, [f64; GARCH_DIM]), String>> = pool.install(|| {
            (0..cal_reps)
                .into_par_iter()
                .map(|r| {
                    let run_window = |w: u64| {
                        let seed = derive_seed(ctx.seed, CALIBRATION_STREAM_BASE + 2 * r + w);
                        run_replication(ctx, study.calibration_n, study.calibration_m, seed)
                    };
                    (|| {
                        let rep1 = run_window(0).map_err(|e| e.to_string())?;
                        let rep2 = run_window(1).map_err(|e| e.to_string())?;
                        let cov1 = rep1.sandwich(ctx).map_err(|e| e.to_string())?;
                        let cov2 = rep2.sandwich(ctx).map_err(|e| e.to_string())?;
                        let t1 = rep1.fit.params.to_vec();
                        let t2 = rep2.fit.params.to_vec();
                        let w = wald_test(&t1, &cov1, &t2, &cov2, &zeros, TestScope::Joint)
                            .map_err(|e| e.to_string())?;
                        let zs = z_tests(&t1, &cov1, &t2, &cov2, &zeros).map_err(|e| e.to_string())?;
                        let mut z = [0.0; GARCH_DIM];
                        for (k, out) in zs.iter().enumerate() {
                            z[k] = out.z;
                        }
                        Ok((w.stat, w.p < 0.05, z))
                    })()
                })
                .collect()
        });

        let mut wald = Vec::new();
        let mut rejections = 0usize;
        let mut z_samples: Vec<[f64; GARCH_DIM]> = Vec::new();
        let mut aborted = 0usize;
        for (r, out) in outcomes.iter().enumerate() {
            match out {
                Ok((w, reject, z)) => {
                    wald.push(*w);
                    if *reject {
                        rejections += 1;
                    }
                    z_samples.push(*z);
                }
                Err(msg) => {
                    aborted += 1;
                    eprintln!("abort: calibration replication {r}: {msg}");
                    aborts.push(Abort {
                        phase: "calibration",
                        n: study.calibration_n,
                        m: study.calibration_m,
                        replication: r as u64,
                        message: msg.clone(),
                    });
                }
            }
        }
        let used = wald.len();
        if used == 0 {
            return Err(CliError::numerical("every calibration replication aborted"));
        }
        wald.sort_by(|a, b| a.partial_cmp(b).expect("finite Wald statistics"));
        let ks_wald = ks_statistic(&wald, |x| chi2_cdf(x, GARCH_DIM as f64));
        let mut z_mean = [0.0; GARCH_DIM];
        let mut z_var = [0.0; GARCH_DIM];
        for k in 0..GARCH_DIM {
            let mean = z_samples.iter().map(|z| z[k]).sum::<f64>() / used as f64;
            let var = z_samples.iter().map(|z| (z[k] - mean) * (z[k] - mean)).sum::<f64>()
                / (used as f64 - 1.0);
            z_mean[k] = mean;
            z_var[k] = var;
        }
        Some(CalibrationSummary {
            used,
            aborted,
            ks_wald,
            reject_rate: rejections as f64 / used as f64,
            z_mean,
            z_var,
            wald,
            z: z_samples,
        })
    } else {
        None
    };

    // artifacts
    std::fs::create_dir_all(&ctx.out_dir)?;
    let mut files = Vec::new();

    let mse_path = ctx.out_dir.join(MSE_FILE);
    {
        let mut w = stamped_writer(&mse_path, ctx)?;
        writeln!(w, "n,m,coordinate,mean_sq_error,median_sq_error,replications_used,replications_aborted")?;
        for cell in &cell_summaries {
            for k in 0..GARCH_DIM {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    cell.n,
                    cell.m,
                    GARCH_COORD_NAMES[k],
                    fmt_f64(cell.mean_sq[k]),
                    fmt_f64(cell.median_sq[k]),
                    cell.used,
                    cell.aborted
                )?;
            }
        }
        w.flush()?;
    }
    files.push(mse_path);

    if let Some(cal) = &calibration {
        let wald_path = ctx.out_dir.join(QQ_WALD_FILE);
        {
            let mut w = stamped_writer(&wald_path, ctx)?;
            writeln!(w, "rank,statistic,reference_quantile")?;
            let count = cal.wald.len() as f64;
            for (i, stat) in cal.wald.iter().enumerate() {
                let p = (i as f64 + 0.5) / count;
                let q = chi2_quantile(p, GARCH_DIM as f64)?;
                writeln!(w, "{},{},{}", i + 1, fmt_f64(*stat), fmt_f64(q))?;
            }
            w.flush()?;
        }
        files.push(wald_path);

        let z_path = ctx.out_dir.join(QQ_Z_FILE);
        {
            let mut w = stamped_writer(&z_path, ctx)?;
            writeln!(w, "coordinate,rank,z,reference_quantile")?;
            let count = cal.z.len() as f64;
            for k in 0..GARCH_DIM {
                let mut zs: Vec<f64> = cal.z.iter().map(|z| z[k]).collect();
                zs.sort_by(|a, b| a.partial_cmp(b).expect("finite Z statistics"));
                for (i, z) in zs.iter().enumerate() {
                    let p = (i as f64 + 0.5) / count;
                    let q = normal_quantile(p)?;
                    writeln!(w, "{},{},{},{}", GARCH_COORD_NAMES[k], i + 1, fmt_f64(*z), fmt_f64(q))?;
                }
            }
            w.flush()?;
        }
        files.push(z_path);

        let sum_path = ctx.out_dir.join(CALIBRATION_FILE);
        {
            let mut w = stamped_writer(&sum_path, ctx)?;
            writeln!(w, "statistic,coordinate,value")?;
            writeln!(w, "ks_wald,,{}", fmt_f64(cal.ks_wald))?;
            writeln!(w, "reject_rate_5pct,,{}", fmt_f64(cal.reject_rate))?;
            writeln!(w, "replications_used,,{}", cal.used)?;
            for k in 0..GARCH_DIM {
                writeln!(w, "z_mean,{},{}", GARCH_COORD_NAMES[k], fmt_f64(cal.z_mean[k]))?;
            }
            for k in 0..GARCH_DIM {
                writeln!(w, "z_variance,{},{}", GARCH_COORD_NAMES[k], fmt_f64(cal.z_var[k]))?;
            }
            w.flush()?;
        }
        files.push(sum_path);
    }

    if !aborts.is_empty() {
        let path = ctx.out_dir.join(ABORTS_FILE);
        {
            let mut w = stamped_writer(&path, ctx)?;
            writeln!(w, "phase,n,m,replication,message")?;
            for a in &aborts {
                let clean = a.message.replace([',', '\n'], ";");
                writeln!(w, "{},{},{},{},{}", a.phase, a.n, a.m, a.replication, clean)?;
            }
            w.flush()?;
        }
        files.push(path);
    }

    let total = jobs.len() + cal_reps as usize;
    let total_aborted = aborts.len();
    let outcome = StudyOutcome {
        cells: cell_summaries,
        calibration,
        total_replications: total,
        total_aborted,
        warning,
        files,
    };
    if total_aborted as f64 > 0.02 * total as f64 {
        return Err(CliError::numerical(format!(
            "{total_aborted} of {total} replications aborted (> 2%); see {}",
            ctx.out_dir.join(ABORTS_FILE).display()
        )));
    }
    Ok(outcome)
}

fn stamped_writer(path: &Path, ctx: &Resolved) -> CliResult<BufWriter<File>> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# config_hash={:016x} seed={}", ctx.stamp.config_hash, ctx.stamp.seed)?;
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{resolve, Overrides};

    fn tiny_ctx(dir: &Path) -> Resolved {
        let mut ctx = resolve(None, &Overrides::default()).unwrap();
        ctx.cfg.study.n_list = vec![30];
        ctx.cfg.study.m_list = vec![60];
        ctx.cfg.study.replications = 2;
        ctx.cfg.study.calibration_replications = 0;
        ctx.cfg.sim.burn_in_days = 10;
        ctx.fit_opts.starts = 1;
        ctx.workers = 1;
        ctx.out_dir = dir.to_path_buf();
        ctx
    }

    #[test]
    fn tiny_grid_runs_and_reports_counts() {
        let dir = tempfile::tempdir().unwrap();
        let ctx = tiny_ctx(dir.path());
        let out = run_study(&ctx).unwrap();
        assert_eq!(out.cells.len(), 1);
        assert_eq!(out.cells[0].used, 2);
        assert_eq!(out.cells[0].aborted, 0);
        assert!(out.cells[0].mean_sq.iter().all(|v| v.is_finite()));
        assert!(out.files.iter().any(|f| f.ends_with(MSE_FILE)));
        // n^2/m = 900/60 = 15, no warning
        assert!(out.warning.is_none());
    }

    #[test]
    fn rerun_writes_identical_bytes() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let c1 = tiny_ctx(d1.path());
        let c2 = tiny_ctx(d2.path());
        run_study(&c1).unwrap();
        run_study(&c2).unwrap();
        let a = std::fs::read(d1.path().join(MSE_FILE)).unwrap();
        let b = std::fs::read(d2.path().join(MSE_FILE)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b);
    }

    #[test]
    fn guidance_warning_fires_on_unbalanced_grids() {
        let dir = tempfile::tempdir().unwrap();
        let mut ctx = tiny_ctx(dir.path());
        ctx.cfg.study.n_list = vec![120];
        ctx.cfg.study.m_list = vec![60];
        ctx.cfg.study.replications = 1;
        let out = run_study(&ctx).unwrap();
        assert!(out.warning.is_some());
    }
}
