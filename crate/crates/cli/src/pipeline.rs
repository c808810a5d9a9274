//! One replication of the simulate, measure, fit pipeline.
//!
//! The study runner, the calibration runner and the acceptance checks all
//! share this path so a replication means exactly the same thing
//! everywhere: simulate a tick panel, reduce it to daily measures with the
//! configured estimator, and maximize the quasi-likelihood.

use contagion_garch::inference::{sandwich_covariance, SandwichCov};
use contagion_garch::measures::{build_daily_measures, DailyMeasures};
use contagion_garch::qmle::{fit, FitResult};
use contagion_garch::sim::simulate_panel;
use contagion_garch::Result as CoreResult;

use crate::config::Resolved;

/// Everything one replication produces.
#[derive(Debug, Clone)]
pub struct Replication {
    pub measures: DailyMeasures,
    pub fit: FitResult,
}

impl Replication {
    /// Large-sample covariance of the fitted coordinates.
    pub fn sandwich(&self, ctx: &Resolved) -> CoreResult<SandwichCov> {
        sandwich_covariance(&self.fit.params, &ctx.calendar, &self.measures.data)
    }
}

/// Runs simulate, measure, fit for one (days, ticks) design point under a
/// fully derived seed.
pub fn run_replication(ctx: &Resolved, days: u32, ticks: u32, seed: u64) -> CoreResult<Replication> {
    let sim_cfg = ctx.cfg.sim.to_sim_config(days, ticks, seed);
    let out = simulate_panel(&ctx.structural, &ctx.jumps, &ctx.noise, &ctx.calendar, &sim_cfg)?;
    let measures = build_daily_measures(&out.panel, &ctx.measure_opts)?;
    let fitted = fit(&ctx.calendar, &measures.data, &ctx.fit_opts)?;
    Ok(Replication { measures, fit: fitted })
}
