//! Layered run configuration: TOML file, then command-line overrides.
//!
//! Every key has a default equal to the baseline simulation study, so an
//! empty file (or no file at all) describes the standard setup. The
//! resolved configuration is hashed (FNV-1a over its canonical TOML form)
//! and stamped into every output file together with the master seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use contagion_garch::calendar::{LunchBreak, MarketCalendar};
use contagion_garch::io::RunStamp;
use contagion_garch::measures::{EstimatorKind, MeasureOptions};
use contagion_garch::optim::OptimOptions;
use contagion_garch::params::{JumpSpec, JumpStream, MarketStructural, StructuralParams};
use contagion_garch::qmle::FitOptions;
use contagion_garch::har::HarFitOptions;
use contagion_garch::seed::fnv1a;
use contagion_garch::sim::{NoiseKind, NoiseSpec, SimConfig};

use crate::error::{CliError, CliResult};

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub estimator: Option<String>,
    pub out_dir: Option<PathBuf>,
}

/// Whole configuration file. Unknown keys are rejected so typos surface
/// instead of silently falling back to defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Master seed; all replication seeds derive from it.
    pub seed: u64,
    /// Worker threads for the study runner; 0 means all available cores.
    pub workers: usize,
    /// Output directory for every artifact.
    pub out_dir: String,
    pub calendar: CalendarSection,
    pub model: ModelSection,
    pub jumps: JumpsSection,
    pub noise: NoiseSection,
    pub sim: SimSection,
    pub measure: MeasureSection,
    pub fit: FitSection,
    pub study: StudySection,
    #[serde(rename = "break")]
    pub break_section: BreakSection,
    /// Optional wall-clock declaration; when present, tick files carry
    /// `HH:MM:SS` timestamps that ingestion maps onto model time.
    pub clock: Option<ClockSection>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 1,
            workers: 0,
            out_dir: "out".to_string(),
            calendar: CalendarSection::default(),
            model: ModelSection::default(),
            jumps: JumpsSection::default(),
            noise: NoiseSection::default(),
            sim: SimSection::default(),
            measure: MeasureSection::default(),
            fit: FitSection::default(),
            study: StudySection::default(),
            break_section: BreakSection::default(),
            clock: None,
        }
    }
}

/// Session lengths and offset in day fractions, with optional halts.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalendarSection {
    pub lambda1: f64,
    pub lambda2: f64,
    pub tau: f64,
    pub lunch1: Option<LunchSection>,
    pub lunch2: Option<LunchSection>,
}

impl Default for CalendarSection {
    fn default() -> Self {
        let cal = MarketCalendar::baseline();
        CalendarSection {
            lambda1: cal.lambda1,
            lambda2: cal.lambda2,
            tau: cal.tau,
            lunch1: None,
            lunch2: None,
        }
    }
}

/// Halt window as offsets from the session open, in day fractions.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LunchSection {
    pub start: f64,
    pub end: f64,
}

impl CalendarSection {
    pub fn to_calendar(&self) -> CliResult<MarketCalendar> {
        let cal = MarketCalendar {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            tau: self.tau,
            lunch: [
                self.lunch1.map(|l| LunchBreak { start: l.start, end: l.end }),
                self.lunch2.map(|l| LunchBreak { start: l.start, end: l.end }),
            ],
        };
        cal.validate()?;
        Ok(cal)
    }
}

/// Structural (continuous-time) parameters of both markets.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub rho: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub market1: MarketSection,
    pub market2: MarketSection,
}

impl Default for ModelSection {
    fn default() -> Self {
        let s = StructuralParams::baseline();
        ModelSection {
            rho: s.rho,
            mu1: s.mu[0],
            mu2: s.mu[1],
            market1: MarketSection::from_core(&s.market[0]),
            market2: MarketSection::from_core(&s.market[1]),
        }
    }
}

/// One market's structural block.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketSection {
    pub omega_h: f64,
    pub gamma_h: f64,
    pub alpha_h: f64,
    pub beta_h_pos: f64,
    pub beta_h_neg: f64,
    pub nu_h: f64,
    pub omega_l: f64,
    pub gamma_l: f64,
    pub alpha_l: f64,
    pub alpha_cross: f64,
    pub beta_cross_pos: f64,
    pub beta_cross_neg: f64,
}

impl Default for MarketSection {
    fn default() -> Self {
        MarketSection::from_core(&StructuralParams::baseline().market[0])
    }
}

impl MarketSection {
    fn from_core(m: &MarketStructural) -> Self {
        MarketSection {
            omega_h: m.omega_h,
            gamma_h: m.gamma_h,
            alpha_h: m.alpha_h,
            beta_h_pos: m.beta_h_pos,
            beta_h_neg: m.beta_h_neg,
            nu_h: m.nu_h,
            omega_l: m.omega_l,
            gamma_l: m.gamma_l,
            alpha_l: m.alpha_l,
            alpha_cross: m.alpha_cross,
            beta_cross_pos: m.beta_cross_pos,
            beta_cross_neg: m.beta_cross_neg,
        }
    }

    fn to_core(&self) -> MarketStructural {
        MarketStructural {
            omega_h: self.omega_h,
            gamma_h: self.gamma_h,
            alpha_h: self.alpha_h,
            beta_h_pos: self.beta_h_pos,
            beta_h_neg: self.beta_h_neg,
            nu_h: self.nu_h,
            omega_l: self.omega_l,
            gamma_l: self.gamma_l,
            alpha_l: self.alpha_l,
            alpha_cross: self.alpha_cross,
            beta_cross_pos: self.beta_cross_pos,
            beta_cross_neg: self.beta_cross_neg,
        }
    }
}

impl ModelSection {
    pub fn to_structural(&self) -> StructuralParams {
        StructuralParams {
            market: [self.market1.to_core(), self.market2.to_core()],
            mu: [self.mu1, self.mu2],
            rho: self.rho,
        }
    }
}

/// Four jump streams (per market and sign) with a shared size law.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JumpsSection {
    pub intensity1_pos: f64,
    pub intensity1_neg: f64,
    pub intensity2_pos: f64,
    pub intensity2_neg: f64,
    /// Base jump size (log scale).
    pub size_b: f64,
    /// Standard deviation of the size perturbation.
    pub size_m_sd: f64,
}

impl Default for JumpsSection {
    fn default() -> Self {
        let j = JumpSpec::baseline();
        JumpsSection {
            intensity1_pos: j.streams[0][0].intensity,
            intensity1_neg: j.streams[0][1].intensity,
            intensity2_pos: j.streams[1][0].intensity,
            intensity2_neg: j.streams[1][1].intensity,
            size_b: j.streams[0][0].b,
            size_m_sd: j.streams[0][0].m_sd,
        }
    }
}

impl JumpsSection {
    pub fn to_spec(&self) -> JumpSpec {
        let s = |intensity| JumpStream { intensity, b: self.size_b, m_sd: self.size_m_sd };
        JumpSpec {
            streams: [
                [s(self.intensity1_pos), s(self.intensity1_neg)],
                [s(self.intensity2_pos), s(self.intensity2_neg)],
            ],
        }
    }
}

/// Microstructure noise on observed ticks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    /// Marginal standard deviation; 0 disables noise.
    pub sd: f64,
    /// One of `gaussian`, `student_t`, `ar1`.
    pub kind: String,
    /// Degrees of freedom for `student_t`.
    pub df: f64,
    /// Autocorrelation for `ar1`.
    pub rho: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection { sd: 0.0, kind: "gaussian".to_string(), df: 5.0, rho: 0.5 }
    }
}

impl NoiseSection {
    pub fn to_spec(&self) -> CliResult<NoiseSpec> {
        let kind = match self.kind.as_str() {
            "gaussian" => NoiseKind::Gaussian,
            "student_t" => NoiseKind::StudentT { df: self.df },
            "ar1" => NoiseKind::Ar1 { rho: self.rho },
            other => {
                return Err(CliError::validation(format!(
                    "unknown noise kind '{other}' (expected gaussian, student_t, or ar1)"
                )));
            }
        };
        let spec = NoiseSpec { sd: self.sd, kind };
        spec.validate()?;
        Ok(spec)
    }
}

/// Path discretization used by `simulate` and by every study replication.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    /// Recorded days for the `simulate` subcommand.
    pub days: u32,
    /// Tick intervals per session for the `simulate` subcommand.
    pub ticks_per_session: u32,
    pub substeps: u32,
    pub overnight_points: u32,
    pub burn_in_days: u32,
}

impl Default for SimSection {
    fn default() -> Self {
        let c = SimConfig::new(500, 2160, 0);
        SimSection {
            days: c.days,
            ticks_per_session: c.ticks_per_session,
            substeps: c.substeps,
            overnight_points: c.overnight_points,
            burn_in_days: c.burn_in_days,
        }
    }
}

impl SimSection {
    /// Simulation config for a given grid point and derived seed.
    pub fn to_sim_config(&self, days: u32, ticks: u32, seed: u64) -> SimConfig {
        SimConfig {
            days,
            ticks_per_session: ticks,
            substeps: self.substeps,
            overnight_points: self.overnight_points,
            burn_in_days: self.burn_in_days,
            seed,
        }
    }
}

/// Realized-measure estimator and its tuning constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureSection {
    /// One of `msrv`, `arp`, `paremedi`.
    pub estimator: String,
    pub msrv_scales: usize,
    pub msrv_offset: usize,
    pub arp_c: f64,
    pub arp_a: f64,
}

impl Default for MeasureSection {
    fn default() -> Self {
        let o = MeasureOptions::default();
        MeasureSection {
            estimator: o.estimator.label().to_string(),
            msrv_scales: o.msrv_scales,
            msrv_offset: o.msrv_offset,
            arp_c: o.arp_c,
            arp_a: o.arp_a,
        }
    }
}

impl MeasureSection {
    pub fn to_options(&self) -> CliResult<MeasureOptions> {
        Ok(MeasureOptions {
            estimator: EstimatorKind::from_label(&self.estimator)?,
            msrv_scales: self.msrv_scales,
            msrv_offset: self.msrv_offset,
            arp_c: self.arp_c,
            arp_a: self.arp_a,
        })
    }
}

/// Optimizer controls shared by the 18- and 20-coordinate fits.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub starts: usize,
    pub grad_tol: f64,
    pub max_iters: usize,
}

impl Default for FitSection {
    fn default() -> Self {
        let o = FitOptions::default();
        FitSection { starts: o.starts, grad_tol: o.optim.grad_tol, max_iters: o.optim.max_iters }
    }
}

impl FitSection {
    pub fn to_fit_options(&self) -> FitOptions {
        FitOptions {
            starts: self.starts,
            optim: OptimOptions { grad_tol: self.grad_tol, max_iters: self.max_iters },
            ..FitOptions::default()
        }
    }

    pub fn to_har_options(&self) -> HarFitOptions {
        HarFitOptions {
            starts: self.starts,
            optim: OptimOptions { grad_tol: self.grad_tol, max_iters: self.max_iters },
            ..HarFitOptions::default()
        }
    }
}

/// Monte Carlo study grids and replication counts.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    /// Sample sizes in days.
    pub n_list: Vec<u32>,
    /// Tick intervals per session.
    pub m_list: Vec<u32>,
    /// Replications per (n, m) cell.
    pub replications: u32,
    /// Two-window null calibration replications; 0 disables calibration.
    pub calibration_replications: u32,
    /// Days per calibration window.
    pub calibration_n: u32,
    /// Tick intervals per session in calibration windows.
    pub calibration_m: u32,
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection {
            n_list: vec![100, 250, 500],
            m_list: vec![360, 720, 2160],
            replications: 100,
            calibration_replications: 0,
            calibration_n: 500,
            calibration_m: 2160,
        }
    }
}

/// Two-window break analysis.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BreakSection {
    /// 0-based first day of the second window.
    pub day: usize,
    /// One of `garch`, `har`.
    pub model: String,
}

impl Default for BreakSection {
    fn default() -> Self {
        BreakSection { day: 250, model: "garch".to_string() }
    }
}

/// Wall-clock session declaration; times are `HH:MM:SS`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockSection {
    pub open1: String,
    pub close1: String,
    pub open2: String,
    pub close2: String,
}

/// Fully resolved run context every subcommand works from.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub cfg: Config,
    pub calendar: MarketCalendar,
    pub structural: StructuralParams,
    pub jumps: JumpSpec,
    pub noise: NoiseSpec,
    pub measure_opts: MeasureOptions,
    pub fit_opts: FitOptions,
    pub har_opts: HarFitOptions,
    pub seed: u64,
    pub workers: usize,
    pub out_dir: PathBuf,
    pub stamp: RunStamp,
}

/// Reads the file (when given), applies overrides, validates everything
/// once, and freezes the provenance stamp.
pub fn resolve(path: Option<&Path>, over: &Overrides) -> CliResult<Resolved> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                CliError::validation(format!("cannot read config {}: {e}", p.display()))
            })?;
            toml::from_str::<Config>(&text)
                .map_err(|e| CliError::validation(format!("config {}: {e}", p.display())))?
        }
        None => Config::default(),
    };

    if let Some(seed) = over.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = over.workers {
        cfg.workers = workers;
    }
    if let Some(est) = &over.estimator {
        cfg.measure.estimator = est.clone();
    }
    if let Some(dir) = &over.out_dir {
        cfg.out_dir = dir.to_string_lossy().into_owned();
    }

    let calendar = cfg.calendar.to_calendar()?;
    let structural = cfg.model.to_structural();
    let jumps = cfg.jumps.to_spec();
    jumps.validate()?;
    let noise = cfg.noise.to_spec()?;
    let measure_opts = cfg.measure.to_options()?;
    if cfg.study.replications == 0 {
        return Err(CliError::validation("study.replications must be at least 1"));
    }
    if cfg.study.n_list.is_empty() || cfg.study.m_list.is_empty() {
        return Err(CliError::validation("study grids must be non-empty"));
    }

    let workers = if cfg.workers == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        cfg.workers
    };

    let canonical = toml::to_string(&cfg)
        .map_err(|e| CliError::validation(format!("cannot canonicalize config: {e}")))?;
    let stamp = RunStamp { config_hash: fnv1a(canonical.as_bytes()), seed: cfg.seed };

    Ok(Resolved {
        calendar,
        structural,
        jumps,
        noise,
        measure_opts,
        fit_opts: cfg.fit.to_fit_options(),
        har_opts: cfg.fit.to_har_options(),
        seed: cfg.seed,
        workers,
        out_dir: PathBuf::from(&cfg.out_dir),
        stamp,
        cfg,
    })
}
