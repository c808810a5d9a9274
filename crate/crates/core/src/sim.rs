//! Tick-level simulator for the two-market contagion model.
//!
//! Latent log prices follow a jump diffusion whose instantaneous variance is
//! piecewise: an open-session branch driven by the market's own running
//! realized variance, signed jump flow and a decaying squared session shock,
//! and an overnight branch driven by the *other* market's realized variance
//! and signed jump flow (accrued while that market trades) plus the squared
//! close-to-open diffusion return. Observed ticks add microstructure noise
//! on an equispaced session grid.
//!
//! Each day runs in four chronological phases: market 1's session, the
//! midday gap, market 2's session, and the late gap. Sessions use
//! `substeps` Euler sub-intervals per tick with left-point evaluation; the
//! gaps use a coarser latent grid. Per day and market the simulator records
//! integrated variance, signed squared jump sums, the squared latent
//! overnight return into the day's open, and the daily conditional variance
//! `h` obtained from the exact day-level recursion driven by the simulated
//! integrals.
//!
//! All randomness comes from one seeded stream, so equal seeds give
//! bit-identical output.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson, StandardNormal, StudentT};

use crate::calendar::{Market, MarketCalendar};
use crate::error::Error;
use crate::params::{map_structural_to_garch, GarchParams, JumpSpec, MarketStructural, StructuralParams};
use crate::qmle::{h1_step, h2_step, DayInnovations};
use crate::Result;

/// Microstructure noise family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    Gaussian,
    /// Student-t rescaled to the requested standard deviation; requires
    /// `df > 2`.
    StudentT { df: f64 },
    /// Stationary AR(1) chain with the requested marginal standard
    /// deviation; `|rho| < 1`.
    Ar1 { rho: f64 },
}

/// Additive observation noise on tick prices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Marginal standard deviation; zero disables noise.
    pub sd: f64,
    pub kind: NoiseKind,
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec { sd: 0.0, kind: NoiseKind::Gaussian }
    }

    pub fn gaussian(sd: f64) -> Self {
        NoiseSpec { sd, kind: NoiseKind::Gaussian }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sd.is_finite() && self.sd >= 0.0) {
            return Err(Error::invalid("noise sd must be finite and nonnegative"));
        }
        match self.kind {
            NoiseKind::Gaussian => Ok(()),
            NoiseKind::StudentT { df } => {
                if df > 2.0 && df.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid("Student-t noise needs df > 2 for a finite variance"))
                }
            }
            NoiseKind::Ar1 { rho } => {
                if rho.abs() < 1.0 {
                    Ok(())
                } else {
                    Err(Error::invalid("AR(1) noise needs |rho| < 1"))
                }
            }
        }
    }
}

/// Simulation run controls.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Number of recorded days.
    pub days: u32,
    /// Tick intervals per session (`m`); each session has `m + 1` ticks.
    pub ticks_per_session: u32,
    /// Euler sub-intervals per tick interval.
    pub substeps: u32,
    /// Latent grid points across the two no-trade gaps of each day.
    pub overnight_points: u32,
    /// Warm-up days simulated and discarded before recording starts.
    pub burn_in_days: u32,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(days: u32, ticks_per_session: u32, seed: u64) -> Self {
        SimConfig {
            days,
            ticks_per_session,
            substeps: 10,
            overnight_points: 100,
            burn_in_days: 50,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.days == 0 {
            return Err(Error::invalid("need at least one recorded day"));
        }
        if self.ticks_per_session < 2 {
            return Err(Error::invalid("need at least two tick intervals per session"));
        }
        if self.substeps == 0 {
            return Err(Error::invalid("substeps must be positive"));
        }
        if self.overnight_points == 0 {
            return Err(Error::invalid("overnight grid needs at least one point"));
        }
        Ok(())
    }
}

/// One market-day of observed ticks.
#[derive(Debug, Clone, PartialEq)]
pub struct DayTicks {
    /// 1-based day index.
    pub day: u32,
    pub times: Vec<f64>,
    pub prices: Vec<f64>,
}

/// Observed tick prices for both markets.
#[derive(Debug, Clone, PartialEq)]
pub struct TickPanel {
    pub calendar: MarketCalendar,
    /// `days[market.idx()][d]` holds day `d + 1`.
    pub days: [Vec<DayTicks>; 2],
}

impl TickPanel {
    pub fn n_days(&self) -> usize {
        self.days[0].len()
    }

    pub fn day(&self, market: Market, day: u32) -> &DayTicks {
        &self.days[market.idx()][day as usize - 1]
    }
}

/// Latent per-day quantities recorded alongside the panel.
///
/// `ov[l][i]` is the squared latent close-to-open diffusion return over the
/// overnight that *ends* at day `i + 1`'s open, which is exactly the
/// overnight term entering that day's `h`. `h` follows the day-level
/// recursion driven by the recorded integrals; `d = iv - lambda * h` is its
/// martingale-difference residual.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub iv: [Vec<f64>; 2],
    pub ijp: [Vec<f64>; 2],
    pub ijn: [Vec<f64>; 2],
    pub ov: [Vec<f64>; 2],
    pub h: [Vec<f64>; 2],
    pub clamped_steps: u64,
    pub total_steps: u64,
}

impl GroundTruth {
    pub fn n_days(&self) -> usize {
        self.iv[0].len()
    }

    /// `iv - lambda * h` residual for one market.
    pub fn residuals(&self, cal: &MarketCalendar, market: Market) -> Vec<f64> {
        let lam = cal.session_len(market);
        self.iv[market.idx()]
            .iter()
            .zip(&self.h[market.idx()])
            .map(|(iv, h)| iv - lam * h)
            .collect()
    }
}

/// Panel plus ground truth produced by [`simulate_panel`].
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub panel: TickPanel,
    pub truth: GroundTruth,
    pub mapped: GarchParams,
}

/// Open-session variance branch state.
///
/// `value` reproduces the session branch: base level plus linear reversion
/// in elapsed session fraction, accumulated own realized variance, signed
/// squared jump sums, and the decaying squared session shock.
#[derive(Debug, Clone, Copy)]
pub struct OpenSessionVariance {
    pub sigma2_open: f64,
    /// Left-point running integral of own instantaneous variance.
    pub iv: f64,
    pub jumps_pos: f64,
    pub jumps_neg: f64,
    /// Session Brownian shock accumulated since the open.
    pub vol_shock: f64,
    /// Time since the open.
    pub elapsed: f64,
}

impl OpenSessionVariance {
    pub fn begin(sigma2_open: f64) -> Self {
        OpenSessionVariance {
            sigma2_open,
            iv: 0.0,
            jumps_pos: 0.0,
            jumps_neg: 0.0,
            vol_shock: 0.0,
            elapsed: 0.0,
        }
    }

    /// Instantaneous variance before clamping.
    pub fn raw_value(&self, m: &MarketStructural, lambda: f64) -> f64 {
        let frac = self.elapsed / lambda;
        self.sigma2_open
            + frac * (m.omega_h + (m.gamma_h - 1.0) * self.sigma2_open)
            + m.alpha_h / lambda * self.iv
            + m.beta_h_pos / lambda * self.jumps_pos
            + m.beta_h_neg / lambda * self.jumps_neg
            + m.nu_h / (lambda * lambda)
                * (lambda - self.elapsed).max(0.0)
                * self.vol_shock
                * self.vol_shock
    }

    /// Instantaneous variance, clamped at zero.
    pub fn value(&self, m: &MarketStructural, lambda: f64) -> f64 {
        self.raw_value(m, lambda).max(0.0)
    }

    /// Advances by `dt` with session shock increment `dvol`, accumulating
    /// the left-point variance integral. Returns the left-point variance
    /// and whether it had to be clamped.
    pub fn advance(&mut self, m: &MarketStructural, lambda: f64, dt: f64, dvol: f64) -> (f64, bool) {
        let raw = self.raw_value(m, lambda);
        let s2 = raw.max(0.0);
        self.iv += s2 * dt;
        self.elapsed += dt;
        self.vol_shock += dvol;
        (s2, raw < 0.0)
    }

    pub fn add_jump(&mut self, squared_size: f64, positive: bool) {
        if positive {
            self.jumps_pos += squared_size;
        } else {
            self.jumps_neg += squared_size;
        }
    }
}

/// Overnight variance branch state.
///
/// The cross terms accrue only while the other market trades; the squared
/// diffusion return term uses the price change since the close.
#[derive(Debug, Clone, Copy)]
pub struct OvernightVariance {
    pub sigma2_close: f64,
    /// Other market's variance integral accrued during its session.
    pub cross_rv: f64,
    pub cross_jumps_pos: f64,
    pub cross_jumps_neg: f64,
    /// Own diffusion return accumulated since the close.
    pub diffusion_return: f64,
    /// Time since the close.
    pub elapsed: f64,
}

impl OvernightVariance {
    pub fn begin(sigma2_close: f64) -> Self {
        OvernightVariance {
            sigma2_close,
            cross_rv: 0.0,
            cross_jumps_pos: 0.0,
            cross_jumps_neg: 0.0,
            diffusion_return: 0.0,
            elapsed: 0.0,
        }
    }

    pub fn raw_value(&self, m: &MarketStructural, lambda_own: f64, lambda_other: f64) -> f64 {
        let frac = self.elapsed / (1.0 - lambda_own);
        self.sigma2_close
            + frac * (m.omega_l + (m.gamma_l - 1.0) * self.sigma2_close)
            + m.alpha_cross / lambda_other * self.cross_rv
            + m.beta_cross_pos / lambda_other * self.cross_jumps_pos
            + m.beta_cross_neg / lambda_other * self.cross_jumps_neg
            + m.alpha_l / (1.0 - lambda_own) * self.diffusion_return * self.diffusion_return
    }

    pub fn value(&self, m: &MarketStructural, lambda_own: f64, lambda_other: f64) -> f64 {
        self.raw_value(m, lambda_own, lambda_other).max(0.0)
    }

    /// Advances by `dt`; `d_return` is the own diffusion increment realized
    /// over the step (sigma_left * dB). Returns the left-point variance and
    /// the clamp flag used to produce it.
    pub fn advance(
        &mut self,
        m: &MarketStructural,
        lambda_own: f64,
        lambda_other: f64,
        dt: f64,
        d_return: f64,
    ) -> (f64, bool) {
        let raw = self.raw_value(m, lambda_own, lambda_other);
        let s2 = raw.max(0.0);
        self.elapsed += dt;
        self.diffusion_return += d_return;
        (s2, raw < 0.0)
    }

    pub fn add_cross_variance(&mut self, s2_other_dt: f64) {
        self.cross_rv += s2_other_dt;
    }

    pub fn add_cross_jump(&mut self, squared_size: f64, positive: bool) {
        if positive {
            self.cross_jumps_pos += squared_size;
        } else {
            self.cross_jumps_neg += squared_size;
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Branch {
    Open(OpenSessionVariance),
    Overnight(OvernightVariance),
}

#[derive(Debug, Clone)]
struct MarketState {
    x: f64,
    branch: Branch,
    /// Aggregates of the most recently completed session.
    last: DayInnovations,
    h: f64,
    noise_prev: f64,
}

/// One simulated day of output from [`PathSimulator::step_day`].
#[derive(Debug, Clone)]
pub struct DayOutput {
    pub times: [Vec<f64>; 2],
    pub prices: [Vec<f64>; 2],
    pub iv: [f64; 2],
    pub ijp: [f64; 2],
    pub ijn: [f64; 2],
    pub ov: [f64; 2],
    pub h: [f64; 2],
    pub clamped_steps: u64,
    pub total_steps: u64,
}

/// Stateful path simulator; clone it to branch replications off a common
/// history.
#[derive(Debug, Clone)]
pub struct PathSimulator {
    structural: StructuralParams,
    jumps: JumpSpec,
    noise: NoiseSpec,
    calendar: MarketCalendar,
    mapped: GarchParams,
    ticks_per_session: u32,
    substeps: u32,
    overnight_points: u32,
    /// 0-based counter of the next day to simulate; the day's market-1 open
    /// is at time `day_counter` (negative during burn-in).
    day_counter: i64,
    markets: [MarketState; 2],
}

struct SessionRecord {
    iv: f64,
    ijp: f64,
    ijn: f64,
    ov: f64,
    h: f64,
    times: Vec<f64>,
    prices: Vec<f64>,
    clamped: u64,
    steps: u64,
}

impl PathSimulator {
    pub fn new(
        structural: &StructuralParams,
        jumps: &JumpSpec,
        noise: &NoiseSpec,
        calendar: &MarketCalendar,
        ticks_per_session: u32,
        substeps: u32,
        overnight_points: u32,
    ) -> Result<Self> {
        structural.validate()?;
        jumps.validate()?;
        noise.validate()?;
        calendar.validate()?;
        if calendar.lunch[0].is_some() || calendar.lunch[1].is_some() {
            return Err(Error::invalid("the simulator does not model intraday halts"));
        }
        if ticks_per_session < 2 {
            return Err(Error::invalid("need at least two tick intervals per session"));
        }
        if substeps == 0 || overnight_points == 0 {
            return Err(Error::invalid("substeps and overnight grid must be positive"));
        }
        let mapped = map_structural_to_garch(structural, jumps)?;
        if !(mapped.gamma1 > 0.0 && mapped.gamma1 < 1.0 && mapped.gamma2 > 0.0 && mapped.gamma2 < 1.0)
        {
            return Err(Error::invalid("mapped persistence must lie in (0,1)"));
        }

        let v = mapped.to_vec();
        let mut markets: Vec<MarketState> = Vec::with_capacity(2);
        for l in 0..2 {
            let market = if l == 0 { Market::One } else { Market::Two };
            let lam = calendar.session_len(market);
            let (omega, gamma, alpha) = (v[l * 9], v[l * 9 + 1], v[l * 9 + 2]);
            let denom = (1.0 - gamma - alpha.max(0.0)).max(0.05);
            // stationary mean of the day-level recursion; a model with no
            // variance sources starts (and stays) at exactly zero
            let h0 = if omega > 0.0 { omega / denom } else { 0.0 };
            let pos = jumps.pos(market);
            let neg = jumps.neg(market);
            let mut overnight = OvernightVariance::begin(h0);
            // pretend the pre-history overnight is already over
            overnight.elapsed = 1.0 - lam;
            markets.push(MarketState {
                x: 0.0,
                branch: Branch::Overnight(overnight),
                last: DayInnovations {
                    rv: lam * h0,
                    jv_pos: lam * pos.intensity * pos.mean_squared_size(),
                    jv_neg: lam * neg.intensity * neg.mean_squared_size(),
                },
                h: h0,
                noise_prev: 0.0,
            });
        }

        Ok(PathSimulator {
            structural: structural.clone(),
            jumps: jumps.clone(),
            noise: *noise,
            calendar: calendar.clone(),
            mapped,
            ticks_per_session,
            substeps,
            overnight_points,
            day_counter: 0,
            markets: [markets.remove(0), markets.remove(0)],
        })
    }

    /// Mapped daily filter coordinates implied by the structural set.
    pub fn mapped(&self) -> &GarchParams {
        &self.mapped
    }

    /// Rewinds the day counter so that `burn_in` days run before day 1;
    /// call before the first `step_day`.
    pub fn set_burn_in(&mut self, burn_in: u32) {
        self.day_counter = -i64::from(burn_in);
    }

    fn draw_noise(&mut self, market: usize, rng: &mut ChaCha12Rng) -> f64 {
        if self.noise.sd == 0.0 {
            return 0.0;
        }
        match self.noise.kind {
            NoiseKind::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                self.noise.sd * z
            }
            NoiseKind::StudentT { df } => {
                let t = StudentT::new(df).expect("validated df");
                let scale = self.noise.sd / (df / (df - 2.0)).sqrt();
                scale * t.sample(rng)
            }
            NoiseKind::Ar1 { rho } => {
                let z: f64 = rng.sample(StandardNormal);
                let e = rho * self.markets[market].noise_prev
                    + self.noise.sd * (1.0 - rho * rho).sqrt() * z;
                self.markets[market].noise_prev = e;
                e
            }
        }
    }

    /// Draws sorted jump times and squared sizes for one stream.
    fn draw_jumps(
        &self,
        stream: crate::params::JumpStream,
        open: f64,
        lambda: f64,
        rng: &mut ChaCha12Rng,
    ) -> Vec<(f64, f64)> {
        let rate = stream.intensity * lambda;
        if rate <= 0.0 {
            return Vec::new();
        }
        let n = Poisson::new(rate).expect("positive rate").sample(rng) as usize;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let u: f64 = rng.gen();
            let t = open + u * lambda;
            let mut sq = f64::NEG_INFINITY;
            while !(sq > 0.0) {
                let z: f64 = rng.sample(StandardNormal);
                sq = stream.b + stream.m_sd * z;
            }
            out.push((t, sq));
        }
        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        out
    }

    /// Correlated price shocks for one elementary step.
    fn price_shocks(&self, sqrt_dt: f64, rng: &mut ChaCha12Rng) -> (f64, f64) {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let rho = self.structural.rho;
        let db1 = sqrt_dt * z1;
        let db2 = sqrt_dt * (rho * z1 + (1.0 - rho * rho).sqrt() * z2);
        (db1, db2)
    }

    /// Advances both markets across a no-trade gap `[t0, t1]`.
    fn run_gap(&mut self, t0: f64, t1: f64, points: u32, rng: &mut ChaCha12Rng) -> (u64, u64) {
        let mut clamped = 0;
        let mut steps = 0;
        if t1 <= t0 {
            return (0, 0);
        }
        let n = points.max(1);
        let mut t_prev = t0;
        for k in 1..=n {
            let t = t0 + (t1 - t0) * f64::from(k) / f64::from(n);
            let dt = t - t_prev;
            let (db1, db2) = self.price_shocks(dt.sqrt(), rng);
            let dbs = [db1, db2];
            for l in 0..2 {
                let market = if l == 0 { Market::One } else { Market::Two };
                let m = self.structural.market[l];
                let lam = self.calendar.session_len(market);
                let lam_other = self.calendar.session_len(market.other());
                let Branch::Overnight(ref mut ov) = self.markets[l].branch else {
                    unreachable!("both markets are overnight inside a gap");
                };
                let s2 = ov.value(&m, lam, lam_other);
                let dr = s2.sqrt() * dbs[l];
                let (_, was_clamped) = ov.advance(&m, lam, lam_other, dt, dr);
                self.markets[l].x += dr;
                clamped += u64::from(was_clamped);
                steps += 1;
            }
            t_prev = t;
        }
        (clamped, steps)
    }

    /// Runs one market's full session `[open, open + lambda]`, with the
    /// other market accruing its overnight cross terms on the same grid.
    fn run_session(&mut self, market: Market, base: f64, rng: &mut ChaCha12Rng) -> SessionRecord {
        let l = market.idx();
        let o = market.other().idx();
        let m_own = self.structural.market[l];
        let m_other = self.structural.market[o];
        let lam = self.calendar.session_len(market);
        let lam_other = self.calendar.session_len(market.other());
        let (open, _close) = match market {
            Market::One => (base, base + lam),
            Market::Two => (base + self.calendar.tau, base + self.calendar.tau + lam),
        };
        let mm = self.ticks_per_session;

        // finalize the own overnight branch at the open
        let (sigma2_open, ov_sq) = {
            let Branch::Overnight(ov) = self.markets[l].branch else {
                unreachable!("market must be overnight before its open");
            };
            (ov.value(&m_own, lam, lam_other), ov.diffusion_return * ov.diffusion_return)
        };

        // day-level conditional variance from the shared recursion
        let h = match market {
            Market::One => h1_step(
                &self.mapped,
                &self.calendar,
                self.markets[0].h,
                &self.markets[0].last,
                ov_sq,
                &self.markets[1].last,
            ),
            Market::Two => h2_step(
                &self.mapped,
                &self.calendar,
                self.markets[1].h,
                &self.markets[1].last,
                ov_sq,
                &self.markets[0].last,
            ),
        };
        self.markets[l].h = h;
        self.markets[l].branch = Branch::Open(OpenSessionVariance::begin(sigma2_open));

        // session jump streams
        let mut jumps: Vec<(f64, f64, bool)> = Vec::new();
        for (stream, positive) in
            [(self.jumps.pos(market), true), (self.jumps.neg(market), false)]
        {
            for (t, sq) in self.draw_jumps(stream, open, lam, rng) {
                jumps.push((t, sq, positive));
            }
        }
        jumps.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut jump_iter = jumps.into_iter().peekable();

        let mut times = Vec::with_capacity(mm as usize + 1);
        let mut prices = Vec::with_capacity(mm as usize + 1);
        let mut clamped = 0u64;
        let mut steps = 0u64;
        let mut ijp = 0.0;
        let mut ijn = 0.0;

        // first tick at the open
        times.push(open);
        let e = self.draw_noise(l, rng);
        prices.push(self.markets[l].x + e);

        let mut t_prev = open;
        for j in 0..mm {
            let tick_a = open + lam * f64::from(j) / f64::from(mm);
            let tick_b = open + lam * f64::from(j + 1) / f64::from(mm);
            for s in 1..=self.substeps {
                let t_target = if s == self.substeps {
                    tick_b
                } else {
                    tick_a + (tick_b - tick_a) * f64::from(s) / f64::from(self.substeps)
                };
                // split the sub-interval at any jump times inside it
                loop {
                    let jump_here = match jump_iter.peek() {
                        Some(&(tj, _, _)) if tj <= t_target => Some(*jump_iter.peek().unwrap()),
                        _ => None,
                    };
                    let t_next = jump_here.map_or(t_target, |(tj, _, _)| tj);
                    let dt = (t_next - t_prev).max(0.0);
                    if dt > 0.0 {
                        let (db1, db2) = self.price_shocks(dt.sqrt(), rng);
                        let dvol: f64 = {
                            let z: f64 = rng.sample(StandardNormal);
                            dt.sqrt() * z
                        };
                        let dbs = [db1, db2];
                        // left-point variances first, then state updates
                        let (s2_own, cl_own) = {
                            let Branch::Open(ref mut op) = self.markets[l].branch else {
                                unreachable!()
                            };
                            op.advance(&m_own, lam, dt, dvol)
                        };
                        self.markets[l].x += s2_own.sqrt() * dbs[l];
                        let (s2_other, cl_other) = {
                            let Branch::Overnight(ref mut ovb) = self.markets[o].branch else {
                                unreachable!("other market is overnight during this session")
                            };
                            let s2 = ovb.value(&m_other, lam_other, lam);
                            let dr = s2.sqrt() * dbs[o];
                            let (_, cl) = ovb.advance(&m_other, lam_other, lam, dt, dr);
                            ovb.add_cross_variance(s2_own * dt);
                            (s2, cl)
                        };
                        self.markets[o].x += s2_other.sqrt() * dbs[o];
                        clamped += u64::from(cl_own) + u64::from(cl_other);
                        steps += 2;
                        t_prev = t_next;
                    } else {
                        t_prev = t_next;
                    }
                    if let Some((_, sq, positive)) = jump_here {
                        jump_iter.next();
                        let size = if positive { sq.sqrt() } else { -sq.sqrt() };
                        self.markets[l].x += size;
                        if positive {
                            ijp += sq;
                        } else {
                            ijn += sq;
                        }
                        let Branch::Open(ref mut op) = self.markets[l].branch else {
                            unreachable!()
                        };
                        op.add_jump(sq, positive);
                        let Branch::Overnight(ref mut ovb) = self.markets[o].branch else {
                            unreachable!()
                        };
                        ovb.add_cross_jump(sq, positive);
                    } else {
                        break;
                    }
                }
            }
            // tick observation at tick_b
            times.push(tick_b);
            let e = self.draw_noise(l, rng);
            prices.push(self.markets[l].x + e);
        }

        // close: read IV and start the overnight branch
        let (iv, sigma2_close) = {
            let Branch::Open(op) = self.markets[l].branch else { unreachable!() };
            (op.iv, op.value(&m_own, lam))
        };
        self.markets[l].branch = Branch::Overnight(OvernightVariance::begin(sigma2_close));
        self.markets[l].last = DayInnovations { rv: iv, jv_pos: ijp, jv_neg: ijn };

        SessionRecord { iv, ijp, ijn, ov: ov_sq, h, times, prices, clamped, steps }
    }

    /// Simulates the next day and returns its panel rows and latent record.
    pub fn step_day(&mut self, rng: &mut ChaCha12Rng) -> DayOutput {
        let base = self.day_counter as f64;
        let cal = self.calendar.clone();

        let rec1 = self.run_session(Market::One, base, rng);
        let (cb1, sb1) = self.run_gap(
            base + cal.lambda1,
            base + cal.tau,
            self.gap_points(cal.tau - cal.lambda1),
            rng,
        );
        let rec2 = self.run_session(Market::Two, base, rng);
        let (cb2, sb2) = self.run_gap(
            base + cal.tau + cal.lambda2,
            base + 1.0,
            self.gap_points(1.0 - cal.tau - cal.lambda2),
            rng,
        );

        self.day_counter += 1;
        DayOutput {
            times: [rec1.times, rec2.times],
            prices: [rec1.prices, rec2.prices],
            iv: [rec1.iv, rec2.iv],
            ijp: [rec1.ijp, rec2.ijp],
            ijn: [rec1.ijn, rec2.ijn],
            ov: [rec1.ov, rec2.ov],
            h: [rec1.h, rec2.h],
            clamped_steps: rec1.clamped + rec2.clamped + cb1 + cb2,
            total_steps: rec1.steps + rec2.steps + sb1 + sb2,
        }
    }

    fn gap_points(&self, gap_len: f64) -> u32 {
        let both = (self.calendar.tau - self.calendar.lambda1)
            + (1.0 - self.calendar.tau - self.calendar.lambda2);
        if both <= 0.0 || gap_len <= 0.0 {
            return 1;
        }
        let share = (f64::from(self.overnight_points) * gap_len / both).ceil() as u32;
        share.max(1)
    }
}

/// Simulates a recorded panel of `cfg.days` days after burn-in.
///
/// Aborts when more than 0.1% of Euler steps needed a variance clamp, which
/// signals a parameter set the discretization cannot represent faithfully.
pub fn simulate_panel(
    structural: &StructuralParams,
    jumps: &JumpSpec,
    noise: &NoiseSpec,
    calendar: &MarketCalendar,
    cfg: &SimConfig,
) -> Result<SimOutput> {
    cfg.validate()?;
    let mut sim = PathSimulator::new(
        structural,
        jumps,
        noise,
        calendar,
        cfg.ticks_per_session,
        cfg.substeps,
        cfg.overnight_points,
    )?;
    sim.set_burn_in(cfg.burn_in_days);
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.burn_in_days {
        let _ = sim.step_day(&mut rng);
    }

    let n = cfg.days as usize;
    let mut truth = GroundTruth {
        iv: [Vec::with_capacity(n), Vec::with_capacity(n)],
        ijp: [Vec::with_capacity(n), Vec::with_capacity(n)],
        ijn: [Vec::with_capacity(n), Vec::with_capacity(n)],
        ov: [Vec::with_capacity(n), Vec::with_capacity(n)],
        h: [Vec::with_capacity(n), Vec::with_capacity(n)],
        clamped_steps: 0,
        total_steps: 0,
    };
    let mut days: [Vec<DayTicks>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];
    for day in 1..=cfg.days {
        let mut out = sim.step_day(&mut rng);
        for l in 0..2 {
            truth.iv[l].push(out.iv[l]);
            truth.ijp[l].push(out.ijp[l]);
            truth.ijn[l].push(out.ijn[l]);
            truth.ov[l].push(out.ov[l]);
            truth.h[l].push(out.h[l]);
            days[l].push(DayTicks {
                day,
                times: std::mem::take(&mut out.times[l]),
                prices: std::mem::take(&mut out.prices[l]),
            });
        }
        truth.clamped_steps += out.clamped_steps;
        truth.total_steps += out.total_steps;
    }
    if truth.total_steps > 0
        && truth.clamped_steps as f64 > 1e-3 * truth.total_steps as f64
    {
        return Err(Error::numerical(format!(
            "variance clamped on {} of {} steps; parameters push the variance negative too often",
            truth.clamped_steps, truth.total_steps
        )));
    }
    let mapped = *sim.mapped();
    Ok(SimOutput { panel: TickPanel { calendar: calendar.clone(), days }, truth, mapped })
}
