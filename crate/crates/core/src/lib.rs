//! Two-market volatility contagion toolkit.
//!
//! The library covers the full pipeline for studying volatility spillover
//! between two markets that trade in disjoint sessions (e.g. an Asian and a
//! US exchange):
//!
//! - a continuous-time price model whose instantaneous variance reacts to
//!   the other market's realized variation while that market trades
//!   ([`params`], [`calendar`]),
//! - a tick-level jump-diffusion simulator with microstructure noise
//!   ([`sim`]),
//! - noise- and jump-robust daily realized measures ([`measures`]),
//! - quasi-maximum-likelihood estimation of the implied daily GARCH filter
//!   ([`qmle`], [`optim`]),
//! - sandwich covariances, Wald and per-coordinate break tests
//!   ([`inference`], [`stats`]),
//! - a HAR-style contagion regression fitted by the same quasi-likelihood
//!   ([`har`]),
//! - CSV interchange for every artifact ([`io`]).
//!
//! Model time is measured in days: market 1's day-`i` session is
//! `[i-1, i-1+lambda1]` and market 2's is `[i-1+tau, i-1+tau+lambda2]`.
//! All randomness is reproducible from a single `u64` seed.
//!
//! ```
//! use contagion_garch::params::{StructuralParams, JumpSpec, map_structural_to_garch};
//!
//! let s = StructuralParams::baseline();
//! let j = JumpSpec::baseline();
//! let g = map_structural_to_garch(&s, &j).unwrap();
//! // persistence of market 1's daily filter: product of the two
//! // mean-reversion coefficients
//! assert!((g.gamma1 - 0.12).abs() < 1e-12);
//! ```

pub mod calendar;
pub mod error;
pub mod har;
pub mod inference;
pub mod io;
pub mod measures;
pub mod optim;
pub mod params;
pub mod qmle;
pub mod seed;
pub mod sim;
pub mod stats;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
