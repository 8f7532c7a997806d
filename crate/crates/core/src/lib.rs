//! Fee analysis for two-asset geometric mean market makers.
//!
//! * [`arbitrage`]: no-arbitrage interval, optimal arbitrage trades, LP
//!   adjustment costs and post-trade weights, plus a brute-force oracle.
//! * [`value`]: closed-form discounted LP loss on the no-trade interval and
//!   fee sweeps.
//! * [`simulator`]: Monte Carlo estimators of the same loss for the
//!   arbitrage-adjusted weight process.
//! * [`validation`]: the property suite behind the `validate` command.

// Parameter guards are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arbitrage;
pub mod error;
pub mod simulator;
pub mod validation;
pub mod value;

pub use arbitrage::{ArbitrageOutcome, Direction, NoArbInterval, PoolParams, PoolState, Weight};
pub use error::{Error, Result};
pub use simulator::{PathStats, SimConfig};
pub use value::{MarketParams, PenaltyParams, ValueSolution};
