//! Simulation and analysis toolkit for the Generalized Second Price (GSP)
//! position auction.
//!
//! * [`auction`]: the mechanism itself and welfare primitives.
//! * [`equilibria`]: pure equilibria on bid grids, worst-case ratio search
//!   and the structural welfare property.
//! * [`learning`]: repeated GSP with Hedge bidders, regret and empirical
//!   coarse correlated equilibria.
//! * [`bayesian`]: value distributions, strategy tables and Monte Carlo
//!   interim checks.
//! * [`byzantine`]: mixed populations of learners and scripted bidders.
//! * [`frontier`]: closed-form worst-case ratios for small slot counts and
//!   their numerical maximization.
//!
//! Agents and slots are 0-based throughout.

pub mod auction;
pub mod bayesian;
pub mod byzantine;
pub mod equilibria;
pub mod error;
pub mod frontier;
pub mod grid;
pub mod instance;
pub mod learning;
pub mod rng;

pub use auction::{AuctionOutcome, BidProfile, CtrProfile, Instance, ValueProfile};
pub use error::{GspError, Result};
pub use grid::BidGrid;

/// `1 - 1/e`, the structural constant attained at equilibrium.
pub const GAMMA_EQ: f64 = 1.0 - 1.0 / std::f64::consts::E;

/// Guaranteed welfare fraction `γ/2` at `γ = 1 - 1/e`.
pub fn welfare_fraction_floor() -> f64 {
    GAMMA_EQ / 2.0
}
