//! Combinatorial multi-bandit laboratory.
//!
//! A population of actors (energy consumers) each pulls one arm (a load
//! reduction request interval) per episode. The outcome of every actor is
//! observed individually and the episode reward is the max-min sustained load
//! reduction over the target interval. The crate provides:
//!
//! - domain types, the reward and regret accounting ([`curve`], [`store`], [`ledger`]),
//! - the consumer simulator ([`simulator`]),
//! - the max-min assignment program with exact, local-search and external
//!   backends ([`optimizer`]),
//! - the learning policies ([`policies`]),
//! - exact analysis of small instances and the log-time regret lower bound
//!   ([`bounds`]),
//! - configuration, experiment execution, CSV and SVG output ([`harness`]).
//!
//! Indices are zero-based in the API. Every text format (LP files, solution
//! files, instance files, store snapshots) uses one-based actor/action indices.

pub mod bounds;
pub mod curve;
pub mod error;
pub mod harness;
pub mod ledger;
pub mod optimizer;
pub mod policies;
pub mod scenario;
pub mod simulator;
pub mod store;
mod util;

pub use curve::{regret, reward, ActionAssignment, LoadCurve};
pub use error::{Error, Result};
pub use ledger::{EpisodeRecord, RegretLedger};
pub use scenario::ScenarioTable;
pub use store::{weighted_mean_curve, SampleStore};
