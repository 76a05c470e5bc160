//! Experiment configuration and execution, CSV and SVG output, sweeps and
//! the regret-over-log-time diagnostic.

mod config;
mod experiment;
mod output;
mod plot;

pub use config::{ExperimentConfig, OptimizerConfig, RunConfig, SEED_ENV};
pub use experiment::{
    run_episodes, run_experiment, run_sweep, ExperimentResult, RepetitionResult, RewardCache, SweepAxis, SweepResult,
};
pub use output::{
    ledger_from_rows, read_rows, write_experiment, write_rows, write_sweep, EpisodeRow, CSV_HEADER,
};
pub use plot::{emit_plot, plot_csv_files, PlotSeries};

use rand::Rng;

use crate::curve::{reward, ActionAssignment, LoadCurve};
use crate::error::{Error, Result};
use crate::ledger::RegretLedger;
use crate::simulator::Simulator;

/// Anything that produces per-actor outcome curves for an assignment.
pub trait Environment {
    fn action_counts(&self) -> Vec<usize>;
    fn horizon(&self) -> usize;
    fn sample<R: Rng + ?Sized>(&self, assignment: &ActionAssignment, rng: &mut R) -> Result<Vec<LoadCurve>>;
}

impl Environment for Simulator {
    fn action_counts(&self) -> Vec<usize> {
        Simulator::action_counts(self)
    }

    fn horizon(&self) -> usize {
        Simulator::horizon(self)
    }

    fn sample<R: Rng + ?Sized>(&self, assignment: &ActionAssignment, rng: &mut R) -> Result<Vec<LoadCurve>> {
        self.episode(assignment, rng)
    }
}

/// Mean reward over `m` fresh episodes under `assignment`, and its standard
/// error (zero when `m == 1`). The mean is a running mean, so a noiseless
/// environment gives back its reward exactly.
pub fn estimate_expected_reward<E: Environment, R: Rng + ?Sized>(
    env: &E,
    assignment: &ActionAssignment,
    m: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if m == 0 {
        return Err(Error::Argument("at least one evaluation episode required".into()));
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for k in 0..m {
        let r = reward(&env.sample(assignment, rng)?)?;
        let delta = r - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (r - mean);
    }
    let se = if m > 1 { (m2 / (m - 1) as f64).sqrt() / (m as f64).sqrt() } else { 0.0 };
    Ok((mean, se))
}

/// `R(t) / ln t` for `t >= 2`, next to the asymptotic constant `rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRegretPoint {
    pub episode: usize,
    pub ratio: f64,
    pub bound: f64,
}

/// Cumulative regret over `ln t` per episode. Purely descriptive: the lower
/// bound is asymptotic and nothing is asserted at finite `t`.
pub fn regret_over_log_t_diagnostic(ledger: &RegretLedger, rho: f64) -> Vec<LogRegretPoint> {
    ledger
        .records()
        .iter()
        .filter(|r| r.episode >= 2)
        .map(|r| LogRegretPoint { episode: r.episode, ratio: r.cum_regret / (r.episode as f64).ln(), bound: rho })
        .collect()
}

/// Average fraction of the optimal reward obtained over `episodes` episodes,
/// `1 - cum_norm_regret / episodes`.
///
/// ```
/// use mblab::harness::average_fraction_of_optimal;
/// // A cumulative normalized regret of 115 over a 365-day year means about
/// // 70% of the optimal reduction was obtained on average.
/// let f = average_fraction_of_optimal(115.0, 365);
/// assert!((f - 0.685).abs() < 1e-3);
/// assert_eq!((f * 10.0).round() / 10.0, 0.7);
/// ```
pub fn average_fraction_of_optimal(cum_norm_regret: f64, episodes: usize) -> f64 {
    1.0 - cum_norm_regret / episodes as f64
}
