//! Repetitions, the episode loop and parameter sweeps.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::output::EpisodeRow;
use super::{estimate_expected_reward, Environment};
use crate::curve::ActionAssignment;
use crate::error::{Error, Result};
use crate::ledger::RegretLedger;
use crate::optimizer::{BackendKind, SolveReport};
use crate::policies::{offline_optimal, OfflineOptimum, Policy};
use crate::simulator::Simulator;
use crate::store::SampleStore;
use crate::util::derive_seed;

const STREAM_POPULATION: u64 = 0;
const STREAM_OFFLINE: u64 = 1;
const STREAM_EVAL: u64 = 2;
const STREAM_POLICY: u64 = 3;
const STREAM_ENV: u64 = 4;

/// Expected-reward estimates keyed by assignment. Each assignment gets its
/// own rng stream derived from the base seed, so an estimate does not depend
/// on the order in which assignments are first seen.
#[derive(Debug, Clone)]
pub struct RewardCache {
    base_seed: u64,
    samples: usize,
    cache: HashMap<ActionAssignment, (f64, f64)>,
}

impl RewardCache {
    pub fn new(base_seed: u64, samples: usize) -> Self {
        Self { base_seed, samples, cache: HashMap::new() }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Cached `(mean, standard error)` of `E[r | assignment]`.
    pub fn estimate<E: Environment>(&mut self, env: &E, assignment: &ActionAssignment) -> Result<(f64, f64)> {
        if let Some(v) = self.cache.get(assignment) {
            return Ok(*v);
        }
        let stream = assignment.actions().iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &a| {
            (h ^ a as u64).wrapping_mul(0x0000_0100_0000_01b3)
        });
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.base_seed, stream));
        let v = estimate_expected_reward(env, assignment, self.samples, &mut rng)?;
        self.cache.insert(assignment.clone(), v);
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.cache.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cache.is_empty()
    }
}

fn solver_columns(report: Option<&SolveReport>) -> (String, Option<f64>, Option<f64>) {
    match report {
        None => ("none".into(), None, None),
        Some(r) => {
            let work = match r.backend {
                BackendKind::External => r.wall_time.as_secs_f64() * 1e3,
                _ => r.work as f64,
            };
            (r.backend.name().into(), Some(work), Some(r.gap))
        }
    }
}

/// The episode loop shared by every environment: select, observe, record,
/// and account regret against `opt_reward` with cached estimates of the
/// applied assignments. Stops at the first policy error, after appending a
/// diagnostic row.
#[allow(clippy::too_many_arguments)]
pub fn run_episodes<E: Environment, R: Rng>(
    env: &E,
    policy: &mut Policy,
    episodes: usize,
    opt_reward: f64,
    rewards: &mut RewardCache,
    policy_rng: &mut R,
    env_rng: &mut R,
    run_id: &str,
    label: &str,
) -> (RegretLedger, SampleStore, Vec<EpisodeRow>, Option<Error>) {
    let mut ledger = RegretLedger::new(rewards.samples());
    let mut store = SampleStore::new(env.action_counts(), env.horizon()).expect("environment dimensions are valid");
    let mut rows = Vec::with_capacity(episodes);
    for t in 1..=episodes {
        let step = (|| -> Result<EpisodeRow> {
            let decision = policy.select(&store, policy_rng, t)?;
            let curves = env.sample(&decision.assignment, env_rng)?;
            store.record_outcome(&decision.assignment, &curves)?;
            let (reward, _) = rewards.estimate(env, &decision.assignment)?;
            let rec = ledger.push(reward, opt_reward);
            let (backend, work, gap) = solver_columns(decision.solve.as_ref());
            Ok(EpisodeRow {
                run_id: run_id.to_string(),
                episode: t,
                policy: label.to_string(),
                reward_w: Some(rec.reward),
                opt_reward_w: Some(rec.opt_reward),
                regret_w: Some(rec.regret),
                norm_regret: rec.norm_regret,
                cum_norm_regret: Some(rec.cum_norm_regret),
                backend,
                solver_moves_or_ms: work,
                solver_gap: gap,
            })
        })();
        match step {
            Ok(row) => rows.push(row),
            Err(e) => {
                rows.push(EpisodeRow::diagnostic(run_id, t, label, policy.backend().kind().name(), &e));
                return (ledger, store, rows, Some(e));
            }
        }
    }
    (ledger, store, rows, None)
}

#[derive(Debug, Clone)]
pub struct RepetitionResult {
    pub index: usize,
    pub seed: u64,
    pub run_id: String,
    pub simulator: Simulator,
    /// `None` when the offline solve failed; the run then holds only a
    /// diagnostic row.
    pub offline: Option<OfflineOptimum>,
    /// Cached estimate of `E[r | ã]` used in every row.
    pub opt_reward: Option<f64>,
    pub ledger: RegretLedger,
    pub store: SampleStore,
    pub rows: Vec<EpisodeRow>,
    /// Set when the run aborted.
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub repetitions: Vec<RepetitionResult>,
}

impl ExperimentResult {
    pub fn final_cum_norm_regrets(&self) -> Vec<f64> {
        self.repetitions.iter().map(|r| r.ledger.cumulative_normalized_regret()).collect()
    }

    pub fn mean_final_cum_norm_regret(&self) -> f64 {
        let v = self.final_cum_norm_regrets();
        v.iter().sum::<f64>() / v.len() as f64
    }

    /// Mean cumulative normalized regret per episode across repetitions.
    pub fn mean_curve(&self) -> Vec<f64> {
        let episodes = self.repetitions.iter().map(|r| r.ledger.len()).min().unwrap_or(0);
        (0..episodes)
            .map(|t| {
                self.repetitions.iter().map(|r| r.ledger.records()[t].cum_norm_regret).sum::<f64>()
                    / self.repetitions.len() as f64
            })
            .collect()
    }

    pub fn first_error(&self) -> Option<&str> {
        self.repetitions.iter().find_map(|r| r.error.as_deref())
    }
}

fn run_repetition(config: &ExperimentConfig, index: usize) -> Result<RepetitionResult> {
    let seed = derive_seed(config.run.master_seed, index as u64);
    let stream = |s: u64| ChaCha8Rng::seed_from_u64(derive_seed(seed, s));
    let simulator = Simulator::new(config.sim.clone(), &mut stream(STREAM_POPULATION))?;
    let backend = config.optimizer.to_backend()?;
    let mut rewards = RewardCache::new(derive_seed(seed, STREAM_EVAL), config.run.eval_samples);

    let label = config.label();
    let run_id = format!("{label}-{index}");
    let offline = offline_optimal(
        &simulator,
        config.run.offline_scenarios,
        &backend,
        config.run.eval_samples,
        &mut stream(STREAM_OFFLINE),
    )
    .and_then(|o| rewards.estimate(&simulator, &o.assignment).map(|(r, _)| (o, r)));
    let (offline, opt_reward) = match offline {
        Ok(v) => v,
        Err(e) => {
            let row = EpisodeRow::diagnostic(&run_id, 0, &label, backend.kind().name(), &e);
            return Ok(RepetitionResult {
                index,
                seed,
                run_id,
                store: SampleStore::new(simulator.action_counts(), simulator.horizon())?,
                simulator,
                offline: None,
                opt_reward: None,
                ledger: RegretLedger::new(config.run.eval_samples),
                rows: vec![row],
                error: Some(format!("offline optimum: {e}")),
            });
        }
    };

    let mut policy = Policy::new(config.policy.clone(), backend)?;
    let (ledger, store, rows, error) = run_episodes(
        &simulator,
        &mut policy,
        config.run.episodes,
        opt_reward,
        &mut rewards,
        &mut stream(STREAM_POLICY),
        &mut stream(STREAM_ENV),
        &run_id,
        &label,
    );
    Ok(RepetitionResult {
        index,
        seed,
        run_id,
        simulator,
        offline: Some(offline),
        opt_reward: Some(opt_reward),
        ledger,
        store,
        rows,
        error: error.map(|e| e.to_string()),
    })
}

/// Runs every repetition (in parallel, each on its own derived seed) and
/// returns the results in repetition order. Nothing is written to disk.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let repetitions =
        (0..config.run.repetitions).into_par_iter().map(|i| run_repetition(config, i)).collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult { config: config.clone(), repetitions })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Beta,
    Epsilon,
    Tau,
    NScenarios,
    SigmaU,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "beta" => SweepAxis::Beta,
            "epsilon" => SweepAxis::Epsilon,
            "tau" => SweepAxis::Tau,
            "n_scenarios" | "N" => SweepAxis::NScenarios,
            "sigma_u" => SweepAxis::SigmaU,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Beta => "beta",
            SweepAxis::Epsilon => "epsilon",
            SweepAxis::Tau => "tau",
            SweepAxis::NScenarios => "n_scenarios",
            SweepAxis::SigmaU => "sigma_u",
        }
    }

    fn key(self) -> &'static str {
        match self {
            SweepAxis::Beta => "policy.beta",
            SweepAxis::Epsilon => "policy.epsilon",
            SweepAxis::Tau => "policy.tau",
            SweepAxis::NScenarios => "policy.n_scenarios",
            SweepAxis::SigmaU => "sim.sigma_u",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub axis: SweepAxis,
    /// `(value, result)` in the order given.
    pub points: Vec<(String, ExperimentResult)>,
}

/// One experiment per value; point `k` uses master seed `seed ^ k` and
/// writes below `out_dir/<axis>=<value>`.
pub fn run_sweep(config: &ExperimentConfig, axis: SweepAxis, values: &[String]) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(Error::EmptyInput("sweep needs at least one value".into()));
    }
    let configs = values
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let mut c = config.clone();
            c.set(axis.key(), v).map_err(Error::Argument)?;
            c.run.master_seed = config.run.master_seed ^ k as u64;
            c.run.out_dir = config.run.out_dir.join(format!("{}={}", axis.name(), v));
            if c.run.label.is_none() {
                c.run.label = Some(format!("{}={}", axis.name(), v));
            }
            c.validate()?;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    let results = configs.par_iter().map(run_experiment).collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { axis, points: values.iter().cloned().zip(results).collect() })
}
