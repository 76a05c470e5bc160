//! Action-selection rules: Single Episode (SE), Multi Episode (ME), the
//! uniform random baseline, and the offline optimum used as the regret
//! reference.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::curve::{ActionAssignment, LoadCurve};
use crate::error::{Error, Result};
use crate::harness::{estimate_expected_reward, Environment};
use crate::optimizer::{objective_value, Backend, SolveReport};
use crate::scenario::ScenarioTable;
use crate::simulator::Simulator;
use crate::store::{weighted_mean_curve, SampleStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    SingleEpisode,
    MultiEpisode,
    Random,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::SingleEpisode => "se",
            PolicyKind::MultiEpisode => "me",
            PolicyKind::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "se" | "single" | "single_episode" => Some(PolicyKind::SingleEpisode),
            "me" | "multi" | "multi_episode" => Some(PolicyKind::MultiEpisode),
            "random" => Some(PolicyKind::Random),
            _ => None,
        }
    }
}

/// Optimistic initial curves `I(i, j, ·)`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialValues {
    Constant(f64),
    /// `curves[i][j]`.
    PerAction(Vec<Vec<LoadCurve>>),
}

impl InitialValues {
    pub fn curve(&self, actor: usize, action: usize, horizon: usize) -> LoadCurve {
        match self {
            InitialValues::Constant(v) => LoadCurve::constant(horizon, *v),
            InitialValues::PerAction(curves) => curves[actor][action].clone(),
        }
    }

    fn check(&self, counts: &[usize], horizon: usize) -> Result<()> {
        match self {
            InitialValues::Constant(v) if v.is_finite() => Ok(()),
            InitialValues::Constant(v) => Err(Error::Argument(format!("initial value must be finite, got {v}"))),
            InitialValues::PerAction(curves) => {
                let ok = curves.len() == counts.len()
                    && curves.iter().zip(counts).all(|(row, &k)| row.len() == k && row.iter().all(|c| c.horizon() == horizon));
                if ok {
                    Ok(())
                } else {
                    Err(Error::Dimension("initial curves do not match the action counts and horizon".into()))
                }
            }
        }
    }
}

impl Default for InitialValues {
    fn default() -> Self {
        InitialValues::Constant(2000.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Weight of the initial curve in the SE mean.
    pub beta: f64,
    /// Per-actor probability of replacing the solved action by a random one.
    pub epsilon: f64,
    /// Episodes `1..=tau` are fully random.
    pub tau: usize,
    /// Sample episodes in the ME table.
    pub n_scenarios: usize,
    pub initial: InitialValues,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            kind: PolicyKind::SingleEpisode,
            beta: 0.0,
            epsilon: 0.0,
            tau: 0,
            n_scenarios: 1,
            initial: InitialValues::default(),
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Argument(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Argument(format!("epsilon must lie in [0, 1], got {}", self.epsilon)));
        }
        if self.n_scenarios == 0 {
            return Err(Error::Argument("n_scenarios must be >= 1".into()));
        }
        Ok(())
    }
}

/// A selected assignment and, when the optimizer ran, its report.
#[derive(Debug, Clone)]
pub struct Decision {
    pub assignment: ActionAssignment,
    pub solve: Option<SolveReport>,
}

/// Uniform action per actor.
pub fn random_select<R: Rng + ?Sized>(action_counts: &[usize], rng: &mut R) -> ActionAssignment {
    ActionAssignment::new(action_counts.iter().map(|&k| rng.random_range(0..k)).collect())
}

/// The N=1 table of blended means used by SE.
pub fn se_table(store: &SampleStore, config: &PolicyConfig) -> Result<ScenarioTable> {
    let h = store.horizon();
    config.initial.check(store.action_counts(), h)?;
    let mut table = ScenarioTable::zeros(1, store.action_counts().to_vec(), h)?;
    for i in 0..store.actors() {
        for j in 0..store.action_counts()[i] {
            let init = config.initial.curve(i, j, h);
            table.set_curve(0, i, j, &weighted_mean_curve(store, i, j, config.beta, &init))?;
        }
    }
    Ok(table)
}

/// ME sample episodes: every `(i, j)` cell independently deals its stored
/// curves to the `n` scenarios in shuffled rounds, so no curve is reused
/// before all others have been used. Empty cells contribute `I(i, j, ·)`.
pub fn me_build_scenarios<R: Rng + ?Sized>(
    store: &SampleStore,
    n: usize,
    initial: &InitialValues,
    rng: &mut R,
) -> Result<ScenarioTable> {
    if n == 0 {
        return Err(Error::Argument("at least one scenario required".into()));
    }
    let h = store.horizon();
    initial.check(store.action_counts(), h)?;
    let mut table = ScenarioTable::zeros(n, store.action_counts().to_vec(), h)?;
    let mut pool: Vec<usize> = Vec::new();
    for i in 0..store.actors() {
        for j in 0..store.action_counts()[i] {
            let samples = store.samples(i, j);
            if samples.is_empty() {
                let init = initial.curve(i, j, h);
                for t in 0..n {
                    table.set_curve(t, i, j, &init)?;
                }
                continue;
            }
            pool.clear();
            for t in 0..n {
                if pool.is_empty() {
                    pool.extend(0..samples.len());
                    pool.shuffle(rng);
                }
                let pick = pool.pop().expect("refilled");
                table.set_curve(t, i, j, &samples[pick])?;
            }
        }
    }
    Ok(table)
}

/// Bit-exact identity of a table, for memoising deterministic solves.
fn table_key(table: &ScenarioTable) -> (usize, Vec<usize>, Vec<u64>) {
    let mut shape = table.action_counts().to_vec();
    shape.push(table.horizon());
    (table.scenarios(), shape, table.raw_values().iter().map(|v| v.to_bits()).collect())
}

/// A policy instance for one run: configuration, backend, and a memo of
/// solves of identical tables (deterministic backends only).
#[derive(Debug)]
pub struct Policy {
    config: PolicyConfig,
    backend: Backend,
    memo: HashMap<(usize, Vec<usize>, Vec<u64>), SolveReport>,
}

impl Policy {
    pub fn new(config: PolicyConfig, backend: Backend) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, backend, memo: HashMap::new() })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    /// Assignment for episode `t` (one-based).
    pub fn select<R: Rng + ?Sized>(&mut self, store: &SampleStore, rng: &mut R, t: usize) -> Result<Decision> {
        if t == 0 {
            return Err(Error::Argument("episodes are numbered from 1".into()));
        }
        let counts = store.action_counts();
        if self.config.kind == PolicyKind::Random || t <= self.config.tau {
            return Ok(Decision { assignment: random_select(counts, rng), solve: None });
        }
        let table = match self.config.kind {
            PolicyKind::SingleEpisode => se_table(store, &self.config)?,
            _ => me_build_scenarios(store, self.config.n_scenarios, &self.config.initial, rng)?,
        };
        let report = self.solve(&table, rng)?;
        let mut assignment = report.assignment.clone();
        if self.config.epsilon > 0.0 {
            for (i, &k) in counts.iter().enumerate() {
                if rng.random::<f64>() < self.config.epsilon {
                    assignment.set(i, rng.random_range(0..k));
                }
            }
        }
        Ok(Decision { assignment, solve: Some(report) })
    }

    fn solve<R: Rng + ?Sized>(&mut self, table: &ScenarioTable, rng: &mut R) -> Result<SolveReport> {
        if !self.backend.is_deterministic() {
            return self.backend.solve(table, rng);
        }
        let key = table_key(table);
        if let Some(r) = self.memo.get(&key) {
            return Ok(r.clone());
        }
        let report = self.backend.solve(table, rng)?;
        self.memo.insert(key, report.clone());
        Ok(report)
    }
}

/// SE selection with a throwaway policy instance.
pub fn se_select<R: Rng + ?Sized>(
    store: &SampleStore,
    config: &PolicyConfig,
    backend: &Backend,
    rng: &mut R,
    t: usize,
) -> Result<Decision> {
    let config = PolicyConfig { kind: PolicyKind::SingleEpisode, ..config.clone() };
    Policy::new(config, backend.clone())?.select(store, rng, t)
}

/// ME selection with a throwaway policy instance.
pub fn me_select<R: Rng + ?Sized>(
    store: &SampleStore,
    config: &PolicyConfig,
    backend: &Backend,
    rng: &mut R,
    t: usize,
) -> Result<Decision> {
    let config = PolicyConfig { kind: PolicyKind::MultiEpisode, ..config.clone() };
    Policy::new(config, backend.clone())?.select(store, rng, t)
}

#[derive(Debug, Clone)]
pub struct OfflineOptimum {
    pub assignment: ActionAssignment,
    /// Fresh Monte Carlo estimate of `E[r | assignment]`.
    pub expected_reward: f64,
    pub standard_error: f64,
    /// Objective on the training scenarios.
    pub in_sample: f64,
    pub solve: SolveReport,
}

/// Solves the joint program on `n_scenarios` ground-truth sample episodes and
/// re-estimates the winner on `eval_samples` fresh episodes.
pub fn offline_optimal<R: Rng + ?Sized>(
    simulator: &Simulator,
    n_scenarios: usize,
    backend: &Backend,
    eval_samples: usize,
    rng: &mut R,
) -> Result<OfflineOptimum> {
    let table = simulator.ground_truth_table(n_scenarios, rng)?;
    let solve = backend.solve(&table, rng)?;
    let in_sample = objective_value(&table, &solve.assignment)?;
    let (expected_reward, standard_error) = estimate_expected_reward(simulator, &solve.assignment, eval_samples, rng)?;
    Ok(OfflineOptimum { assignment: solve.assignment.clone(), expected_reward, standard_error, in_sample, solve })
}

/// An empty store shaped for `env`.
pub fn store_for<E: Environment>(env: &E) -> Result<SampleStore> {
    SampleStore::new(env.action_counts(), env.horizon())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::LocalSearchParams;
    use crate::simulator::SimParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exact() -> Backend {
        Backend::default()
    }

    fn curve(values: &[f64]) -> LoadCurve {
        LoadCurve::new(values.to_vec()).unwrap()
    }

    /// Store where every cell holds `per_cell` random samples.
    fn filled_store(counts: &[usize], horizon: usize, per_cell: usize, seed: u64) -> SampleStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = SampleStore::new(counts.to_vec(), horizon).unwrap();
        let kmax = *counts.iter().max().unwrap();
        for _ in 0..per_cell {
            for j in 0..kmax {
                let a = ActionAssignment::new(counts.iter().map(|&k| j % k).collect());
                let curves: Vec<LoadCurve> = counts
                    .iter()
                    .map(|_| curve(&(0..horizon).map(|_| rng.random_range(0.0..1000.0)).collect::<Vec<_>>()))
                    .collect();
                store.record_outcome(&a, &curves).unwrap();
            }
        }
        store
    }

    #[test]
    fn tau_episodes_are_random_regardless_of_store() {
        let store = filled_store(&[4, 4, 4], 3, 2, 1);
        let config = PolicyConfig { tau: 1, ..PolicyConfig::default() };
        let mut seen = std::collections::HashSet::new();
        for s in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let d = se_select(&store, &config, &exact(), &mut rng, 1).unwrap();
            assert!(d.solve.is_none());
            let expect = random_select(&[4, 4, 4], &mut ChaCha8Rng::seed_from_u64(s));
            assert_eq!(d.assignment, expect);
            seen.insert(d.assignment);
        }
        assert!(seen.len() > 20);
        let d = se_select(&store, &config, &exact(), &mut ChaCha8Rng::seed_from_u64(0), 2).unwrap();
        assert!(d.solve.is_some());
        assert!(se_select(&store, &config, &exact(), &mut ChaCha8Rng::seed_from_u64(0), 0).is_err());
    }

    #[test]
    fn epsilon_one_ignores_the_solver() {
        let store = filled_store(&[5, 5], 2, 1, 2);
        let config = PolicyConfig { epsilon: 1.0, ..PolicyConfig::default() };
        let solved = se_select(&store, &PolicyConfig::default(), &exact(), &mut ChaCha8Rng::seed_from_u64(0), 1)
            .unwrap()
            .assignment;
        let mut hist = [[0usize; 5]; 2];
        for s in 0..2000 {
            let d = se_select(&store, &config, &exact(), &mut ChaCha8Rng::seed_from_u64(s), 1).unwrap();
            for i in 0..2 {
                hist[i][d.assignment.get(i)] += 1;
            }
        }
        // Every action, including the solved one, is drawn close to 1/5 of the time.
        for i in 0..2 {
            for j in 0..5 {
                assert!((hist[i][j] as f64 - 400.0).abs() < 80.0, "{hist:?} solved {solved:?}");
            }
        }
    }

    #[test]
    fn fresh_store_gives_lexicographically_smallest() {
        let store = SampleStore::new(vec![3, 4, 2], 4).unwrap();
        for beta in [0.0, 0.5, 10.0] {
            let config = PolicyConfig { beta, ..PolicyConfig::default() };
            let d = se_select(&store, &config, &exact(), &mut ChaCha8Rng::seed_from_u64(3), 1).unwrap();
            assert_eq!(d.assignment.actions(), &[0, 0, 0]);
            let d = me_select(&store, &PolicyConfig { n_scenarios: 4, ..config }, &exact(), &mut ChaCha8Rng::seed_from_u64(3), 1)
                .unwrap();
            assert_eq!(d.assignment.actions(), &[0, 0, 0]);
        }
    }

    #[test]
    fn se_table_blends_initial_value() {
        let mut store = SampleStore::new(vec![2], 2).unwrap();
        store.record_outcome(&ActionAssignment::new(vec![1]), &[curve(&[100.0, 300.0])]).unwrap();
        let config = PolicyConfig { beta: 1.0, ..PolicyConfig::default() };
        let t = se_table(&store, &config).unwrap();
        assert_eq!(t.curve(0, 0, 0), &[2000.0, 2000.0]);
        assert_eq!(t.curve(0, 0, 1), &[1050.0, 1150.0]);
        let t = se_table(&store, &PolicyConfig::default()).unwrap();
        assert_eq!(t.curve(0, 0, 1), &[100.0, 300.0]);
    }

    #[test]
    fn me_single_sample_fills_every_scenario() {
        let mut store = SampleStore::new(vec![2], 2).unwrap();
        store.record_outcome(&ActionAssignment::new(vec![0]), &[curve(&[5.0, 6.0])]).unwrap();
        let t = me_build_scenarios(&store, 3, &InitialValues::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for s in 0..3 {
            assert_eq!(t.curve(s, 0, 0), &[5.0, 6.0]);
            assert_eq!(t.curve(s, 0, 1), &[2000.0, 2000.0]);
        }
        assert!(me_build_scenarios(&store, 0, &InitialValues::default(), &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn me_three_samples_three_scenarios_is_a_permutation() {
        let mut store = SampleStore::new(vec![1], 1).unwrap();
        for v in [1.0, 2.0, 3.0] {
            store.record_outcome(&ActionAssignment::new(vec![0]), &[curve(&[v])]).unwrap();
        }
        let mut orders = std::collections::HashSet::new();
        for s in 0..60 {
            let t = me_build_scenarios(&store, 3, &InitialValues::default(), &mut ChaCha8Rng::seed_from_u64(s)).unwrap();
            let mut got: Vec<f64> = (0..3).map(|k| t.get(k, 0, 0, 0)).collect();
            orders.insert(got.iter().map(|v| *v as u8).collect::<Vec<_>>());
            got.sort_by(f64::total_cmp);
            assert_eq!(got, vec![1.0, 2.0, 3.0]);
        }
        assert_eq!(orders.len(), 6);
    }

    #[test]
    fn me_n1_matches_se_beta0_on_single_sample_stores() {
        for seed in 0..20 {
            let store = filled_store(&[5, 5, 5], 3, 1, 100 + seed);
            assert!((0..3).all(|i| (0..5).all(|j| store.count(i, j) == 1)));
            for epsilon in [0.0, 0.3] {
                let config = PolicyConfig { epsilon, n_scenarios: 1, ..PolicyConfig::default() };
                let a = se_select(&store, &config, &exact(), &mut ChaCha8Rng::seed_from_u64(seed), 5).unwrap();
                let b = me_select(&store, &config, &exact(), &mut ChaCha8Rng::seed_from_u64(seed), 5).unwrap();
                assert_eq!(a.assignment, b.assignment);
            }
        }
    }

    #[test]
    fn output_is_a_function_of_the_store() {
        let store = filled_store(&[4, 4, 4, 4], 3, 2, 7);
        let config = PolicyConfig::default();
        let first = se_select(&store, &config, &exact(), &mut ChaCha8Rng::seed_from_u64(0), 9).unwrap().assignment;
        for s in 1..10 {
            let d = se_select(&store, &config, &exact(), &mut ChaCha8Rng::seed_from_u64(s), 9).unwrap();
            assert_eq!(d.assignment, first);
        }
    }

    #[test]
    fn memo_reuses_identical_tables() {
        let store = filled_store(&[6, 6, 6], 4, 1, 8);
        let mut p = Policy::new(PolicyConfig::default(), exact()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = p.select(&store, &mut rng, 1).unwrap();
        let b = p.select(&store, &mut rng, 2).unwrap();
        assert_eq!(a.solve, b.solve);
        assert_eq!(p.memo.len(), 1);
        let mut local = Policy::new(PolicyConfig::default(), Backend::Local(LocalSearchParams::default())).unwrap();
        local.select(&store, &mut rng, 1).unwrap();
        assert!(local.memo.is_empty());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for c in [
            PolicyConfig { beta: -1.0, ..PolicyConfig::default() },
            PolicyConfig { epsilon: 1.5, ..PolicyConfig::default() },
            PolicyConfig { n_scenarios: 0, ..PolicyConfig::default() },
        ] {
            assert!(Policy::new(c, exact()).is_err());
        }
        let store = SampleStore::new(vec![2, 2], 2).unwrap();
        let bad = PolicyConfig { initial: InitialValues::PerAction(vec![vec![LoadCurve::zeros(2)]]), ..PolicyConfig::default() };
        assert!(se_table(&store, &bad).is_err());
    }

    #[test]
    fn random_select_histogram_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = 8;
        let draws = 100_000;
        let mut hist = vec![0usize; k];
        for _ in 0..draws {
            hist[random_select(&[1, k], &mut rng).get(1)] += 1;
        }
        let p = 1.0 / k as f64;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        assert!(hist.iter().all(|&c| (c as f64 - mean).abs() <= 3.0 * sd), "{hist:?}");
        let a = random_select(&[3, 1, 9], &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, random_select(&[3, 1, 9], &mut ChaCha8Rng::seed_from_u64(5)));
        assert_eq!(a.get(1), 0);
    }

    #[test]
    fn noiseless_offline_optimum_is_repeatable() {
        let params = SimParams { actors: 5, horizon: 5, sigma_u: 0.0, ..SimParams::default() };
        let sim = Simulator::new(params, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let a = offline_optimal(&sim, 3, &exact(), 10, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = offline_optimal(&sim, 3, &exact(), 10, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.expected_reward, a.in_sample);
        assert_eq!(a.standard_error, 0.0);
        // Brute force over the deterministic table.
        let t = sim.ground_truth_table(1, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let k = sim.action_count();
        let mut best = f64::NEG_INFINITY;
        for code in 0..k.pow(5) {
            let acts: Vec<usize> = (0..5).map(|i| code / k.pow(i) % k).collect();
            best = best.max(objective_value(&t, &ActionAssignment::new(acts)).unwrap());
        }
        assert_eq!(a.in_sample, best);
    }
}
