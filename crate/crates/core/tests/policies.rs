use std::collections::HashMap;

use mblab::optimizer::{Backend, LocalSearchParams};
use mblab::policies::{
    me_build_scenarios, offline_optimal, se_select, InitialValues, PolicyConfig, PolicyKind,
};
use mblab::simulator::{SimParams, Simulator};
use mblab::{ActionAssignment, LoadCurve, SampleStore};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn noisy_sim(seed: u64, sigma_u: f64) -> Simulator {
    let params = SimParams { actors: 6, horizon: 6, sigma_u, ..SimParams::default() };
    Simulator::new(params, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn me_usage_counts_differ_by_at_most_one(stored in 1usize..7, n in 1usize..25, seed in any::<u64>()) {
        let mut store = SampleStore::new(vec![1], 1).unwrap();
        for v in 0..stored {
            store.record_outcome(&ActionAssignment::new(vec![0]), &[LoadCurve::new(vec![v as f64]).unwrap()]).unwrap();
        }
        let t = me_build_scenarios(&store, n, &InitialValues::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mut uses = vec![0usize; stored];
        for s in 0..n {
            uses[t.get(s, 0, 0, 0) as usize] += 1;
        }
        let lo = *uses.iter().min().unwrap();
        let hi = *uses.iter().max().unwrap();
        prop_assert!(hi - lo <= 1, "{:?}", uses);
        prop_assert_eq!(uses.iter().sum::<usize>(), n);
    }

    #[test]
    fn epsilon_keeps_every_action_in_play(epsilon in 0.2f64..1.0, seed in any::<u64>()) {
        // With an informative store the solver always picks the same
        // assignment; exploration alone has to reach the other actions.
        let k = 4;
        let mut store = SampleStore::new(vec![k, k], 1).unwrap();
        for j in 0..k {
            let c = LoadCurve::new(vec![j as f64]).unwrap();
            store.record_outcome(&ActionAssignment::new(vec![j, j]), &[c.clone(), c]).unwrap();
        }
        let config = PolicyConfig { epsilon, ..PolicyConfig::default() };
        let backend = Backend::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let episodes = 400;
        let mut counts = HashMap::new();
        for t in 1..=episodes {
            let a = se_select(&store, &config, &backend, &mut rng, t).unwrap().assignment;
            for i in 0..2 {
                *counts.entry((i, a.get(i))).or_insert(0usize) += 1;
            }
        }
        // Expected count is at least T*eps/k; allow 4 binomial standard deviations.
        let expect = episodes as f64 * epsilon / k as f64;
        let slack = 4.0 * expect.sqrt();
        for i in 0..2 {
            for j in 0..k {
                let c = *counts.get(&(i, j)).unwrap_or(&0) as f64;
                prop_assert!(c >= expect - slack, "({}, {}) seen {} times, expected >= {}", i, j, c, expect);
            }
        }
    }
}

#[test]
fn more_training_scenarios_give_better_offline_assignments() {
    let backend = Backend::default();
    let mut wins = 0;
    let trials = 50;
    for s in 0..trials {
        let sim = noisy_sim(1000 + s, 400.0);
        let one = offline_optimal(&sim, 1, &backend, 200, &mut ChaCha8Rng::seed_from_u64(s)).unwrap();
        let many = offline_optimal(&sim, 20, &backend, 200, &mut ChaCha8Rng::seed_from_u64(s)).unwrap();
        if many.expected_reward >= one.expected_reward {
            wins += 1;
        }
    }
    eprintln!("20-scenario assignment at least as good in {wins}/{trials} trials");
    assert!(wins > trials / 2, "{wins}/{trials}");
}

#[test]
fn in_sample_value_is_optimistic_on_average() {
    let backend = Backend::default();
    let trials = 20;
    let mut excess = 0.0;
    for s in 0..trials {
        let sim = noisy_sim(2000 + s, 400.0);
        let o = offline_optimal(&sim, 5, &backend, 200, &mut ChaCha8Rng::seed_from_u64(s)).unwrap();
        assert_ne!(o.in_sample, o.expected_reward);
        excess += o.in_sample - o.expected_reward;
    }
    eprintln!("mean in-sample excess {:.2} W", excess / trials as f64);
    assert!(excess > 0.0);
}

#[test]
fn me_twenty_scenarios_close_to_thirty() {
    // Fill a store from the simulator, then compare the true values of the
    // ME decisions built from N=20 and N=30 sample episodes.
    let sim = noisy_sim(7, 300.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = SampleStore::new(sim.action_counts(), sim.horizon()).unwrap();
    let k = sim.action_count();
    for rep in 0..30 {
        for j in 0..k {
            let a = ActionAssignment::new((0..sim.actors()).map(|i| (j + i * rep) % k).collect());
            let curves = sim.episode(&a, &mut rng).unwrap();
            store.record_outcome(&a, &curves).unwrap();
        }
    }
    let backend = Backend::Local(LocalSearchParams::default());
    let value = |n: usize, seed: u64| {
        let config = PolicyConfig { kind: PolicyKind::MultiEpisode, n_scenarios: n, ..PolicyConfig::default() };
        let d = mblab::policies::me_select(&store, &config, &backend, &mut ChaCha8Rng::seed_from_u64(seed), 1).unwrap();
        mblab::harness::estimate_expected_reward(&sim, &d.assignment, 400, &mut ChaCha8Rng::seed_from_u64(99)).unwrap()
    };
    let mut diffs = Vec::new();
    for seed in 0..8 {
        let (a, se_a) = value(20, seed);
        let (b, se_b) = value(30, seed);
        diffs.push(((a - b).abs(), 3.0 * (se_a * se_a + se_b * se_b).sqrt()));
    }
    eprintln!("N=20 vs N=30 |diff| vs 3 se: {diffs:?}");
    let within = diffs.iter().filter(|(d, tol)| d <= tol).count();
    assert!(within >= 6, "{diffs:?}");
}
