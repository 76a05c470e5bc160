//! Exact maximisation by depth-first branch and bound over actors.
//!
//! The search runs twice. The first pass only looks for strictly better
//! values and finds the optimum; the second walks assignments in
//! lexicographic order and stops at the first one reaching it.
//!
//! Two bounds cut subtrees and filter the actions still worth trying. The
//! slot bound repeats the objective's floating point operations (actors
//! summed in index order) with every unassigned actor replaced by its
//! per-(t, h) maximum; rounding is monotone, so it bounds every leaf value in
//! the subtree rigorously, ties included. The Lagrangian bound is re-tuned at
//! every node with a few Polyak steps warm-started from the parent's
//! multipliers; it only cuts subtrees that are strictly worse by a margin
//! covering its rounding error.
//!
//! The result is identical to a full enumeration: the maximum value, and the
//! lexicographically smallest assignment among ties.

use std::cmp::Ordering;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::lagrangian::tune_multipliers;
use super::local::{greedy_descent, solve_local_search, LocalSearchParams};
use super::{check_table, objective_value, BackendKind, SolveReport};
use crate::curve::ActionAssignment;
use crate::error::{Error, Result};
use crate::scenario::ScenarioTable;

/// Polyak iterations per node near the root and deeper down.
const SHALLOW_STEPS: usize = 12;
const DEEP_STEPS: usize = 4;

/// Globally optimal assignment of `table`.
///
/// When `Π k^i <= enumeration_limit` the search always completes. Otherwise
/// it runs until it has visited `enumeration_limit` search nodes and then
/// refuses with [`Error::Size`]; there is no silent fallback.
pub fn solve_exact(table: &ScenarioTable, enumeration_limit: u64) -> Result<SolveReport> {
    check_table(table)?;
    let started = Instant::now();
    let mut search = Search::new(table, enumeration_limit);
    search.visit(0)?;
    search.target = Some(search.best);
    search.visit(0)?;
    debug_assert!(search.found);
    let (assignment, value) = (ActionAssignment::new(search.incumbent.clone()), search.best);
    debug_assert_eq!(objective_value(table, &assignment).ok(), Some(value));
    Ok(SolveReport::new(assignment, value, value, BackendKind::Exact, started.elapsed(), search.nodes))
}

struct Search<'a> {
    table: &'a ScenarioTable,
    n: usize,
    /// `N * H`; every per-slot vector below is laid out `t * H + h`.
    width: usize,
    limit: Option<u64>,
    nodes: u64,
    /// Flattened curves: actor `i`, action `j` starts at `(offset[i] + j) * width`.
    curves: Vec<f64>,
    offset: Vec<usize>,
    counts: Vec<usize>,
    /// Static tie-break for choosing the branching actor.
    rank: Vec<usize>,
    /// `assigned[i]` is the action of actor `i` on the current path.
    assigned: Vec<Option<usize>>,
    /// Live actions per depth, flattened like `curves` (one flag per action).
    domains: Vec<Vec<bool>>,
    /// Slot totals of the assigned actors, per depth.
    totals: Vec<Vec<f64>>,
    /// Multipliers handed down to each depth.
    lambda: Vec<Vec<f64>>,
    /// Per-actor maxima over the live actions, `n * width`.
    maxima: Vec<f64>,
    grad: Vec<f64>,
    scratch: Vec<f64>,
    argmax: Vec<usize>,
    top: Vec<f64>,
    /// Runner-up dual score per unassigned actor.
    second: Vec<f64>,
    margin: f64,
    incumbent: Vec<usize>,
    /// Value of the incumbent.
    best: f64,
    /// `None` while improving the value; in the second phase, the optimum
    /// whose lexicographically first assignment is sought.
    target: Option<f64>,
    found: bool,
}

impl<'a> Search<'a> {
    fn new(table: &'a ScenarioTable, enumeration_limit: u64) -> Self {
        let n = table.actors();
        let horizon = table.horizon();
        let scenarios = table.scenarios();
        let width = scenarios * horizon;
        let counts = table.action_counts().to_vec();

        let mut offset = Vec::with_capacity(n);
        let mut curves = Vec::new();
        for (i, &k) in counts.iter().enumerate() {
            offset.push(curves.len() / width);
            for j in 0..k {
                for t in 0..scenarios {
                    curves.extend_from_slice(table.curve(t, i, j));
                }
            }
        }
        let total_actions = curves.len() / width;
        let magnitude: f64 = (0..n)
            .map(|i| curves[offset[i] * width..(offset[i] + counts[i]) * width].iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .sum();
        let margin = 1e-9 * (1.0 + magnitude);

        // Actors whose choice moves the root dual the most rank first.
        let (root, _) = tune_multipliers(table);
        let spread: Vec<f64> = (0..n)
            .map(|i| {
                let s: Vec<f64> = (0..counts[i]).map(|j| root.score(table, i, j)).collect();
                let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
                hi - lo
            })
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| spread[b].partial_cmp(&spread[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
        let mut rank = vec![0; n];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }

        let natural: Vec<usize> = (0..n).collect();
        let (greedy, _) = greedy_descent(table, &natural, None, u64::MAX, None);
        let params = LocalSearchParams { restarts: 8, ..LocalSearchParams::default() };
        let local = solve_local_search(table, &params, &mut ChaCha8Rng::seed_from_u64(0x5eed)).assignment;
        let gv = objective_value(table, &greedy).expect("valid assignment");
        let lv = objective_value(table, &local).expect("valid assignment");
        let (incumbent, best) = if lv > gv || (lv == gv && local < greedy) { (local, lv) } else { (greedy, gv) };

        let limit = (table.assignment_space() > enumeration_limit).then_some(enumeration_limit);
        let mut lambda = vec![vec![0.0; width]; n + 1];
        lambda[0].clone_from(&root.weights);
        let mut domains = vec![vec![false; total_actions]; n + 1];
        domains[0].iter_mut().for_each(|x| *x = true);
        Self {
            table,
            n,
            width,
            limit,
            nodes: 0,
            curves,
            offset,
            counts,
            rank,
            assigned: vec![None; n],
            domains,
            totals: vec![vec![0.0; width]; n + 1],
            lambda,
            maxima: vec![0.0; n * width],
            grad: vec![0.0; width],
            scratch: vec![0.0; width],
            argmax: vec![0; n],
            top: vec![0.0; n],
            second: vec![0.0; n],
            margin,
            incumbent: incumbent.actions().to_vec(),
            best,
            target: None,
            found: false,
        }
    }

    fn curve(&self, i: usize, j: usize) -> &[f64] {
        &self.curves[(self.offset[i] + j) * self.width..][..self.width]
    }

    fn live(&self, d: usize, i: usize) -> impl Iterator<Item = usize> + '_ {
        let dom = &self.domains[d][self.offset[i]..self.offset[i] + self.counts[i]];
        dom.iter().enumerate().filter(|(_, &x)| x).map(|(j, _)| j)
    }

    /// Refreshes `maxima` for the unassigned actors; false if a domain is empty.
    fn refresh_maxima(&mut self, d: usize) -> bool {
        let w = self.width;
        for i in 0..self.n {
            if self.assigned[i].is_some() {
                continue;
            }
            let mut m = std::mem::take(&mut self.maxima);
            let row = &mut m[i * w..(i + 1) * w];
            row.iter_mut().for_each(|x| *x = f64::NEG_INFINITY);
            let mut any = false;
            for j in self.live(d, i) {
                any = true;
                row.iter_mut().zip(self.curve(i, j)).for_each(|(a, b)| *a = a.max(*b));
            }
            self.maxima = m;
            if !any {
                return false;
            }
        }
        true
    }

    /// Mirrors `objective_value`: actors summed in index order from zero,
    /// unassigned actors replaced by their per-slot maxima.
    fn slot_value(&self) -> f64 {
        let horizon = self.table.horizon();
        let w = self.width;
        let mut total = 0.0;
        for t in 0..self.table.scenarios() {
            let mut m = f64::INFINITY;
            for h in 0..horizon {
                let k = t * horizon + h;
                let mut s = 0.0;
                for i in 0..self.n {
                    s += match self.assigned[i] {
                        Some(j) => self.curve(i, j)[k],
                        None => self.maxima[i * w + k],
                    };
                }
                m = m.min(s);
            }
            total += m;
        }
        total / self.table.scenarios() as f64
    }

    /// Value a subtree must reach to matter; pruning tests use `<= threshold`
    /// for bounds that carry the rounding margin.
    fn threshold(&self) -> f64 {
        self.target.unwrap_or(self.best)
    }

    /// Whether the rigorous slot bound rules the subtree out.
    fn slot_prunes(&self, bound: f64) -> bool {
        match self.target {
            None => bound <= self.best,
            Some(target) => bound < target,
        }
    }

    fn offer_leaf(&mut self) {
        let value = self.slot_value();
        let accept = match self.target {
            None => value > self.best,
            Some(target) => value == target,
        };
        if accept {
            self.best = value;
            self.incumbent = self.assigned.iter().map(|a| a.expect("complete")).collect();
            self.found = self.target.is_some();
        }
    }

    /// Removes live actions that cannot reach the threshold even with
    /// every other unassigned actor at its slot maxima. Returns whether
    /// anything was removed.
    fn filter_by_slots(&mut self, d: usize) -> bool {
        let w = self.width;
        let horizon = self.table.horizon();
        let scale = self.table.scenarios() as f64;
        let mut optimistic = self.totals[d].clone();
        for i in 0..self.n {
            if self.assigned[i].is_none() {
                optimistic.iter_mut().zip(&self.maxima[i * w..(i + 1) * w]).for_each(|(s, m)| *s += m);
            }
        }
        let mut changed = false;
        for i in 0..self.n {
            if self.assigned[i].is_some() {
                continue;
            }
            for j in 0..self.counts[i] {
                if !self.domains[d][self.offset[i] + j] {
                    continue;
                }
                let c = self.curve(i, j);
                let mx = &self.maxima[i * w..(i + 1) * w];
                let mut bound = 0.0;
                for t in 0..self.table.scenarios() {
                    let mut m = f64::INFINITY;
                    for h in t * horizon..(t + 1) * horizon {
                        m = m.min(optimistic[h] - mx[h] + c[h]);
                    }
                    bound += m;
                }
                if bound / scale + self.margin <= self.threshold() {
                    self.domains[d][self.offset[i] + j] = false;
                    changed = true;
                }
            }
        }
        changed
    }

    /// Dual value at depth `d` for the multipliers in `lam`; fills `grad`,
    /// `argmax` and `top` for the unassigned actors.
    fn dual(&mut self, d: usize, lam: &[f64]) -> f64 {
        let w = self.width;
        let mut value: f64 = lam.iter().zip(&self.totals[d]).map(|(a, b)| a * b).sum();
        self.grad.copy_from_slice(&self.totals[d]);
        for i in 0..self.n {
            if self.assigned[i].is_some() {
                continue;
            }
            let base = self.offset[i];
            let mut best = (0, f64::NEG_INFINITY);
            let mut runner_up = f64::NEG_INFINITY;
            for j in 0..self.counts[i] {
                if !self.domains[d][base + j] {
                    continue;
                }
                let c = &self.curves[(base + j) * w..][..w];
                let s: f64 = lam.iter().zip(c).map(|(a, b)| a * b).sum();
                if s > best.1 {
                    runner_up = best.1;
                    best = (j, s);
                } else if s > runner_up {
                    runner_up = s;
                }
            }
            self.argmax[i] = best.0;
            self.top[i] = best.1;
            self.second[i] = runner_up;
            value += best.1;
            let c = &self.curves[(base + best.0) * w..][..w];
            self.grad.iter_mut().zip(c).for_each(|(g, v)| *g += v);
        }
        value / self.table.scenarios() as f64
    }

    /// Offers the dual's argmax completion of the current path as a leaf.
    fn try_completion(&mut self) {
        let free: Vec<usize> = (0..self.n).filter(|&i| self.assigned[i].is_none()).collect();
        for &i in &free {
            self.assigned[i] = Some(self.argmax[i]);
        }
        self.offer_leaf();
        for &i in &free {
            self.assigned[i] = None;
        }
    }

    /// Tunes the multipliers of depth `d` in place; returns the best dual
    /// value seen, with `lambda[d]`, `top` describing it.
    fn tighten(&mut self, d: usize, steps: usize) -> f64 {
        let horizon = self.table.horizon();
        let scenarios = self.table.scenarios();
        let mut lam = std::mem::take(&mut self.lambda[d]);
        let mut best_lam = lam.clone();
        let mut best = self.dual(d, &lam);
        let improving = self.target.is_none();
        if improving {
            self.try_completion();
        }
        let mut current = best;
        let mut theta = 1.0;
        let mut stale = 0;
        for _ in 0..steps {
            if best + self.margin <= self.threshold() || horizon == 1 {
                break;
            }
            // Projected subgradient: centre each scenario row, Polyak step.
            let mut norm = 0.0;
            for t in 0..scenarios {
                let row = &mut self.grad[t * horizon..(t + 1) * horizon];
                let mean = row.iter().sum::<f64>() / horizon as f64;
                row.iter_mut().for_each(|g| *g -= mean);
                norm += row.iter().map(|g| g * g).sum::<f64>();
            }
            let step = theta * (current - self.threshold()).max(0.0) * scenarios as f64 / norm;
            if !(step > 0.0 && step.is_finite()) {
                break;
            }
            for t in 0..scenarios {
                let row = t * horizon..(t + 1) * horizon;
                for (l, g) in lam[row.clone()].iter_mut().zip(&self.grad[row.clone()]) {
                    *l -= step * g;
                }
                project_simplex(&mut lam[row], &mut self.scratch[..horizon]);
            }
            current = self.dual(d, &lam);
            if improving {
                self.try_completion();
            }
            if current < best {
                best = current;
                best_lam.copy_from_slice(&lam);
                stale = 0;
            } else {
                stale += 1;
                if stale >= 2 {
                    theta *= 0.5;
                    stale = 0;
                }
            }
        }
        // Leave `top` consistent with the returned value.
        let value = self.dual(d, &best_lam);
        self.lambda[d] = best_lam;
        value
    }

    /// Removes live actions whose reduced Lagrangian bound is strictly below
    /// the threshold, given the dual `value` of `lambda[d]`.
    fn filter_by_dual(&mut self, d: usize, value: f64) -> bool {
        let w = self.width;
        let scale = self.table.scenarios() as f64;
        let lam = &self.lambda[d];
        let threshold = self.threshold();
        let mut changed = false;
        for i in 0..self.n {
            if self.assigned[i].is_some() {
                continue;
            }
            let base = self.offset[i];
            for j in 0..self.counts[i] {
                if !self.domains[d][base + j] {
                    continue;
                }
                let c = &self.curves[(base + j) * w..][..w];
                let s: f64 = lam.iter().zip(c).map(|(a, b)| a * b).sum();
                if value + (s - self.top[i]) / scale + self.margin <= threshold {
                    self.domains[d][base + j] = false;
                    changed = true;
                }
            }
        }
        changed
    }

    fn visit(&mut self, d: usize) -> Result<()> {
        self.nodes += 1;
        if let Some(limit) = self.limit {
            if self.nodes > limit {
                return Err(Error::Size { what: "exact assignment search".into(), limit });
            }
        }
        if d == self.n {
            self.offer_leaf();
            return Ok(());
        }
        let lexicographic = self.target.is_some();
        let steps = if d * 2 < self.n { SHALLOW_STEPS } else { DEEP_STEPS };
        let mut dual;
        loop {
            if !self.refresh_maxima(d) {
                return Ok(());
            }
            if self.slot_prunes(self.slot_value()) {
                return Ok(());
            }
            if self.filter_by_slots(d) {
                continue;
            }
            dual = self.tighten(d, steps);
            if dual + self.margin <= self.threshold() {
                return Ok(());
            }
            if !self.filter_by_dual(d, dual) {
                break;
            }
        }

        // The value phase branches on a forced actor if there is one, else on
        // the actor whose two best dual scores are closest; the lexicographic
        // phase goes in index order.
        let actor = if lexicographic {
            d
        } else {
            let free = (0..self.n).filter(|&i| self.assigned[i].is_none());
            free.min_by(|&a, &b| {
                let key = |i: usize| (self.live(d, i).count() > 1, self.top[i] - self.second[i]);
                let (ka, kb) = (key(a), key(b));
                ka.0.cmp(&kb.0)
                    .then(ka.1.partial_cmp(&kb.1).unwrap_or(Ordering::Equal))
                    .then(self.rank[a].cmp(&self.rank[b]))
            })
            .expect("unassigned actor")
        };
        let scale = self.table.scenarios() as f64;
        let lam = self.lambda[d].clone();
        let top = self.top[actor];
        let mut children: Vec<(usize, f64)> = self
            .live(d, actor)
            .map(|j| (j, lam.iter().zip(self.curve(actor, j)).map(|(a, b)| a * b).sum::<f64>()))
            .collect();
        if !lexicographic {
            children.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
        }

        for (j, score) in children {
            if dual + (score - top) / scale + self.margin <= self.threshold() {
                continue;
            }
            self.assigned[actor] = Some(j);
            let (head, tail) = self.totals.split_at_mut(d + 1);
            let c = &self.curves[(self.offset[actor] + j) * self.width..][..self.width];
            for ((o, p), v) in tail[0].iter_mut().zip(&head[d]).zip(c) {
                *o = p + v;
            }
            let (head, tail) = self.domains.split_at_mut(d + 1);
            tail[0].copy_from_slice(&head[d]);
            let base = self.offset[actor];
            tail[0][base..base + self.counts[actor]].iter_mut().enumerate().for_each(|(k, x)| *x = k == j);
            self.lambda[d + 1].clone_from(&lam);
            self.visit(d + 1)?;
            if self.found {
                break;
            }
        }
        self.assigned[actor] = None;
        Ok(())
    }
}

/// Euclidean projection of `v` onto the probability simplex.
fn project_simplex(v: &mut [f64], scratch: &mut [f64]) {
    scratch.copy_from_slice(v);
    scratch.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, &u) in scratch.iter().enumerate() {
        cum += u;
        let t = (cum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            tau = t;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - tau).max(0.0));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::decoupled_upper_bound;
    use crate::optimizer::tests::four_assignment_table;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(table: &ScenarioTable) -> (ActionAssignment, f64) {
        let counts = table.action_counts().to_vec();
        let mut a = vec![0; counts.len()];
        let mut best: Option<(Vec<usize>, f64)> = None;
        loop {
            let v = objective_value(table, &ActionAssignment::new(a.clone())).unwrap();
            if best.as_ref().is_none_or(|b| v > b.1) {
                best = Some((a.clone(), v));
            }
            let mut i = counts.len();
            loop {
                if i == 0 {
                    let (a, v) = best.unwrap();
                    return (ActionAssignment::new(a), v);
                }
                i -= 1;
                a[i] += 1;
                if a[i] < counts[i] {
                    break;
                }
                a[i] = 0;
            }
        }
    }

    #[test]
    fn four_assignment_example() {
        let r = solve_exact(&four_assignment_table(), 100).unwrap();
        assert_eq!(r.assignment, ActionAssignment::new(vec![0, 0]));
        assert_eq!(r.value, 3.0);
        assert_eq!(r.gap, 0.0);
    }

    #[test]
    fn single_action_per_actor() {
        let t = ScenarioTable::from_fn(2, vec![1; 3], 2, |t, i, _, h| (t + i * h) as f64).unwrap();
        let r = solve_exact(&t, 1).unwrap();
        assert_eq!(r.value, objective_value(&t, &ActionAssignment::new(vec![0; 3])).unwrap());
    }

    #[test]
    fn duplicated_scenario_keeps_argmax() {
        let one = four_assignment_table();
        let mut two = one.clone();
        two.extend(&one).unwrap();
        assert_eq!(solve_exact(&one, 100).unwrap().assignment, solve_exact(&two, 100).unwrap().assignment);
    }

    #[test]
    fn flat_table_returns_lexicographically_smallest() {
        let t = ScenarioTable::from_fn(1, vec![20; 20], 8, |_, _, _, _| 2000.0).unwrap();
        let r = solve_exact(&t, 1000).unwrap();
        assert_eq!(r.assignment, ActionAssignment::new(vec![0; 20]));
        assert!(r.work <= 1000);
    }

    #[test]
    fn ties_resolve_lexicographically() {
        // Actor 0's actions 1 and 2 are identical and dominate action 0.
        let t = ScenarioTable::from_fn(1, vec![3, 2], 2, |_, i, j, h| match (i, j) {
            (0, 0) => 0.0,
            (0, _) => [2.0, 1.0][h],
            (1, 0) => [0.0, 1.0][h],
            _ => [0.0, 0.0][h],
        })
        .unwrap();
        let r = solve_exact(&t, 100).unwrap();
        assert_eq!(r.assignment, ActionAssignment::new(vec![1, 0]));
    }

    #[test]
    fn refuses_when_limit_exceeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = ScenarioTable::from_fn(1, vec![6; 10], 6, |_, _, _, _| rng.random_range(0.0..100.0)).unwrap();
        match solve_exact(&t, 50) {
            Err(Error::Size { limit, .. }) => assert_eq!(limit, 50),
            other => panic!("expected size error, got {other:?}"),
        }
    }

    #[test]
    fn matches_brute_force_on_random_tables() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for case in 0..150 {
            let n = rng.random_range(1..6);
            let k = rng.random_range(1..5);
            let big_n = rng.random_range(1..4);
            let h = rng.random_range(1..6);
            let integral = case % 2 == 0;
            let t = ScenarioTable::from_fn(big_n, vec![k; n], h, |_, _, _, _| {
                if integral {
                    rng.random_range(-2..4) as f64
                } else {
                    rng.random_range(-100.0..300.0)
                }
            })
            .unwrap();
            let (a, v) = brute_force(&t);
            let r = solve_exact(&t, u64::MAX).unwrap();
            assert_eq!(r.assignment, a, "case {case}");
            assert_eq!(r.value, v);
            assert!(r.value <= decoupled_upper_bound(&t) + 1e-9);
        }
    }

    #[test]
    fn matches_brute_force_with_many_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for case in 0..120 {
            let n = rng.random_range(2..8);
            let k = rng.random_range(2..5);
            let big_n = rng.random_range(1..3);
            let h = rng.random_range(1..5);
            let t = ScenarioTable::from_fn(big_n, vec![k; n], h, |_, _, _, _| rng.random_range(0..3) as f64 * 0.1).unwrap();
            let (a, v) = brute_force(&t);
            let r = solve_exact(&t, u64::MAX).unwrap();
            assert_eq!((r.assignment, r.value), (a, v), "case {case}");
        }
    }

    #[test]
    fn scaling_preserves_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..30 {
            let t = ScenarioTable::from_fn(2, vec![3; 4], 3, |_, _, _, _| rng.random_range(-10.0..50.0)).unwrap();
            let c = rng.random_range(0.1..10.0);
            let a = solve_exact(&t, u64::MAX).unwrap();
            let b = solve_exact(&t.scaled(c), u64::MAX).unwrap();
            assert_eq!(a.assignment, b.assignment);
            assert!((b.value - c * a.value).abs() <= 1e-9 * (1.0 + b.value.abs()));
            let ub = decoupled_upper_bound(&t.scaled(c));
            assert!((ub - c * decoupled_upper_bound(&t)).abs() <= 1e-9 * (1.0 + ub.abs()));
        }
    }
}
