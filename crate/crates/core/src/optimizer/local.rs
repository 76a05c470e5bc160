//! Randomized greedy construction followed by best-improvement descent.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;

use super::{decoupled_upper_bound, lagrangian_upper_bound, objective_value, BackendKind, SolveReport};
use crate::curve::ActionAssignment;
use crate::scenario::ScenarioTable;

#[derive(Debug, Clone, PartialEq)]
pub struct LocalSearchParams {
    pub restarts: usize,
    /// Applied improving moves per restart.
    pub move_budget: u64,
    /// Optional wall-clock limit for the whole solve; off by default so runs
    /// stay deterministic.
    pub time_budget: Option<Duration>,
}

impl Default for LocalSearchParams {
    fn default() -> Self {
        Self { restarts: 5, move_budget: 10_000, time_budget: None }
    }
}

/// Running per-(t, h) slot totals of a (partial) assignment.
struct SlotSums<'a> {
    table: &'a ScenarioTable,
    sums: Vec<f64>,
}

impl<'a> SlotSums<'a> {
    fn empty(table: &'a ScenarioTable) -> Self {
        Self { table, sums: vec![0.0; table.scenarios() * table.horizon()] }
    }

    fn of(table: &'a ScenarioTable, assignment: &ActionAssignment) -> Self {
        let mut s = Self::empty(table);
        for (i, &j) in assignment.actions().iter().enumerate() {
            s.add(i, j, 1.0);
        }
        s
    }

    fn add(&mut self, i: usize, j: usize, sign: f64) {
        let h = self.table.horizon();
        for t in 0..self.table.scenarios() {
            for (s, v) in self.sums[t * h..(t + 1) * h].iter_mut().zip(self.table.curve(t, i, j)) {
                *s += sign * v;
            }
        }
    }

    /// Objective if actor `i` contributed `add` instead of `remove` (either optional).
    fn value_with(&self, i: usize, remove: Option<usize>, add: Option<usize>) -> f64 {
        let h = self.table.horizon();
        let mut total = 0.0;
        for t in 0..self.table.scenarios() {
            let base = &self.sums[t * h..(t + 1) * h];
            let out = remove.map(|j| self.table.curve(t, i, j));
            let inn = add.map(|j| self.table.curve(t, i, j));
            let mut m = f64::INFINITY;
            for slot in 0..h {
                let mut s = base[slot];
                if let Some(o) = out {
                    s -= o[slot];
                }
                if let Some(n) = inn {
                    s += n[slot];
                }
                m = m.min(s);
            }
            total += m;
        }
        total / self.table.scenarios() as f64
    }

    fn value(&self) -> f64 {
        self.value_with(0, None, None)
    }
}

/// Greedy construction in `order` (unassigned actors contribute zero), then
/// best-improvement single-actor moves until a local optimum, the move budget
/// or the deadline. Returns the assignment and the number of applied moves.
///
/// `seed_action`, when given, is used for the first actor in `order` instead
/// of its greedy choice.
pub(crate) fn greedy_descent(
    table: &ScenarioTable,
    order: &[usize],
    seed_action: Option<usize>,
    move_budget: u64,
    deadline: Option<Instant>,
) -> (ActionAssignment, u64) {
    let n = table.actors();
    let mut sums = SlotSums::empty(table);
    let mut assignment = ActionAssignment::new(vec![0; n]);
    for (pos, &i) in order.iter().enumerate() {
        if let (0, Some(j)) = (pos, seed_action) {
            assignment.set(i, j);
            sums.add(i, j, 1.0);
            continue;
        }
        let mut best = (0, f64::NEG_INFINITY);
        for j in 0..table.action_counts()[i] {
            let v = sums.value_with(i, None, Some(j));
            if v > best.1 {
                best = (j, v);
            }
        }
        assignment.set(i, best.0);
        sums.add(i, best.0, 1.0);
    }

    let mut moves = 0;
    let mut current = sums.value();
    while moves < move_budget && deadline.is_none_or(|d| Instant::now() < d) {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            let cur = assignment.get(i);
            for j in 0..table.action_counts()[i] {
                if j == cur {
                    continue;
                }
                let v = sums.value_with(i, Some(cur), Some(j));
                if v > best.map_or(current, |b| b.2) {
                    best = Some((i, j, v));
                }
            }
        }
        let Some((i, j, _)) = best else { break };
        let previous = assignment.get(i);
        assignment.set(i, j);
        // Rebuild from scratch so rounding does not accumulate over moves; a
        // move that only looked better through rounding ends the descent.
        let rebuilt = SlotSums::of(table, &assignment);
        let value = rebuilt.value();
        if value <= current {
            assignment.set(i, previous);
            break;
        }
        sums = rebuilt;
        current = value;
        moves += 1;
    }
    (assignment, moves)
}

/// Best of `params.restarts` randomized greedy-plus-descent runs.
///
/// Each restart shuffles the actor order and gives the first actor a uniformly
/// random action; the rest of the construction is greedy. Without the random
/// first pick the construction is blind to actions that only pay off jointly.
///
/// Restarts are compared by value, then lexicographically by assignment.
/// The upper bound is the tighter of the decoupled and Lagrangian bounds.
pub fn solve_local_search<R: Rng + ?Sized>(
    table: &ScenarioTable,
    params: &LocalSearchParams,
    rng: &mut R,
) -> SolveReport {
    let started = Instant::now();
    let deadline = params.time_budget.map(|d| started + d);
    let mut best: Option<(ActionAssignment, f64)> = None;
    let mut total_moves = 0;
    let mut order: Vec<usize> = (0..table.actors()).collect();
    for _ in 0..params.restarts.max(1) {
        order.shuffle(rng);
        let first = rng.random_range(0..table.action_counts()[order[0]]);
        let (a, moves) = greedy_descent(table, &order, Some(first), params.move_budget, deadline);
        total_moves += moves;
        let v = objective_value(table, &a).expect("valid assignment");
        let better = match &best {
            None => true,
            Some((ba, bv)) => v > *bv || (v == *bv && a < *ba),
        };
        if better {
            best = Some((a, v));
        }
        if deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
    }
    let (assignment, value) = best.expect("at least one restart");
    let bound = decoupled_upper_bound(table).min(lagrangian_upper_bound(table));
    SolveReport::new(assignment, value, bound, BackendKind::Local, started.elapsed(), total_moves)
}
