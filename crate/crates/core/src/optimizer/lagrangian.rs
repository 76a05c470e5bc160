//! Lagrangian (LP-dual) upper bounds for the max-min program.
//!
//! For weights `λ_t` in the probability simplex over slots, `min_h x_h <=
//! Σ_h λ_{t,h} x_h`, so `(1/N) Σ_i max_j Σ_{t,h} λ_{t,h} l_t(i,j,h)` bounds
//! the optimum from above. Multipliers are tuned by exponentiated subgradient
//! descent.

use crate::scenario::ScenarioTable;

const ITERATIONS: usize = 300;

/// Slot weights, one simplex row per scenario, flattened `t * H + h`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Multipliers {
    pub weights: Vec<f64>,
}

impl Multipliers {
    fn uniform(table: &ScenarioTable) -> Self {
        let h = table.horizon();
        Self { weights: vec![1.0 / h as f64; table.scenarios() * h] }
    }

    /// `Σ_{t,h} λ_{t,h} l_t(i,j,h)`.
    pub fn score(&self, table: &ScenarioTable, i: usize, j: usize) -> f64 {
        let h = table.horizon();
        (0..table.scenarios())
            .map(|t| {
                let w = &self.weights[t * h..(t + 1) * h];
                w.iter().zip(table.curve(t, i, j)).map(|(a, b)| a * b).sum::<f64>()
            })
            .sum()
    }

    /// Dual value and each actor's maximising action (lowest index on ties).
    fn evaluate(&self, table: &ScenarioTable) -> (f64, Vec<usize>) {
        let mut total = 0.0;
        let mut argmax = Vec::with_capacity(table.actors());
        for i in 0..table.actors() {
            let (best_j, best) = (0..table.action_counts()[i])
                .map(|j| (j, self.score(table, i, j)))
                .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
            total += best;
            argmax.push(best_j);
        }
        (total / table.scenarios() as f64, argmax)
    }
}

/// Best multipliers found and their dual value.
pub(crate) fn tune_multipliers(table: &ScenarioTable) -> (Multipliers, f64) {
    let horizon = table.horizon();
    let mut current = Multipliers::uniform(table);
    let (mut best_value, _) = current.evaluate(table);
    let mut best = current.clone();
    if horizon == 1 {
        return (best, best_value);
    }
    let mut grad = vec![0.0; current.weights.len()];
    for k in 0..ITERATIONS {
        let (value, argmax) = current.evaluate(table);
        if value < best_value {
            best_value = value;
            best = current.clone();
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        for t in 0..table.scenarios() {
            for (i, &j) in argmax.iter().enumerate() {
                for (g, v) in grad[t * horizon..(t + 1) * horizon].iter_mut().zip(table.curve(t, i, j)) {
                    *g += v;
                }
            }
        }
        let step = 2.0 / ((k + 1) as f64).sqrt();
        for t in 0..table.scenarios() {
            let row = t * horizon..(t + 1) * horizon;
            let g = &grad[row.clone()];
            let (lo, hi) = g.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            let spread = hi - lo;
            if spread <= 0.0 {
                continue;
            }
            let w = &mut current.weights[row];
            for (wh, gh) in w.iter_mut().zip(g) {
                *wh *= (-step * (gh - lo) / spread).exp();
            }
            let norm: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= norm);
        }
    }
    let (value, _) = current.evaluate(table);
    if value < best_value {
        best_value = value;
        best = current;
    }
    (best, best_value)
}

/// The tightest Lagrangian bound found by the multiplier search.
pub fn lagrangian_upper_bound(table: &ScenarioTable) -> f64 {
    tune_multipliers(table).1
}
