//! The max-min assignment program over a [`ScenarioTable`].
//!
//! maximize `(1/N) Σ_t M_t` subject to `Σ_i Σ_j l_t(i,j,h)·b_ij >= M_t` for
//! every `(t, h)`, `Σ_j b_ij = 1` for every actor, `b_ij ∈ {0,1}`.
//!
//! The program is NP-hard in general (it contains SAT for `N = 1, k = 2` with
//! 0/1 loads), so three explicit backends are offered: exhaustive search with
//! pruning, randomized local search, and an external MILP solver fed through
//! LP files.

mod exact;
mod lagrangian;
mod local;
mod lp;

pub use exact::solve_exact;
pub use lagrangian::lagrangian_upper_bound;
pub use local::{solve_local_search, LocalSearchParams};
pub use lp::{export_lp, import_solution, AssignmentModel, ExternalSolver};

use std::fmt;
use std::time::Duration;

use rand::Rng;

use crate::curve::ActionAssignment;
use crate::error::{Error, Result};
use crate::scenario::ScenarioTable;

/// Guard for the relative gap denominator.
pub const GAP_EPS: f64 = 1e-9;

/// Default cap on assignment evaluations for the exact backend.
pub const DEFAULT_ENUMERATION_LIMIT: u64 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Exact,
    Local,
    External,
}

impl BackendKind {
    pub fn name(self) -> &'static str {
        match self {
            BackendKind::Exact => "exact",
            BackendKind::Local => "local",
            BackendKind::External => "external",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub assignment: ActionAssignment,
    /// Average reward of `assignment` over the table's scenarios.
    pub value: f64,
    pub upper_bound: f64,
    /// `(upper_bound - value) / max(|upper_bound|, GAP_EPS)`.
    pub gap: f64,
    pub backend: BackendKind,
    pub wall_time: Duration,
    /// Exact: assignment evaluations (search nodes). Local: applied moves.
    /// External: 0.
    pub work: u64,
}

impl SolveReport {
    pub(crate) fn new(
        assignment: ActionAssignment,
        value: f64,
        upper_bound: f64,
        backend: BackendKind,
        wall_time: Duration,
        work: u64,
    ) -> Self {
        let upper_bound = upper_bound.max(value);
        Self {
            assignment,
            value,
            upper_bound,
            gap: relative_gap(value, upper_bound),
            backend,
            wall_time,
            work,
        }
    }
}

pub fn relative_gap(value: f64, upper_bound: f64) -> f64 {
    ((upper_bound - value) / upper_bound.abs().max(GAP_EPS)).max(0.0)
}

/// `(1/N) Σ_t min_h Σ_i l_t(i, a^i, h)`.
pub fn objective_value(table: &ScenarioTable, assignment: &ActionAssignment) -> Result<f64> {
    table.check_assignment(assignment)?;
    let mut total = 0.0;
    let mut sums = vec![0.0; table.horizon()];
    for t in 0..table.scenarios() {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for (i, &j) in assignment.actions().iter().enumerate() {
            for (s, v) in sums.iter_mut().zip(table.curve(t, i, j)) {
                *s += v;
            }
        }
        total += sums.iter().copied().fold(f64::INFINITY, f64::min);
    }
    Ok(total / table.scenarios() as f64)
}

/// Relaxation that lets every actor pick its best action per `(t, h)`:
/// `(1/N) Σ_t min_h Σ_i max_j l_t(i, j, h)`.
pub fn decoupled_upper_bound(table: &ScenarioTable) -> f64 {
    let mut total = 0.0;
    for t in 0..table.scenarios() {
        let slot_min = (0..table.horizon())
            .map(|h| {
                (0..table.actors())
                    .map(|i| {
                        (0..table.action_counts()[i])
                            .map(|j| table.get(t, i, j, h))
                            .fold(f64::NEG_INFINITY, f64::max)
                    })
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        total += slot_min;
    }
    total / table.scenarios() as f64
}

/// Solver selection; never chosen automatically.
#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    Exact { enumeration_limit: u64 },
    Local(LocalSearchParams),
    External(ExternalSolver),
}

impl Backend {
    pub fn kind(&self) -> BackendKind {
        match self {
            Backend::Exact { .. } => BackendKind::Exact,
            Backend::Local(_) => BackendKind::Local,
            Backend::External(_) => BackendKind::External,
        }
    }

    /// Deterministic backends ignore `rng`.
    pub fn solve<R: Rng + ?Sized>(&self, table: &ScenarioTable, rng: &mut R) -> Result<SolveReport> {
        match self {
            Backend::Exact { enumeration_limit } => solve_exact(table, *enumeration_limit),
            Backend::Local(params) => Ok(solve_local_search(table, params, rng)),
            Backend::External(ext) => ext.solve(table),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        !matches!(self, Backend::Local(_))
    }
}

impl Default for Backend {
    fn default() -> Self {
        Backend::Exact { enumeration_limit: DEFAULT_ENUMERATION_LIMIT }
    }
}

fn check_table(table: &ScenarioTable) -> Result<()> {
    if table.actors() == 0 {
        return Err(Error::Dimension("table without actors".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The four-assignment example: candidates score 3, 1, 1, 2.
    pub(crate) fn four_assignment_table() -> ScenarioTable {
        let data = [[[3.0, 0.0], [1.0, 1.0]], [[0.0, 3.0], [1.0, 1.0]]];
        ScenarioTable::from_fn(1, vec![2, 2], 2, |_, i, j, h| data[i][j][h]).unwrap()
    }

    #[test]
    fn objective_examples() {
        let t = ScenarioTable::from_fn(1, vec![1], 2, |_, _, _, h| [5.0, 7.0][h]).unwrap();
        assert_eq!(objective_value(&t, &ActionAssignment::new(vec![0])).unwrap(), 5.0);
        let z = ScenarioTable::uniform(3, 4, 2, 5).unwrap();
        assert_eq!(objective_value(&z, &ActionAssignment::new(vec![1, 0, 1, 1])).unwrap(), 0.0);
        let two = ScenarioTable::from_fn(2, vec![1], 1, |t, _, _, _| [3.0, 1.0][t]).unwrap();
        assert_eq!(objective_value(&two, &ActionAssignment::new(vec![0])).unwrap(), 2.0);
    }

    #[test]
    fn objective_rejects_bad_assignment() {
        let t = four_assignment_table();
        assert!(objective_value(&t, &ActionAssignment::new(vec![0])).is_err());
        assert!(objective_value(&t, &ActionAssignment::new(vec![0, 2])).is_err());
    }

    #[test]
    fn four_assignment_scores() {
        let t = four_assignment_table();
        let score = |a: Vec<usize>| objective_value(&t, &ActionAssignment::new(a)).unwrap();
        assert_eq!(score(vec![0, 0]), 3.0);
        assert_eq!(score(vec![0, 1]), 1.0);
        assert_eq!(score(vec![1, 0]), 1.0);
        assert_eq!(score(vec![1, 1]), 2.0);
    }

    #[test]
    fn decoupled_bound_examples() {
        let t = four_assignment_table();
        assert_eq!(decoupled_upper_bound(&t), 4.0);

        let single = ScenarioTable::from_fn(2, vec![1, 1], 3, |t, i, _, h| (t * 7 + i * 3 + h) as f64 % 5.0).unwrap();
        let a = ActionAssignment::new(vec![0, 0]);
        assert_eq!(decoupled_upper_bound(&single), objective_value(&single, &a).unwrap());

        // A dominated extra action leaves the bound unchanged.
        let dominated = ScenarioTable::from_fn(1, vec![3, 2], 2, |_, i, j, h| {
            if i == 0 && j == 2 {
                [2.0, 0.0][h]
            } else {
                [[[3.0, 0.0], [1.0, 1.0]], [[0.0, 3.0], [1.0, 1.0]]][i][j][h]
            }
        })
        .unwrap();
        assert_eq!(decoupled_upper_bound(&dominated), 4.0);
    }

    #[test]
    fn gap_is_guarded() {
        assert_eq!(relative_gap(0.0, 0.0), 0.0);
        assert_eq!(relative_gap(3.0, 4.0), 0.25);
        assert!(relative_gap(-1.0, 0.0) > 1e6);
    }
}
