//! Load reduction curves, action assignments and the max-min reward.

use std::fmt;
use std::ops::Index;

use crate::error::{Error, Result};

/// Per-slot load reduction in watts over the target interval.
///
/// Entries may be negative: shifting a load block into the target interval
/// increases consumption there.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadCurve(Vec<f64>);

impl LoadCurve {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Argument("load curve must have at least one slot".into()));
        }
        if let Some(h) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("load curve entry {h} is not finite")));
        }
        Ok(Self(values))
    }

    /// A curve with the same value in every slot.
    pub fn constant(horizon: usize, value: f64) -> Self {
        assert!(horizon >= 1 && value.is_finite());
        Self(vec![value; horizon])
    }

    pub fn zeros(horizon: usize) -> Self {
        Self::constant(horizon, 0.0)
    }

    pub fn horizon(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    /// Adds `other` slot by slot.
    pub fn add_assign(&mut self, other: &LoadCurve) {
        debug_assert_eq!(self.horizon(), other.horizon());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl Index<usize> for LoadCurve {
    type Output = f64;

    fn index(&self, h: usize) -> &f64 {
        &self.0[h]
    }
}

/// One action index per actor, zero-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionAssignment(Vec<usize>);

impl ActionAssignment {
    pub fn new(actions: Vec<usize>) -> Self {
        Self(actions)
    }

    /// Checks the assignment against per-actor action counts.
    pub fn validated(actions: Vec<usize>, action_counts: &[usize]) -> Result<Self> {
        let a = Self(actions);
        a.check(action_counts)?;
        Ok(a)
    }

    pub fn check(&self, action_counts: &[usize]) -> Result<()> {
        if self.0.len() != action_counts.len() {
            return Err(Error::Dimension(format!(
                "assignment has {} actors, expected {}",
                self.0.len(),
                action_counts.len()
            )));
        }
        for (i, (&j, &k)) in self.0.iter().zip(action_counts).enumerate() {
            if j >= k {
                return Err(Error::Argument(format!(
                    "actor {i} assigned action {j} but has only {k} actions"
                )));
            }
        }
        Ok(())
    }

    pub fn actors(&self) -> usize {
        self.0.len()
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn get(&self, actor: usize) -> usize {
        self.0[actor]
    }

    pub(crate) fn set(&mut self, actor: usize, action: usize) {
        self.0[actor] = action;
    }
}

impl fmt::Display for ActionAssignment {
    /// One-based, parenthesised, e.g. `(1,3,2)`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, j) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", j + 1)?;
        }
        write!(f, ")")
    }
}

/// The max-min objective: the smallest slot total of the summed curves.
pub fn reward(curves: &[LoadCurve]) -> Result<f64> {
    let first = curves
        .first()
        .ok_or_else(|| Error::Argument("reward needs at least one curve".into()))?;
    let horizon = first.horizon();
    if let Some(bad) = curves.iter().find(|c| c.horizon() != horizon) {
        return Err(Error::Dimension(format!(
            "curve of length {} among curves of length {horizon}",
            bad.horizon()
        )));
    }
    Ok((0..horizon)
        .map(|h| curves.iter().map(|c| c[h]).sum::<f64>())
        .fold(f64::INFINITY, f64::min))
}

/// Gap between the optimal and the applied assignment's expected reward.
///
/// Negative values are legitimate when the optimum is itself an estimate.
pub fn regret(expected_opt: f64, expected_applied: f64) -> f64 {
    expected_opt - expected_applied
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curves(rows: &[&[f64]]) -> Vec<LoadCurve> {
        rows.iter().map(|r| LoadCurve::new(r.to_vec()).unwrap()).collect()
    }

    #[test]
    fn reward_examples() {
        assert_eq!(reward(&curves(&[&[1.0, 2.0], &[3.0, 4.0]])).unwrap(), 4.0);
        assert_eq!(reward(&curves(&[&[0.0; 3], &[0.0; 3], &[0.0; 3]])).unwrap(), 0.0);
        assert_eq!(reward(&curves(&[&[5.0, -2.0, 7.0]])).unwrap(), -2.0);
    }

    #[test]
    fn reward_rejects_ragged_curves() {
        let err = reward(&curves(&[&[1.0, 2.0], &[3.0]])).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
        assert!(reward(&[]).is_err());
    }

    #[test]
    fn regret_examples() {
        assert_eq!(regret(10.0, 7.0), 3.0);
        assert_eq!(regret(4.25, 4.25), 0.0);
        assert_eq!(regret(10.0, 12.0), -2.0);
    }

    #[test]
    fn curve_rejects_non_finite() {
        assert!(LoadCurve::new(vec![1.0, f64::NAN]).is_err());
        assert!(LoadCurve::new(vec![]).is_err());
    }

    #[test]
    fn assignment_validation_and_display() {
        let a = ActionAssignment::validated(vec![0, 2], &[1, 3]).unwrap();
        assert_eq!(a.to_string(), "(1,3)");
        assert!(ActionAssignment::validated(vec![1, 0], &[1, 3]).is_err());
        assert!(ActionAssignment::validated(vec![0], &[1, 3]).is_err());
    }

    fn table() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..5, 1usize..6).prop_flat_map(|(n, h)| {
            prop::collection::vec(prop::collection::vec(-1000.0f64..1000.0, h), n)
        })
    }

    proptest! {
        #[test]
        fn reward_is_permutation_invariant(rows in table(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let cs: Vec<LoadCurve> = rows.iter().map(|r| LoadCurve::new(r.clone()).unwrap()).collect();
            let mut shuffled = cs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = reward(&cs).unwrap();
            let b = reward(&shuffled).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }

        #[test]
        fn reward_is_min_of_slot_sums(rows in table()) {
            let cs: Vec<LoadCurve> = rows.iter().map(|r| LoadCurve::new(r.clone()).unwrap()).collect();
            let r = reward(&cs).unwrap();
            let sums: Vec<f64> = (0..cs[0].horizon()).map(|h| cs.iter().map(|c| c[h]).sum()).collect();
            prop_assert!(sums.iter().all(|&s| r <= s));
            prop_assert!(sums.iter().any(|&s| s == r));
        }

        #[test]
        fn reward_is_monotone(rows in table(), bump in 0.0f64..500.0, pick in any::<prop::sample::Index>()) {
            let cs: Vec<LoadCurve> = rows.iter().map(|r| LoadCurve::new(r.clone()).unwrap()).collect();
            let before = reward(&cs).unwrap();
            let mut raised = rows.clone();
            let n = raised.len();
            let h = raised[0].len();
            let flat = pick.index(n * h);
            raised[flat / h][flat % h] += bump;
            let cs2: Vec<LoadCurve> = raised.into_iter().map(|r| LoadCurve::new(r).unwrap()).collect();
            prop_assert!(reward(&cs2).unwrap() >= before - 1e-9);
        }
    }
}
