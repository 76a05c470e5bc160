//! Scenario tables `l_t(i, j, h)`: the load reduction of actor `i` under
//! action `j` at slot `h` in sample episode `t`.

use crate::curve::{ActionAssignment, LoadCurve};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTable {
    scenarios: usize,
    action_counts: Vec<usize>,
    horizon: usize,
    /// Start of actor `i`'s block within one scenario, in rows of `horizon`.
    offsets: Vec<usize>,
    rows_per_scenario: usize,
    values: Vec<f64>,
}

impl ScenarioTable {
    /// A table of zeros.
    pub fn zeros(scenarios: usize, action_counts: Vec<usize>, horizon: usize) -> Result<Self> {
        if scenarios == 0 || horizon == 0 || action_counts.is_empty() || action_counts.contains(&0) {
            return Err(Error::Argument(format!(
                "scenario table needs N >= 1, H >= 1 and at least one action per actor (N={scenarios}, H={horizon})"
            )));
        }
        let mut offsets = Vec::with_capacity(action_counts.len());
        let mut acc = 0;
        for &k in &action_counts {
            offsets.push(acc);
            acc += k;
        }
        Ok(Self {
            scenarios,
            horizon,
            offsets,
            rows_per_scenario: acc,
            values: vec![0.0; scenarios * acc * horizon],
            action_counts,
        })
    }

    /// Uniform action count `k` for every actor.
    pub fn uniform(scenarios: usize, actors: usize, actions: usize, horizon: usize) -> Result<Self> {
        Self::zeros(scenarios, vec![actions; actors], horizon)
    }

    /// Builds a table from `f(t, i, j, h)`.
    pub fn from_fn(
        scenarios: usize,
        action_counts: Vec<usize>,
        horizon: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut table = Self::zeros(scenarios, action_counts, horizon)?;
        for t in 0..scenarios {
            for i in 0..table.actors() {
                for j in 0..table.action_counts[i] {
                    for h in 0..horizon {
                        let v = f(t, i, j, h);
                        table.set(t, i, j, h, v)?;
                    }
                }
            }
        }
        Ok(table)
    }

    pub fn scenarios(&self) -> usize {
        self.scenarios
    }

    pub fn actors(&self) -> usize {
        self.action_counts.len()
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `Π_i k^i`, saturating.
    pub fn assignment_space(&self) -> u64 {
        self.action_counts
            .iter()
            .fold(1u64, |acc, &k| acc.saturating_mul(k as u64))
    }

    fn base(&self, t: usize, i: usize, j: usize) -> usize {
        debug_assert!(t < self.scenarios && j < self.action_counts[i]);
        ((t * self.rows_per_scenario) + self.offsets[i] + j) * self.horizon
    }

    /// The curve `l_t(i, j, ·)`.
    pub fn curve(&self, t: usize, i: usize, j: usize) -> &[f64] {
        let b = self.base(t, i, j);
        &self.values[b..b + self.horizon]
    }

    pub fn get(&self, t: usize, i: usize, j: usize, h: usize) -> f64 {
        self.curve(t, i, j)[h]
    }

    pub fn set(&mut self, t: usize, i: usize, j: usize, h: usize, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::Argument(format!("non-finite table entry at ({t},{i},{j},{h})")));
        }
        let b = self.base(t, i, j);
        self.values[b + h] = value;
        Ok(())
    }

    pub fn set_curve(&mut self, t: usize, i: usize, j: usize, curve: &LoadCurve) -> Result<()> {
        if curve.horizon() != self.horizon {
            return Err(Error::Dimension(format!(
                "curve of length {} in a table of horizon {}",
                curve.horizon(),
                self.horizon
            )));
        }
        let b = self.base(t, i, j);
        self.values[b..b + self.horizon].copy_from_slice(curve.values());
        Ok(())
    }

    /// Appends the scenarios of `other`, which must share actor/action/horizon dimensions.
    pub fn extend(&mut self, other: &ScenarioTable) -> Result<()> {
        if other.action_counts != self.action_counts || other.horizon != self.horizon {
            return Err(Error::Dimension("scenario tables with different dimensions".into()));
        }
        self.values.extend_from_slice(&other.values);
        self.scenarios += other.scenarios;
        Ok(())
    }

    /// Returns a copy with every entry multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// Scenario-averaged single-scenario table.
    pub fn mean_table(&self) -> Self {
        let mut out = Self::zeros(1, self.action_counts.clone(), self.horizon).expect("valid dims");
        let per = self.rows_per_scenario * self.horizon;
        for t in 0..self.scenarios {
            for (o, v) in out.values.iter_mut().zip(&self.values[t * per..(t + 1) * per]) {
                *o += v;
            }
        }
        out.values.iter_mut().for_each(|v| *v /= self.scenarios as f64);
        out
    }

    pub(crate) fn raw_values(&self) -> &[f64] {
        &self.values
    }

    pub fn check_assignment(&self, assignment: &ActionAssignment) -> Result<()> {
        assignment.check(&self.action_counts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_consistent() {
        let t = ScenarioTable::from_fn(2, vec![2, 3], 4, |t, i, j, h| (1000 * t + 100 * i + 10 * j + h) as f64)
            .unwrap();
        assert_eq!(t.get(1, 1, 2, 3), 1123.0);
        assert_eq!(t.curve(0, 0, 1), &[10.0, 11.0, 12.0, 13.0]);
        assert_eq!(t.assignment_space(), 6);
    }

    #[test]
    fn rejects_degenerate_dims() {
        assert!(ScenarioTable::uniform(0, 1, 1, 1).is_err());
        assert!(ScenarioTable::uniform(1, 1, 0, 1).is_err());
        assert!(ScenarioTable::uniform(1, 1, 1, 0).is_err());
    }

    #[test]
    fn mean_table_averages_scenarios() {
        let t = ScenarioTable::from_fn(2, vec![1], 2, |t, _, _, h| if t == 0 { h as f64 } else { 10.0 }).unwrap();
        assert_eq!(t.mean_table().curve(0, 0, 0), &[5.0, 5.5]);
    }

    #[test]
    fn extend_appends_scenarios() {
        let mut a = ScenarioTable::uniform(1, 2, 2, 2).unwrap();
        let b = ScenarioTable::from_fn(1, vec![2, 2], 2, |_, _, _, _| 1.0).unwrap();
        a.extend(&b).unwrap();
        assert_eq!(a.scenarios(), 2);
        assert_eq!(a.get(1, 1, 1, 1), 1.0);
        assert!(a.extend(&ScenarioTable::uniform(1, 2, 3, 2).unwrap()).is_err());
    }
}
