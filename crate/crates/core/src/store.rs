//! Observed outcomes per (actor, action).

use std::io::{BufRead, Write};

use crate::curve::{ActionAssignment, LoadCurve};
use crate::error::{Error, Result};

/// Multiset of observed curves for every (actor, action) cell plus pull counts.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStore {
    action_counts: Vec<usize>,
    horizon: usize,
    samples: Vec<Vec<Vec<LoadCurve>>>,
    episode: usize,
}

impl SampleStore {
    pub fn new(action_counts: Vec<usize>, horizon: usize) -> Result<Self> {
        if action_counts.is_empty() || action_counts.contains(&0) {
            return Err(Error::Argument("every actor needs at least one action".into()));
        }
        if horizon == 0 {
            return Err(Error::Argument("horizon must be at least 1".into()));
        }
        let samples = action_counts.iter().map(|&k| vec![Vec::new(); k]).collect();
        Ok(Self { action_counts, horizon, samples, episode: 0 })
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

    /// Number of recorded episodes.
    pub fn episode(&self) -> usize {
        self.episode
    }

    /// Pull count of `action` for `actor`.
    pub fn count(&self, actor: usize, action: usize) -> usize {
        self.samples[actor][action].len()
    }

    pub fn samples(&self, actor: usize, action: usize) -> &[LoadCurve] {
        &self.samples[actor][action]
    }

    /// Appends the episode outcome: curve `i` goes to cell `(i, a^i)`.
    pub fn record_outcome(&mut self, assignment: &ActionAssignment, curves: &[LoadCurve]) -> Result<()> {
        assignment.check(&self.action_counts)?;
        if curves.len() != self.actors() {
            return Err(Error::Argument(format!(
                "{} curves for {} actors",
                curves.len(),
                self.actors()
            )));
        }
        if let Some(c) = curves.iter().find(|c| c.horizon() != self.horizon) {
            return Err(Error::Dimension(format!(
                "curve of length {} in a store of horizon {}",
                c.horizon(),
                self.horizon
            )));
        }
        for (i, curve) in curves.iter().enumerate() {
            self.samples[i][assignment.get(i)].push(curve.clone());
        }
        self.episode += 1;
        Ok(())
    }

    /// Writes one line per stored sample: `actor action v_1 ... v_H`, one-based.
    ///
    /// The first line is `store <H> <k^1> ... <k^n>` and the second `episodes <t>`.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "store {}", self.horizon)?;
        for k in &self.action_counts {
            write!(out, " {k}")?;
        }
        writeln!(out)?;
        writeln!(out, "episodes {}", self.episode)?;
        for (i, row) in self.samples.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                for curve in cell {
                    write!(out, "{} {}", i + 1, j + 1)?;
                    for v in curve.values() {
                        write!(out, " {v}")?;
                    }
                    writeln!(out)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(input: R) -> Result<Self> {
        let mut store: Option<SampleStore> = None;
        let mut episode = None;
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let perr = |msg: String| Error::Parse { line: lineno, msg };
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let tokens: Vec<&str> = trimmed.split_whitespace().collect();
            match tokens[0] {
                "store" => {
                    let nums = parse_usizes(&tokens[1..]).map_err(perr)?;
                    if nums.len() < 2 {
                        return Err(Error::Parse { line: lineno, msg: "store header needs H and action counts".into() });
                    }
                    store = Some(
                        SampleStore::new(nums[1..].to_vec(), nums[0])
                            .map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?,
                    );
                }
                "episodes" => {
                    let nums = parse_usizes(&tokens[1..]).map_err(perr)?;
                    episode = nums.first().copied();
                }
                _ => {
                    let s = store
                        .as_mut()
                        .ok_or_else(|| perr("sample before store header".into()))?;
                    let idx = parse_usizes(&tokens[..2.min(tokens.len())]).map_err(perr)?;
                    if idx.len() != 2 || idx[0] == 0 || idx[1] == 0 {
                        return Err(perr("expected one-based actor and action".into()));
                    }
                    let (i, j) = (idx[0] - 1, idx[1] - 1);
                    if i >= s.actors() || j >= s.action_counts[i] {
                        return Err(perr(format!("cell ({}, {}) out of range", i + 1, j + 1)));
                    }
                    let values = tokens[2..]
                        .iter()
                        .map(|t| t.parse::<f64>().map_err(|e| perr(format!("bad value {t:?}: {e}"))))
                        .collect::<Result<Vec<_>>>()?;
                    if values.len() != s.horizon {
                        return Err(perr(format!("expected {} values, got {}", s.horizon, values.len())));
                    }
                    let curve = LoadCurve::new(values).map_err(|e| perr(e.to_string()))?;
                    s.samples[i][j].push(curve);
                }
            }
        }
        let mut store = store.ok_or_else(|| Error::EmptyInput("store snapshot has no header".into()))?;
        let per_actor = store.samples[0].iter().map(Vec::len).sum::<usize>();
        store.episode = episode.unwrap_or(per_actor);
        Ok(store)
    }
}

fn parse_usizes(tokens: &[&str]) -> std::result::Result<Vec<usize>, String> {
    tokens
        .iter()
        .map(|t| t.parse::<usize>().map_err(|e| format!("bad integer {t:?}: {e}")))
        .collect()
}

/// Mean of the stored samples blended with the initial curve at weight `beta`.
///
/// Returns `initial` unchanged when the cell has no samples, whatever `beta`.
/// With `beta == 0` the plain sample mean is computed as a running mean, which
/// reproduces a repeated sample bit for bit.
pub fn weighted_mean_curve(
    store: &SampleStore,
    actor: usize,
    action: usize,
    beta: f64,
    initial: &LoadCurve,
) -> LoadCurve {
    let samples = store.samples(actor, action);
    if samples.is_empty() {
        return initial.clone();
    }
    if beta == 0.0 {
        let mut mean = vec![0.0; initial.horizon()];
        for (k, c) in samples.iter().enumerate() {
            for (m, x) in mean.iter_mut().zip(c.values()) {
                *m += (x - *m) / (k + 1) as f64;
            }
        }
        return LoadCurve::new(mean).expect("finite mean of finite curves");
    }
    let denom = beta + samples.len() as f64;
    let values = (0..initial.horizon())
        .map(|h| {
            let total: f64 = samples.iter().map(|c| c[h]).sum();
            (beta * initial[h] + total) / denom
        })
        .collect();
    LoadCurve::new(values).expect("finite blend of finite curves")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(v: &[f64]) -> LoadCurve {
        LoadCurve::new(v.to_vec()).unwrap()
    }

    #[test]
    fn first_insertion() {
        let mut s = SampleStore::new(vec![1], 1).unwrap();
        s.record_outcome(&ActionAssignment::new(vec![0]), &[c(&[5.0])]).unwrap();
        assert_eq!(s.count(0, 0), 1);
        assert_eq!(s.samples(0, 0), &[c(&[5.0])]);
    }

    #[test]
    fn duplicates_are_kept() {
        let mut s = SampleStore::new(vec![2], 1).unwrap();
        let a = ActionAssignment::new(vec![1]);
        s.record_outcome(&a, &[c(&[3.0])]).unwrap();
        s.record_outcome(&a, &[c(&[3.0])]).unwrap();
        assert_eq!(s.count(0, 1), 2);
    }

    #[test]
    fn counts_sum_to_episodes() {
        let mut s = SampleStore::new(vec![3, 2], 2).unwrap();
        let plan = [[0, 1], [2, 1], [2, 0], [1, 0], [0, 0]];
        for (t, p) in plan.iter().enumerate() {
            s.record_outcome(&ActionAssignment::new(p.to_vec()), &[c(&[1.0, 2.0]), c(&[0.0, 0.0])])
                .unwrap();
            for i in 0..2 {
                let total: usize = (0..s.action_counts()[i]).map(|j| s.count(i, j)).sum();
                assert_eq!(total, t + 1);
            }
        }
        assert_eq!(s.episode(), plan.len());
    }

    #[test]
    fn record_rejects_bad_input() {
        let mut s = SampleStore::new(vec![2], 1).unwrap();
        assert!(s.record_outcome(&ActionAssignment::new(vec![2]), &[c(&[1.0])]).is_err());
        assert!(s.record_outcome(&ActionAssignment::new(vec![0]), &[]).is_err());
        assert!(s.record_outcome(&ActionAssignment::new(vec![0]), &[c(&[1.0, 1.0])]).is_err());
        assert_eq!(s.episode(), 0);
    }

    #[test]
    fn weighted_mean_examples() {
        let init = c(&[2000.0]);
        let mut s = SampleStore::new(vec![1], 1).unwrap();
        assert_eq!(weighted_mean_curve(&s, 0, 0, 0.15, &init), init);
        assert_eq!(weighted_mean_curve(&s, 0, 0, 0.0, &init), init);

        s.record_outcome(&ActionAssignment::new(vec![0]), &[c(&[100.0])]).unwrap();
        let m = weighted_mean_curve(&s, 0, 0, 0.15, &init);
        assert_relative_eq!(m[0], 400.0 / 1.15, max_relative = 1e-12);
        assert_relative_eq!(m[0], 347.826_086_956_521_7, max_relative = 1e-12);

        s.record_outcome(&ActionAssignment::new(vec![0]), &[c(&[300.0])]).unwrap();
        assert_eq!(weighted_mean_curve(&s, 0, 0, 0.0, &init)[0], 200.0);
    }

    #[test]
    fn repeated_sample_mean_is_exact() {
        let init = c(&[2000.0, 2000.0]);
        let mut s = SampleStore::new(vec![1], 2).unwrap();
        for n in 1..40 {
            s.record_outcome(&ActionAssignment::new(vec![0]), &[c(&[0.1, 1234.567])]).unwrap();
            assert_eq!(weighted_mean_curve(&s, 0, 0, 0.0, &init), c(&[0.1, 1234.567]), "{n} samples");
        }
    }

    #[test]
    fn weighted_mean_limits() {
        let init = c(&[2000.0, 1000.0]);
        let mut s = SampleStore::new(vec![1], 2).unwrap();
        s.record_outcome(&ActionAssignment::new(vec![0]), &[c(&[10.0, 20.0])]).unwrap();
        let heavy = weighted_mean_curve(&s, 0, 0, 1e12, &init);
        assert_relative_eq!(heavy[0], 2000.0, max_relative = 1e-9);
        assert_relative_eq!(heavy[1], 1000.0, max_relative = 1e-9);
        assert_eq!(weighted_mean_curve(&s, 0, 0, 0.0, &init), c(&[10.0, 20.0]));
    }

    #[test]
    fn snapshot_round_trip() {
        let mut s = SampleStore::new(vec![2, 3], 2).unwrap();
        s.record_outcome(&ActionAssignment::new(vec![1, 2]), &[c(&[0.1, -3.5]), c(&[1e-7, 2.0])])
            .unwrap();
        s.record_outcome(&ActionAssignment::new(vec![0, 2]), &[c(&[4.0, 5.0]), c(&[6.0, 7.0])])
            .unwrap();
        let mut buf = Vec::new();
        s.write_snapshot(&mut buf).unwrap();
        let back = SampleStore::read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn snapshot_errors_name_the_line() {
        let text = "store 1 2\nepisodes 1\n1 3 5.0\n";
        match SampleStore::read_snapshot(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
