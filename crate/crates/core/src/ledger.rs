//! Per-episode regret accounting.

use crate::curve::regret;

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// One-based episode index.
    pub episode: usize,
    /// Expected reward of the applied assignment (estimate).
    pub reward: f64,
    /// Expected reward of the optimal assignment (estimate).
    pub opt_reward: f64,
    pub regret: f64,
    /// `None` when `opt_reward <= 0`.
    pub norm_regret: Option<f64>,
    pub cum_regret: f64,
    pub cum_norm_regret: f64,
}

/// Running regret totals. Each reward is a Monte Carlo estimate; the sample
/// count behind the estimates is kept alongside.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegretLedger {
    records: Vec<EpisodeRecord>,
    cum_regret: f64,
    cum_norm_regret: f64,
    estimate_samples: usize,
}

impl RegretLedger {
    pub fn new(estimate_samples: usize) -> Self {
        Self { estimate_samples, ..Self::default() }
    }

    pub fn push(&mut self, reward: f64, opt_reward: f64) -> &EpisodeRecord {
        let rho = regret(opt_reward, reward);
        let norm = (opt_reward > 0.0).then(|| rho / opt_reward);
        self.cum_regret += rho;
        if let Some(n) = norm {
            self.cum_norm_regret += n;
        }
        self.records.push(EpisodeRecord {
            episode: self.records.len() + 1,
            reward,
            opt_reward,
            regret: rho,
            norm_regret: norm,
            cum_regret: self.cum_regret,
            cum_norm_regret: self.cum_norm_regret,
        });
        self.records.last().expect("just pushed")
    }

    /// Rebuilds a ledger from stored records (for instance parsed from CSV);
    /// the running totals are taken from the last record.
    pub fn from_records(records: Vec<EpisodeRecord>, estimate_samples: usize) -> Self {
        let (cum_regret, cum_norm_regret) = records.last().map_or((0.0, 0.0), |r| (r.cum_regret, r.cum_norm_regret));
        Self { records, cum_regret, cum_norm_regret, estimate_samples }
    }

    pub fn records(&self) -> &[EpisodeRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn cumulative_regret(&self) -> f64 {
        self.cum_regret
    }

    pub fn cumulative_normalized_regret(&self) -> f64 {
        self.cum_norm_regret
    }

    pub fn estimate_samples(&self) -> usize {
        self.estimate_samples
    }

    /// Cumulative regret and normalized regret summed from scratch.
    pub fn recompute(&self) -> (f64, f64) {
        let r = self.records.iter().map(|r| r.regret).sum();
        let n = self.records.iter().filter_map(|r| r.norm_regret).sum();
        (r, n)
    }

    /// Mean of the applied rewards over the last `window` episodes.
    pub fn tail_mean_reward(&self, window: usize) -> Option<f64> {
        let w = window.min(self.records.len());
        if w == 0 {
            return None;
        }
        let tail = &self.records[self.records.len() - w..];
        Some(tail.iter().map(|r| r.reward).sum::<f64>() / w as f64)
    }
}
