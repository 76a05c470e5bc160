//! Per-episode CSV rows and the files written for runs and sweeps.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::experiment::{ExperimentResult, SweepResult};
use super::plot::{emit_plot, PlotSeries};
use crate::error::{Error, Result};
use crate::ledger::{EpisodeRecord, RegretLedger};
use crate::util::fmt_g6;

pub const CSV_HEADER: [&str; 11] = [
    "run_id",
    "episode",
    "policy",
    "reward_w",
    "opt_reward_w",
    "regret_w",
    "norm_regret",
    "cum_norm_regret",
    "backend",
    "solver_moves_or_ms",
    "solver_gap",
];

/// One CSV row. Missing numbers are written as empty fields.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    pub run_id: String,
    pub episode: usize,
    pub policy: String,
    pub reward_w: Option<f64>,
    pub opt_reward_w: Option<f64>,
    pub regret_w: Option<f64>,
    pub norm_regret: Option<f64>,
    pub cum_norm_regret: Option<f64>,
    pub backend: String,
    /// Local search: applied moves. Exact: search nodes. External: wall ms.
    pub solver_moves_or_ms: Option<f64>,
    pub solver_gap: Option<f64>,
}

impl EpisodeRow {
    /// Row recording why a run stopped at episode `t`.
    pub fn diagnostic(run_id: &str, t: usize, policy: &str, backend: &str, error: &Error) -> Self {
        let msg = error.to_string().replace(['\n', '\r'], " ");
        Self {
            run_id: run_id.to_string(),
            episode: t,
            policy: policy.to_string(),
            reward_w: None,
            opt_reward_w: None,
            regret_w: None,
            norm_regret: None,
            cum_norm_regret: None,
            backend: format!("{backend} error: {msg}"),
            solver_moves_or_ms: None,
            solver_gap: None,
        }
    }

    pub fn is_diagnostic(&self) -> bool {
        self.reward_w.is_none()
    }
}

fn num(x: Option<f64>) -> String {
    x.map(fmt_g6).unwrap_or_default()
}

pub fn write_rows<W: Write>(rows: &[EpisodeRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.run_id.clone(),
            r.episode.to_string(),
            r.policy.clone(),
            num(r.reward_w),
            num(r.opt_reward_w),
            num(r.regret_w),
            num(r.norm_regret),
            num(r.cum_norm_regret),
            r.backend.clone(),
            num(r.solver_moves_or_ms),
            num(r.solver_gap),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<EpisodeRow>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rd.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Parse { line: 1, msg: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()) });
    }
    let mut rows = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let line = k + 2;
        let rec = rec?;
        if rec.len() != CSV_HEADER.len() {
            return Err(Error::Parse { line, msg: format!("expected {} fields, got {}", CSV_HEADER.len(), rec.len()) });
        }
        let opt = |i: usize| -> Result<Option<f64>> {
            let s = &rec[i];
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>().map(Some).map_err(|e| Error::Parse { line, msg: format!("{}: {e}", CSV_HEADER[i]) })
        };
        rows.push(EpisodeRow {
            run_id: rec[0].to_string(),
            episode: rec[1].parse().map_err(|e| Error::Parse { line, msg: format!("episode: {e}") })?,
            policy: rec[2].to_string(),
            reward_w: opt(3)?,
            opt_reward_w: opt(4)?,
            regret_w: opt(5)?,
            norm_regret: opt(6)?,
            cum_norm_regret: opt(7)?,
            backend: rec[8].to_string(),
            solver_moves_or_ms: opt(9)?,
            solver_gap: opt(10)?,
        });
    }
    Ok(rows)
}

/// Ledger of one run rebuilt from its rows (diagnostic rows are skipped).
/// Cumulative regret is re-summed from the regret column.
pub fn ledger_from_rows(rows: &[EpisodeRow], estimate_samples: usize) -> RegretLedger {
    let mut cum = 0.0;
    let records = rows
        .iter()
        .filter(|r| !r.is_diagnostic())
        .map(|r| {
            let regret = r.regret_w.unwrap_or(0.0);
            cum += regret;
            EpisodeRecord {
                episode: r.episode,
                reward: r.reward_w.unwrap_or(0.0),
                opt_reward: r.opt_reward_w.unwrap_or(0.0),
                regret,
                norm_regret: r.norm_regret,
                cum_regret: cum,
                cum_norm_regret: r.cum_norm_regret.unwrap_or(0.0),
            }
        })
        .collect();
    RegretLedger::from_records(records, estimate_samples)
}

fn episode_series(label: String, curve: &[f64]) -> PlotSeries {
    PlotSeries { label, points: curve.iter().enumerate().map(|(t, &v)| ((t + 1) as f64, v)).collect() }
}

/// Writes `config.txt`, `rep_NNN.csv`, `store_rep_NNN.txt`, `summary.csv` and
/// `regret.svg` into `dir`. The plot is skipped when no episode completed.
pub fn write_experiment(result: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.txt"), result.config.to_text())?;
    for rep in &result.repetitions {
        let mut buf = Vec::new();
        write_rows(&rep.rows, &mut buf)?;
        fs::write(dir.join(format!("rep_{:03}.csv", rep.index)), buf)?;
        let mut snap = Vec::new();
        rep.store.write_snapshot(&mut snap)?;
        fs::write(dir.join(format!("store_rep_{:03}.txt", rep.index)), snap)?;
    }

    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record([
        "run_id",
        "seed",
        "episodes",
        "eval_samples",
        "opt_reward_w",
        "offline_in_sample_w",
        "final_cum_norm_regret",
        "tail50_mean_reward_w",
        "status",
    ])?;
    for rep in &result.repetitions {
        w.write_record([
            rep.run_id.clone(),
            rep.seed.to_string(),
            rep.ledger.len().to_string(),
            result.config.run.eval_samples.to_string(),
            num(rep.opt_reward),
            num(rep.offline.as_ref().map(|o| o.in_sample)),
            fmt_g6(rep.ledger.cumulative_normalized_regret()),
            rep.ledger.tail_mean_reward(50).map(fmt_g6).unwrap_or_default(),
            rep.error.clone().unwrap_or_else(|| "ok".into()),
        ])?;
    }
    fs::write(dir.join("summary.csv"), w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;

    let curve = result.mean_curve();
    if !curve.is_empty() {
        let series = vec![episode_series(result.config.label(), &curve)];
        fs::write(dir.join("regret.svg"), emit_plot(&series, "Cumulative normalized regret")?)?;
    }
    Ok(())
}

/// Writes every point's run directory plus `sweep_summary.csv` and
/// `sweep.svg` into `dir`.
pub fn write_sweep(result: &SweepResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(["axis", "value", "master_seed", "repetitions", "mean_final_cum_norm_regret"])?;
    let mut series = Vec::new();
    for (value, exp) in &result.points {
        write_experiment(exp, &exp.config.run.out_dir)?;
        w.write_record([
            result.axis.name().to_string(),
            value.clone(),
            exp.config.run.master_seed.to_string(),
            exp.repetitions.len().to_string(),
            fmt_g6(exp.mean_final_cum_norm_regret()),
        ])?;
        let curve = exp.mean_curve();
        if !curve.is_empty() {
            series.push(episode_series(format!("{}={}", result.axis.name(), value), &curve));
        }
    }
    fs::write(dir.join("sweep_summary.csv"), w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
    if !series.is_empty() {
        fs::write(dir.join("sweep.svg"), emit_plot(&series, "Cumulative normalized regret")?)?;
    }
    Ok(())
}
