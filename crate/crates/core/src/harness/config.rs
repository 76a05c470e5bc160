//! Flat `section.key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! errors so that typos do not silently fall back to defaults.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::error::{Error, Result};
use crate::optimizer::{Backend, BackendKind, ExternalSolver, LocalSearchParams, DEFAULT_ENUMERATION_LIMIT};
use crate::policies::{InitialValues, PolicyConfig, PolicyKind};
use crate::simulator::{RecurrenceMode, SimParams};

/// Environment variable overriding `run.master_seed`.
pub const SEED_ENV: &str = "MBLAB_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub backend: BackendKind,
    pub enumeration_limit: u64,
    pub restarts: usize,
    pub move_budget: u64,
    pub time_budget_ms: Option<u64>,
    pub external_command: Option<String>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let local = LocalSearchParams::default();
        Self {
            backend: BackendKind::Exact,
            enumeration_limit: DEFAULT_ENUMERATION_LIMIT,
            restarts: local.restarts,
            move_budget: local.move_budget,
            time_budget_ms: None,
            external_command: None,
        }
    }
}

impl OptimizerConfig {
    pub fn to_backend(&self) -> Result<Backend> {
        Ok(match self.backend {
            BackendKind::Exact => Backend::Exact { enumeration_limit: self.enumeration_limit },
            BackendKind::Local => Backend::Local(LocalSearchParams {
                restarts: self.restarts,
                move_budget: self.move_budget,
                time_budget: self.time_budget_ms.map(Duration::from_millis),
            }),
            BackendKind::External => match &self.external_command {
                Some(cmd) => Backend::External(ExternalSolver::new(cmd.clone())),
                None => {
                    return Err(Error::Argument("external backend needs optimizer.external_command".into()));
                }
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub episodes: usize,
    pub repetitions: usize,
    pub master_seed: u64,
    /// Fresh episodes behind every expected-reward estimate.
    pub eval_samples: usize,
    /// Ground-truth sample episodes for the offline optimum.
    pub offline_scenarios: usize,
    pub out_dir: PathBuf,
    /// Value of the `policy` CSV column; defaults to the policy kind.
    pub label: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            episodes: 365,
            repetitions: 1,
            master_seed: 0,
            eval_samples: 200,
            offline_scenarios: 20,
            out_dir: PathBuf::from("out"),
            label: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentConfig {
    pub sim: SimParams,
    pub policy: PolicyConfig,
    pub optimizer: OptimizerConfig,
    pub run: RunConfig,
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("{key}: cannot parse {value:?}: {e}"))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Config { line: idx + 1, msg };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
            config.set(key.trim(), value.trim()).map_err(err)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Sets one key; `Err` carries a message without line information.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let (s, p, o, r) = (&mut self.sim, &mut self.policy, &mut self.optimizer, &mut self.run);
        match key {
            "sim.actors" | "sim.n" => s.actors = parse_num(key, value)?,
            "sim.horizon" | "sim.h" => s.horizon = parse_num(key, value)?,
            "sim.sigma_u" => s.sigma_u = parse_num(key, value)?,
            "sim.z" => s.z = parse_num(key, value)?,
            "sim.recurrence_mode" => {
                s.recurrence = RecurrenceMode::parse(value).ok_or(format!("{key}: unknown mode {value:?}"))?
            }
            "sim.curtail_min_w" => s.curtail_min_w = parse_num(key, value)?,
            "sim.curtail_max_w" => s.curtail_max_w = parse_num(key, value)?,
            "sim.shift_min_w" => s.shift_magnitude_min_w = parse_num(key, value)?,
            "sim.shift_max_w" => s.shift_magnitude_max_w = parse_num(key, value)?,
            "sim.shift_len_min_frac" => s.shift_len_min_frac = parse_num(key, value)?,
            "sim.shift_len_max_frac" => s.shift_len_max_frac = parse_num(key, value)?,
            "sim.coop_prob" => s.coop_prob = parse_num(key, value)?,
            "policy.kind" => p.kind = PolicyKind::parse(value).ok_or(format!("{key}: unknown policy {value:?}"))?,
            "policy.beta" => p.beta = parse_num(key, value)?,
            "policy.epsilon" => p.epsilon = parse_num(key, value)?,
            "policy.tau" => p.tau = parse_num(key, value)?,
            "policy.n_scenarios" => p.n_scenarios = parse_num(key, value)?,
            "policy.initial_value_w" => p.initial = InitialValues::Constant(parse_num(key, value)?),
            "optimizer.backend" => {
                o.backend = match value {
                    "exact" => BackendKind::Exact,
                    "local" => BackendKind::Local,
                    "external" => BackendKind::External,
                    _ => return Err(format!("{key}: expected exact, local or external, got {value:?}")),
                }
            }
            "optimizer.enumeration_limit" => o.enumeration_limit = parse_num(key, value)?,
            "optimizer.restarts" => o.restarts = parse_num(key, value)?,
            "optimizer.move_budget" => o.move_budget = parse_num(key, value)?,
            "optimizer.time_budget_ms" => {
                o.time_budget_ms = if value == "none" { None } else { Some(parse_num(key, value)?) }
            }
            "optimizer.external_command" => o.external_command = Some(value.to_string()),
            "run.episodes" => r.episodes = parse_num(key, value)?,
            "run.repetitions" => r.repetitions = parse_num(key, value)?,
            "run.master_seed" => r.master_seed = parse_num(key, value)?,
            "run.eval_samples" => r.eval_samples = parse_num(key, value)?,
            "run.offline_scenarios" => r.offline_scenarios = parse_num(key, value)?,
            "run.out_dir" => r.out_dir = PathBuf::from(value),
            "run.label" => r.label = Some(value.to_string()),
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.policy.validate()?;
        if self.run.episodes == 0 || self.run.eval_samples == 0 || self.run.repetitions == 0 {
            return Err(Error::Argument("episodes, repetitions and eval_samples must be >= 1".into()));
        }
        if self.run.offline_scenarios == 0 {
            return Err(Error::Argument("offline_scenarios must be >= 1".into()));
        }
        self.optimizer.to_backend()?;
        Ok(())
    }

    /// Applies `MBLAB_SEED` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.run.master_seed = v
                .trim()
                .parse()
                .map_err(|e| Error::Argument(format!("{SEED_ENV}={v:?} is not a seed: {e}")))?;
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        self.run.label.clone().unwrap_or_else(|| self.policy.kind.name().to_string())
    }

    /// Canonical text form; parsing it gives back an equal config (for a
    /// constant initial value).
    pub fn to_text(&self) -> String {
        let (s, p, o, r) = (&self.sim, &self.policy, &self.optimizer, &self.run);
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("sim.actors", s.actors.to_string());
        kv("sim.horizon", s.horizon.to_string());
        kv("sim.sigma_u", s.sigma_u.to_string());
        kv("sim.z", s.z.to_string());
        kv("sim.recurrence_mode", s.recurrence.name().to_string());
        kv("sim.curtail_min_w", s.curtail_min_w.to_string());
        kv("sim.curtail_max_w", s.curtail_max_w.to_string());
        kv("sim.shift_min_w", s.shift_magnitude_min_w.to_string());
        kv("sim.shift_max_w", s.shift_magnitude_max_w.to_string());
        kv("sim.shift_len_min_frac", s.shift_len_min_frac.to_string());
        kv("sim.shift_len_max_frac", s.shift_len_max_frac.to_string());
        kv("sim.coop_prob", s.coop_prob.to_string());
        kv("policy.kind", p.kind.name().to_string());
        kv("policy.beta", p.beta.to_string());
        kv("policy.epsilon", p.epsilon.to_string());
        kv("policy.tau", p.tau.to_string());
        kv("policy.n_scenarios", p.n_scenarios.to_string());
        if let InitialValues::Constant(v) = p.initial {
            kv("policy.initial_value_w", v.to_string());
        }
        kv("optimizer.backend", o.backend.name().to_string());
        kv("optimizer.enumeration_limit", o.enumeration_limit.to_string());
        kv("optimizer.restarts", o.restarts.to_string());
        kv("optimizer.move_budget", o.move_budget.to_string());
        kv("optimizer.time_budget_ms", o.time_budget_ms.map_or("none".into(), |v| v.to_string()));
        if let Some(cmd) = &o.external_command {
            kv("optimizer.external_command", cmd.clone());
        }
        kv("run.episodes", r.episodes.to_string());
        kv("run.repetitions", r.repetitions.to_string());
        kv("run.master_seed", r.master_seed.to_string());
        kv("run.eval_samples", r.eval_samples.to_string());
        kv("run.offline_scenarios", r.offline_scenarios.to_string());
        kv("run.out_dir", r.out_dir.display().to_string());
        if let Some(l) = &r.label {
            kv("run.label", l.clone());
        }
        out
    }
}
