//! Stochastic energy consumers responding to request-interval actions.

mod actions;
mod consumer;

pub use actions::{build_action_set, IntervalAction};
pub use consumer::{read_population, sample_population, write_population, ConsumerModel, ShiftDecision};

use rand::Rng;

use crate::curve::{ActionAssignment, LoadCurve};
use crate::error::{Error, Result};
use crate::scenario::ScenarioTable;

/// Recurrence used for the unconditional noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RecurrenceMode {
    /// `u(h) = z·u(h-1) + sqrt(1-z²)·N(0, σ²)`: every slot is marginally `N(0, σ²)`.
    #[default]
    ExactAr,
    /// `u(h) = z·u(h-1) + (1-z)·N(0, σ²)`: stationary std is `σ·sqrt((1-z)/(1+z))`.
    PaperLiteral,
}

impl RecurrenceMode {
    pub fn name(self) -> &'static str {
        match self {
            RecurrenceMode::ExactAr => "exact_ar",
            RecurrenceMode::PaperLiteral => "paper_literal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "exact_ar" => Some(Self::ExactAr),
            "paper_literal" => Some(Self::PaperLiteral),
            _ => None,
        }
    }
}

/// Population and noise parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub actors: usize,
    pub horizon: usize,
    pub sigma_u: f64,
    pub z: f64,
    pub recurrence: RecurrenceMode,
    pub curtail_min_w: f64,
    pub curtail_max_w: f64,
    pub shift_magnitude_min_w: f64,
    pub shift_magnitude_max_w: f64,
    /// Shift block length range as fractions of `H`.
    pub shift_len_min_frac: f64,
    pub shift_len_max_frac: f64,
    pub coop_prob: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            actors: 20,
            horizon: 8,
            sigma_u: 500.0,
            z: 0.5,
            recurrence: RecurrenceMode::ExactAr,
            curtail_min_w: 0.0,
            curtail_max_w: 200.0,
            shift_magnitude_min_w: 500.0,
            shift_magnitude_max_w: 1000.0,
            shift_len_min_frac: 0.25,
            shift_len_max_frac: 0.5,
            coop_prob: 0.5,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Argument(m.to_string()));
        if self.actors == 0 || self.horizon == 0 {
            return bad("actors and horizon must be at least 1");
        }
        if !(self.sigma_u >= 0.0) || !(0.0..=1.0).contains(&self.z) {
            return bad("sigma_u must be >= 0 and z within [0,1]");
        }
        if !(self.curtail_min_w <= self.curtail_max_w && self.curtail_min_w >= 0.0) {
            return bad("curtail range must satisfy 0 <= min <= max");
        }
        if !(self.shift_magnitude_min_w <= self.shift_magnitude_max_w && self.shift_magnitude_min_w >= 0.0) {
            return bad("shift magnitude range must satisfy 0 <= min <= max");
        }
        if !(0.0 < self.shift_len_min_frac && self.shift_len_min_frac <= self.shift_len_max_frac) {
            return bad("shift length fractions must satisfy 0 < min <= max");
        }
        if !(0.0..=1.0).contains(&self.coop_prob) {
            return bad("coop_prob must lie in [0,1]");
        }
        Ok(())
    }
}

/// Outcome of each consumer under one request per consumer, with fresh noise.
///
/// `curve_i = u_i + curtailable_i on request slots + shiftable response`.
pub fn simulate_episode<R: Rng + ?Sized>(
    consumers: &[ConsumerModel],
    requests: &[IntervalAction],
    horizon: usize,
    mode: RecurrenceMode,
    rng: &mut R,
) -> Result<Vec<LoadCurve>> {
    if consumers.len() != requests.len() {
        return Err(Error::Argument(format!(
            "{} requests for {} consumers",
            requests.len(),
            consumers.len()
        )));
    }
    if let Some(r) = requests.iter().find(|r| r.end > horizon) {
        return Err(Error::Argument(format!("request {r} outside [1,{horizon}]")));
    }
    Ok(consumers
        .iter()
        .zip(requests)
        .map(|(c, &req)| {
            let mut curve = c.unconditional_curve(horizon, mode, rng);
            curve.add_assign(&c.deterministic_response(req, horizon));
            curve
        })
        .collect())
}

/// A consumer population together with its action set.
#[derive(Debug, Clone)]
pub struct Simulator {
    params: SimParams,
    consumers: Vec<ConsumerModel>,
    actions: Vec<IntervalAction>,
    /// `responses[i][j]`: noise-free response of consumer `i` to action `j`.
    responses: Vec<Vec<LoadCurve>>,
}

impl Simulator {
    /// Samples a fresh population.
    pub fn new<R: Rng + ?Sized>(params: SimParams, rng: &mut R) -> Result<Self> {
        params.validate()?;
        let consumers = sample_population(&params, rng);
        Self::from_consumers(params, consumers)
    }

    pub fn from_consumers(params: SimParams, consumers: Vec<ConsumerModel>) -> Result<Self> {
        params.validate()?;
        if consumers.len() != params.actors {
            return Err(Error::Argument(format!(
                "{} consumers for {} actors",
                consumers.len(),
                params.actors
            )));
        }
        let actions = build_action_set(params.horizon);
        let responses = consumers
            .iter()
            .map(|c| actions.iter().map(|&a| c.deterministic_response(a, params.horizon)).collect())
            .collect();
        Ok(Self { params, consumers, actions, responses })
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn consumers(&self) -> &[ConsumerModel] {
        &self.consumers
    }

    pub fn actions(&self) -> &[IntervalAction] {
        &self.actions
    }

    pub fn actors(&self) -> usize {
        self.consumers.len()
    }

    pub fn horizon(&self) -> usize {
        self.params.horizon
    }

    /// Action count `k = |A|` of every consumer.
    pub fn action_count(&self) -> usize {
        self.actions.len()
    }

    pub fn action_counts(&self) -> Vec<usize> {
        vec![self.actions.len(); self.consumers.len()]
    }

    pub fn deterministic_response(&self, actor: usize, action: usize) -> &LoadCurve {
        &self.responses[actor][action]
    }

    /// Simulates one episode under `assignment`.
    pub fn episode<R: Rng + ?Sized>(&self, assignment: &ActionAssignment, rng: &mut R) -> Result<Vec<LoadCurve>> {
        assignment.check(&self.action_counts())?;
        Ok(self
            .consumers
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let mut curve = c.unconditional_curve(self.params.horizon, self.params.recurrence, rng);
                curve.add_assign(&self.responses[i][assignment.get(i)]);
                curve
            })
            .collect())
    }

    /// One true sample episode: a single noise draw per consumer, evaluated
    /// against every action so that cross-action correlation is kept.
    pub fn ground_truth_scenario<R: Rng + ?Sized>(&self, rng: &mut R) -> ScenarioTable {
        let mut table = ScenarioTable::zeros(1, self.action_counts(), self.params.horizon).expect("valid dims");
        for (i, c) in self.consumers.iter().enumerate() {
            let noise = c.unconditional_curve(self.params.horizon, self.params.recurrence, rng);
            for (j, resp) in self.responses[i].iter().enumerate() {
                let mut curve = noise.clone();
                curve.add_assign(resp);
                table.set_curve(0, i, j, &curve).expect("matching horizon");
            }
        }
        table
    }

    /// `scenarios` independent ground-truth episodes stacked into one table.
    pub fn ground_truth_table<R: Rng + ?Sized>(&self, scenarios: usize, rng: &mut R) -> Result<ScenarioTable> {
        if scenarios == 0 {
            return Err(Error::Argument("at least one scenario required".into()));
        }
        let mut table = self.ground_truth_scenario(rng);
        for _ in 1..scenarios {
            table.extend(&self.ground_truth_scenario(rng))?;
        }
        Ok(table)
    }
}
