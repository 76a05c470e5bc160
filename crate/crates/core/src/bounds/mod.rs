//! Exact analysis of small explicit bandit instances: expected rewards by
//! enumeration, optimal and suboptimal actions, KL divergences and the
//! log-time regret constant ρ(w*) of the cheapest feasible mixed assignment.

mod simplex;

use std::io::BufRead;

use rand::Rng;
use rand_distr::{Distribution, Normal};

pub use simplex::{solve_lp, Constraint, LpSolution, Sense, LP_TOL};

use crate::curve::{ActionAssignment, LoadCurve};
use crate::error::{Error, Result};
use crate::harness::Environment;

/// Default cap on enumerated assignments and joint categorical atoms.
pub const DEFAULT_SUPPORT_LIMIT: u64 = 1_000_000;

/// Tolerance for ties between expected rewards.
pub const OPT_TOL: f64 = 1e-9;

/// Outcome distribution of one (actor, action) pair.
#[derive(Debug, Clone, PartialEq)]
pub enum OutcomeDist {
    /// Finite support of curves with probabilities.
    Categorical { atoms: Vec<LoadCurve>, probs: Vec<f64> },
    /// Independent Gaussian slots.
    Gaussian { mean: LoadCurve, var: Vec<f64> },
}

impl OutcomeDist {
    pub fn categorical(atoms: Vec<LoadCurve>, probs: Vec<f64>) -> Result<Self> {
        let d = OutcomeDist::Categorical { atoms, probs };
        d.check()?;
        Ok(d)
    }

    pub fn gaussian(mean: LoadCurve, var: Vec<f64>) -> Result<Self> {
        let d = OutcomeDist::Gaussian { mean, var };
        d.check()?;
        Ok(d)
    }

    /// A single atom.
    pub fn point(curve: LoadCurve) -> Self {
        OutcomeDist::Categorical { atoms: vec![curve], probs: vec![1.0] }
    }

    pub fn horizon(&self) -> usize {
        match self {
            OutcomeDist::Categorical { atoms, .. } => atoms[0].horizon(),
            OutcomeDist::Gaussian { mean, .. } => mean.horizon(),
        }
    }

    pub fn mean(&self) -> LoadCurve {
        match self {
            OutcomeDist::Categorical { atoms, probs } => {
                let mut m = vec![0.0; self.horizon()];
                for (a, p) in atoms.iter().zip(probs) {
                    for (x, v) in m.iter_mut().zip(a.values()) {
                        *x += p * v;
                    }
                }
                LoadCurve::new(m).expect("finite")
            }
            OutcomeDist::Gaussian { mean, .. } => mean.clone(),
        }
    }

    fn check(&self) -> Result<()> {
        match self {
            OutcomeDist::Categorical { atoms, probs } => {
                if atoms.is_empty() || atoms.len() != probs.len() {
                    return Err(Error::Argument("categorical needs one probability per atom".into()));
                }
                let h = atoms[0].horizon();
                if atoms.iter().any(|a| a.horizon() != h) {
                    return Err(Error::Dimension("categorical atoms differ in length".into()));
                }
                if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return Err(Error::Argument("probabilities must be finite and >= 0".into()));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::Argument(format!("probabilities sum to {total}, not 1")));
                }
                Ok(())
            }
            OutcomeDist::Gaussian { mean, var } => {
                if var.len() != mean.horizon() {
                    return Err(Error::Dimension("one variance per slot required".into()));
                }
                if var.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::Argument("variances must be finite and >= 0".into()));
                }
                Ok(())
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> LoadCurve {
        match self {
            OutcomeDist::Categorical { atoms, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (a, p) in atoms.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return a.clone();
                    }
                }
                let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(atoms.len() - 1);
                atoms[last].clone()
            }
            OutcomeDist::Gaussian { mean, var } => {
                let v = mean
                    .values()
                    .iter()
                    .zip(var)
                    .map(|(&m, &s2)| Normal::new(m, s2.sqrt()).expect("valid variance").sample(rng))
                    .collect();
                LoadCurve::new(v).expect("finite sample")
            }
        }
    }
}

/// Explicit outcome distributions for every (actor, action) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditInstance {
    horizon: usize,
    dists: Vec<Vec<OutcomeDist>>,
}

impl BanditInstance {
    /// `dists[i][j]` is the outcome distribution of action `j` of actor `i`.
    pub fn new(dists: Vec<Vec<OutcomeDist>>) -> Result<Self> {
        if dists.is_empty() || dists.iter().any(|d| d.is_empty()) {
            return Err(Error::Argument("every actor needs at least one action".into()));
        }
        let horizon = dists[0][0].horizon();
        if horizon == 0 {
            return Err(Error::Argument("horizon must be at least 1".into()));
        }
        for d in dists.iter().flatten() {
            d.check()?;
            if d.horizon() != horizon {
                return Err(Error::Dimension(format!("outcome of length {} in an instance of horizon {horizon}", d.horizon())));
            }
        }
        Ok(Self { horizon, dists })
    }

    pub fn actors(&self) -> usize {
        self.dists.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn action_counts(&self) -> Vec<usize> {
        self.dists.iter().map(Vec::len).collect()
    }

    pub fn dist(&self, actor: usize, action: usize) -> &OutcomeDist {
        &self.dists[actor][action]
    }

    /// Reads the line format:
    ///
    /// ```text
    /// # actor action kind parameters (one-based indices)
    /// 1 1 cat 0.5 : 0 ; 0.5 : 2
    /// 1 2 gauss 1.0 ; 0.25
    /// ```
    ///
    /// `cat` lists `probability : curve` atoms separated by `;`. `gauss` gives
    /// the mean curve, `;`, then the per-slot variances. Every pair must be
    /// listed exactly once and actions must be contiguous from 1.
    pub fn parse<R: BufRead>(input: R) -> Result<Self> {
        let mut entries: Vec<Vec<Option<OutcomeDist>>> = Vec::new();
        for (k, line) in input.lines().enumerate() {
            let lineno = k + 1;
            let line = line?;
            let text = line.split('#').next().unwrap_or("").trim();
            if text.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { line: lineno, msg };
            let mut rest = text;
            let mut head = [""; 3];
            for slot in &mut head {
                let (tok, tail) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
                *slot = tok;
                rest = tail.trim_start();
            }
            let [i, j, kind] = head;
            if rest.is_empty() {
                return Err(err("expected `actor action kind parameters`".into()));
            }
            let index = |s: &str| -> Result<usize> {
                match s.parse::<usize>() {
                    Ok(v) if v >= 1 => Ok(v - 1),
                    _ => Err(err(format!("bad index {s:?}"))),
                }
            };
            let (i, j) = (index(i)?, index(j)?);
            let numbers = |s: &str| -> Result<Vec<f64>> {
                s.split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|e| err(format!("bad number {t:?}: {e}"))))
                    .collect()
            };
            let curve = |v: Vec<f64>| LoadCurve::new(v).map_err(|e| err(e.to_string()));
            let dist = match kind {
                "cat" => {
                    let mut atoms = Vec::new();
                    let mut probs = Vec::new();
                    for part in rest.split(';') {
                        let (p, c) = part.split_once(':').ok_or_else(|| err("atom needs `p : curve`".into()))?;
                        let p = numbers(p)?;
                        if p.len() != 1 {
                            return Err(err("one probability per atom".into()));
                        }
                        probs.push(p[0]);
                        atoms.push(curve(numbers(c)?)?);
                    }
                    OutcomeDist::categorical(atoms, probs)
                }
                "gauss" => {
                    let (m, v) = rest.split_once(';').ok_or_else(|| err("gauss needs `mean ; variances`".into()))?;
                    OutcomeDist::gaussian(curve(numbers(m)?)?, numbers(v)?)
                }
                other => return Err(err(format!("unknown kind {other:?}"))),
            }
            .map_err(|e| err(e.to_string()))?;
            if entries.len() <= i {
                entries.resize_with(i + 1, Vec::new);
            }
            if entries[i].len() <= j {
                entries[i].resize_with(j + 1, || None);
            }
            if entries[i][j].is_some() {
                return Err(err(format!("actor {} action {} given twice", i + 1, j + 1)));
            }
            entries[i][j] = Some(dist);
        }
        let mut dists = Vec::with_capacity(entries.len());
        for (i, row) in entries.into_iter().enumerate() {
            let row: Option<Vec<OutcomeDist>> = row.into_iter().collect();
            match row {
                Some(r) if !r.is_empty() => dists.push(r),
                _ => return Err(Error::Parse { line: 0, msg: format!("actor {} has missing actions", i + 1) }),
            }
        }
        Self::new(dists)
    }

    fn assignment_count(&self) -> u64 {
        self.dists.iter().fold(1u64, |acc, d| acc.saturating_mul(d.len() as u64))
    }

    fn check_assignment(&self, a: &ActionAssignment) -> Result<()> {
        a.check(&self.action_counts())
    }
}

impl Environment for BanditInstance {
    fn action_counts(&self) -> Vec<usize> {
        BanditInstance::action_counts(self)
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn sample<R: Rng + ?Sized>(&self, assignment: &ActionAssignment, rng: &mut R) -> Result<Vec<LoadCurve>> {
        self.check_assignment(assignment)?;
        Ok(assignment.actions().iter().enumerate().map(|(i, &j)| self.dists[i][j].sample(rng)).collect())
    }
}

/// `E[r | assignment]` computed exactly.
///
/// With one slot the reward is the sum of outcomes, so the expectation is the
/// sum of means for any distribution. Otherwise every outcome must be
/// categorical and the joint support (at most `support_limit` atoms) is
/// enumerated.
pub fn expected_reward_exact(instance: &BanditInstance, assignment: &ActionAssignment, support_limit: u64) -> Result<f64> {
    instance.check_assignment(assignment)?;
    let dists: Vec<&OutcomeDist> =
        assignment.actions().iter().enumerate().map(|(i, &j)| instance.dist(i, j)).collect();
    if instance.horizon == 1 {
        return Ok(dists.iter().map(|d| d.mean()[0]).sum());
    }
    let mut cats = Vec::with_capacity(dists.len());
    for d in &dists {
        match d {
            OutcomeDist::Categorical { atoms, probs } => cats.push((atoms, probs)),
            OutcomeDist::Gaussian { .. } => {
                return Err(Error::Argument(
                    "no exact expectation for multi-slot Gaussian outcomes; use a Monte Carlo estimate".into(),
                ))
            }
        }
    }
    let support = cats.iter().fold(1u64, |acc, (a, _)| acc.saturating_mul(a.len() as u64));
    if support > support_limit {
        return Err(Error::Size { what: "joint outcome support".into(), limit: support_limit });
    }
    let h = instance.horizon;
    let mut index = vec![0usize; cats.len()];
    let mut total = 0.0;
    let mut sums = vec![0.0; h];
    loop {
        let mut p = 1.0;
        sums.iter_mut().for_each(|s| *s = 0.0);
        for (i, &k) in index.iter().enumerate() {
            p *= cats[i].1[k];
            for (s, v) in sums.iter_mut().zip(cats[i].0[k].values()) {
                *s += v;
            }
        }
        if p > 0.0 {
            total += p * sums.iter().copied().fold(f64::INFINITY, f64::min);
        }
        // Odometer over the joint support, last actor fastest.
        let mut i = index.len();
        loop {
            if i == 0 {
                return Ok(total);
            }
            i -= 1;
            index[i] += 1;
            if index[i] < cats[i].0.len() {
                break;
            }
            index[i] = 0;
        }
    }
}

fn for_each_assignment(counts: &[usize], mut f: impl FnMut(&[usize]) -> Result<()>) -> Result<()> {
    let mut a = vec![0usize; counts.len()];
    loop {
        f(&a)?;
        let mut i = a.len();
        loop {
            if i == 0 {
                return Ok(());
            }
            i -= 1;
            a[i] += 1;
            if a[i] < counts[i] {
                break;
            }
            a[i] = 0;
        }
    }
}

/// Every assignment with its exact expected reward, in lexicographic order.
pub fn expected_rewards(instance: &BanditInstance, limit: u64) -> Result<Vec<(ActionAssignment, f64)>> {
    if instance.assignment_count() > limit {
        return Err(Error::Size { what: "assignment space".into(), limit });
    }
    let mut out = Vec::new();
    for_each_assignment(&instance.action_counts(), |a| {
        let a = ActionAssignment::new(a.to_vec());
        let r = expected_reward_exact(instance, &a, limit)?;
        out.push((a, r));
        Ok(())
    })?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSet {
    /// Maximal expected reward.
    pub value: f64,
    /// All maximizers within tolerance, in lexicographic order.
    pub optimal: Vec<ActionAssignment>,
    /// `suboptimal[i]`: actions of actor `i` absent from every optimum.
    pub suboptimal: Vec<Vec<usize>>,
}

impl OptimalSet {
    pub fn is_suboptimal(&self, actor: usize, action: usize) -> bool {
        self.suboptimal[actor].contains(&action)
    }
}

fn tie_tolerance(value: f64) -> f64 {
    OPT_TOL * value.abs().max(1.0)
}

pub fn optimal_set(instance: &BanditInstance) -> Result<OptimalSet> {
    optimal_set_from(instance, &expected_rewards(instance, DEFAULT_SUPPORT_LIMIT)?)
}

fn optimal_set_from(instance: &BanditInstance, rewards: &[(ActionAssignment, f64)]) -> Result<OptimalSet> {
    let value = rewards.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let tol = tie_tolerance(value);
    let optimal: Vec<ActionAssignment> =
        rewards.iter().filter(|r| r.1 >= value - tol).map(|r| r.0.clone()).collect();
    let suboptimal = instance
        .action_counts()
        .iter()
        .enumerate()
        .map(|(i, &k)| (0..k).filter(|&j| !optimal.iter().any(|a| a.get(i) == j)).collect())
        .collect();
    Ok(OptimalSet { value, optimal, suboptimal })
}

/// Per-slot Gaussian divergence `KL(N(m1, v1) || N(m2, v2))` in nats.
pub fn kl_gaussian(m1: f64, v1: f64, m2: f64, v2: f64) -> Result<f64> {
    if !(v1 > 0.0 && v2 > 0.0) || !v1.is_finite() || !v2.is_finite() {
        return Err(Error::Argument(format!("variances must be positive, got {v1} and {v2}")));
    }
    let d = m1 - m2;
    Ok(0.5 * (v2 / v1).ln() + (v1 + d * d) / (2.0 * v2) - 0.5)
}

/// `Σ p ln(p / q)` with `0 ln 0 = 0`. Returns `f64::INFINITY` when `q`
/// vanishes where `p` does not.
pub fn kl_categorical(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension(format!("{} vs {} probabilities", p.len(), q.len())));
    }
    if p.iter().chain(q).any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Argument("probabilities must be finite and >= 0".into()));
    }
    let mut kl = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Ok(f64::INFINITY);
        }
        kl += a * (a / b).ln();
    }
    Ok(kl.max(0.0))
}

/// Divergence between two outcome distributions of the same actor.
///
/// Categorical pairs are compared on the union of their atoms (curves equal
/// bit for bit are the same atom). Gaussian pairs sum per-slot divergences,
/// with zero-variance slots treated as point masses. A categorical and a
/// Gaussian law are mutually singular, which gives `f64::INFINITY`.
pub fn kl_outcome(p: &OutcomeDist, q: &OutcomeDist) -> Result<f64> {
    if p.horizon() != q.horizon() {
        return Err(Error::Dimension("outcome distributions differ in horizon".into()));
    }
    match (p, q) {
        (OutcomeDist::Categorical { atoms: pa, probs: pp }, OutcomeDist::Categorical { atoms: qa, probs: qp }) => {
            let mut support: Vec<&LoadCurve> = Vec::new();
            for a in pa.iter().chain(qa) {
                if !support.contains(&a) {
                    support.push(a);
                }
            }
            let mass = |atoms: &[LoadCurve], probs: &[f64]| -> Vec<f64> {
                support
                    .iter()
                    .map(|s| atoms.iter().zip(probs).filter(|(a, _)| a == s).map(|(_, p)| p).sum())
                    .collect()
            };
            kl_categorical(&mass(pa, pp), &mass(qa, qp))
        }
        (OutcomeDist::Gaussian { mean: m1, var: v1 }, OutcomeDist::Gaussian { mean: m2, var: v2 }) => {
            let mut kl = 0.0;
            for h in 0..m1.horizon() {
                kl += match (v1[h] > 0.0, v2[h] > 0.0) {
                    (true, true) => kl_gaussian(m1[h], v1[h], m2[h], v2[h])?,
                    (false, false) if m1[h] == m2[h] => 0.0,
                    _ => return Ok(f64::INFINITY),
                };
            }
            Ok(kl)
        }
        _ => Ok(f64::INFINITY),
    }
}

/// Sparse nonnegative weights over joint assignments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MixedAssignment {
    pub weights: Vec<(ActionAssignment, f64)>,
}

impl MixedAssignment {
    pub fn weight(&self, a: &ActionAssignment) -> f64 {
        self.weights.iter().filter(|(b, _)| b == a).map(|(_, w)| w).sum()
    }

    /// Total weight of assignments giving `action` to `actor`.
    pub fn coverage(&self, actor: usize, action: usize) -> f64 {
        self.weights.iter().filter(|(a, _)| a.get(actor) == action).map(|(_, w)| w).sum()
    }
}

/// One coverage requirement: actor `actor` must apply `action` with total
/// weight at least `1 / kl`.
#[derive(Debug, Clone, PartialEq)]
pub struct Requirement {
    pub actor: usize,
    pub action: usize,
    /// The optimal-assignment action it is compared against.
    pub reference: usize,
    pub kl: f64,
}

impl Requirement {
    pub fn weight(&self) -> f64 {
        1.0 / self.kl
    }
}

/// The cheapest feasible mixed assignment and everything it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBound {
    pub weights: MixedAssignment,
    pub rho: f64,
    pub requirements: Vec<Requirement>,
    pub optimal: OptimalSet,
}

/// Coverage requirement of every suboptimal action. When several optimal
/// assignments exist, each action is compared with the optimal action of its
/// actor that gives the smallest divergence.
pub fn requirements(instance: &BanditInstance, optimal: &OptimalSet) -> Result<Vec<Requirement>> {
    let mut out = Vec::new();
    for (i, subs) in optimal.suboptimal.iter().enumerate() {
        let mut refs: Vec<usize> = optimal.optimal.iter().map(|a| a.get(i)).collect();
        refs.sort_unstable();
        refs.dedup();
        for &j in subs {
            let mut best: Option<(usize, f64)> = None;
            for &r in &refs {
                let kl = kl_outcome(instance.dist(i, j), instance.dist(i, r))?;
                if best.is_none_or(|(_, b)| kl < b) {
                    best = Some((r, kl));
                }
            }
            let (reference, kl) = best.expect("at least one optimal assignment");
            if kl <= 0.0 {
                return Err(Error::UnboundedRequirement { actor: i, action: j });
            }
            out.push(Requirement { actor: i, action: j, reference, kl });
        }
    }
    Ok(out)
}

/// Solves `min Σ_a w(a) ρ(a)` subject to `Σ_{a: a^i = j} w(a) >= 1/KL` for
/// every suboptimal `(i, j)`, `w >= 0`.
pub fn lower_bound_weights(instance: &BanditInstance) -> Result<LowerBound> {
    lower_bound_weights_with(instance, DEFAULT_SUPPORT_LIMIT, |_| true)
}

/// As [`lower_bound_weights`], keeping only the requirements accepted by
/// `keep`.
pub fn lower_bound_weights_with(
    instance: &BanditInstance,
    limit: u64,
    keep: impl Fn(&Requirement) -> bool,
) -> Result<LowerBound> {
    let rewards = expected_rewards(instance, limit)?;
    let optimal = optimal_set_from(instance, &rewards)?;
    let requirements: Vec<Requirement> = requirements(instance, &optimal)?.into_iter().filter(|r| keep(r)).collect();
    // Infinite divergence means the requirement is void.
    let active: Vec<&Requirement> = requirements.iter().filter(|r| r.kl.is_finite()).collect();
    if active.is_empty() {
        return Ok(LowerBound { weights: MixedAssignment::default(), rho: 0.0, requirements, optimal });
    }
    // Only assignments covering some active requirement can carry weight.
    let columns: Vec<&(ActionAssignment, f64)> =
        rewards.iter().filter(|(a, _)| active.iter().any(|r| a.get(r.actor) == r.action)).collect();
    let costs: Vec<f64> = columns.iter().map(|(_, v)| (optimal.value - v).max(0.0)).collect();
    let constraints: Vec<Constraint> = active
        .iter()
        .map(|r| {
            let row = columns.iter().map(|(a, _)| if a.get(r.actor) == r.action { 1.0 } else { 0.0 }).collect();
            Constraint::new(row, Sense::Ge, r.weight())
        })
        .collect();
    let bounds = vec![(0.0, f64::INFINITY); columns.len()];
    let sol = solve_lp(&costs, &constraints, &bounds)?;
    let weights = columns
        .iter()
        .zip(&sol.x)
        .filter(|(_, &w)| w > 0.0)
        .map(|((a, _), &w)| (a.clone(), w))
        .collect();
    Ok(LowerBound { weights: MixedAssignment { weights }, rho: sol.objective, requirements, optimal })
}

/// Single-bandit constant `Σ_a (E[r | ã] - E[r | a]) / KL(a, ã)` of a
/// one-actor instance.
pub fn lai_robbins_bound(instance: &BanditInstance) -> Result<f64> {
    if instance.actors() != 1 {
        return Err(Error::Argument(format!("single-bandit constant needs one actor, got {}", instance.actors())));
    }
    actor_single_bandit_bound(instance, 0)
}

/// Single-bandit constant of actor `actor` when every other actor keeps its
/// action from the lexicographically first optimal assignment: the sum over
/// the actor's suboptimal actions of regret over divergence.
pub fn actor_single_bandit_bound(instance: &BanditInstance, actor: usize) -> Result<f64> {
    if actor >= instance.actors() {
        return Err(Error::Argument(format!("no actor {}", actor + 1)));
    }
    let optimal = optimal_set(instance)?;
    let reqs = requirements(instance, &optimal)?;
    let base = optimal.optimal[0].clone();
    let mut total = 0.0;
    for r in reqs.iter().filter(|r| r.actor == actor && r.kl.is_finite()) {
        let mut a = base.actions().to_vec();
        a[actor] = r.action;
        let gap = optimal.value - expected_reward_exact(instance, &ActionAssignment::new(a), DEFAULT_SUPPORT_LIMIT)?;
        total += gap.max(0.0) / r.kl;
    }
    Ok(total)
}
