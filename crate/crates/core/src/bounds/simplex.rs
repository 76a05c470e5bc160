//! Dense two-phase simplex with Bland's rule.

use crate::error::{Error, Result};

/// Pivot and feasibility tolerance.
pub const LP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// `row · x  (sense)  rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coefficients: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coefficients: Vec<f64>, sense: Sense, rhs: f64) -> Self {
        Self { coefficients, sense, rhs }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

/// Minimizes `costs · x` subject to `constraints` and `lower <= x <= upper`.
///
/// Lower bounds may be `-inf` (the variable is split) and upper bounds `+inf`.
/// Entering and leaving variables follow Bland's rule, so the pivot sequence
/// is deterministic and cannot cycle.
pub fn solve_lp(costs: &[f64], constraints: &[Constraint], bounds: &[(f64, f64)]) -> Result<LpSolution> {
    let n = costs.len();
    if bounds.len() != n {
        return Err(Error::Dimension(format!("{} bounds for {} variables", bounds.len(), n)));
    }
    if let Some(c) = constraints.iter().find(|c| c.coefficients.len() != n) {
        return Err(Error::Dimension(format!("constraint with {} coefficients for {} variables", c.coefficients.len(), n)));
    }
    let finite = costs.iter().all(|c| c.is_finite())
        && constraints.iter().all(|c| c.rhs.is_finite() && c.coefficients.iter().all(|a| a.is_finite()));
    if !finite {
        return Err(Error::Argument("LP data must be finite".into()));
    }
    for (j, &(lo, hi)) in bounds.iter().enumerate() {
        if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
            return Err(Error::Argument(format!("bad bounds [{lo}, {hi}] for variable {}", j + 1)));
        }
    }

    // Substitute x_j = lo + y (or y⁺ - y⁻ when lo = -inf, or hi - y when only
    // the upper bound is finite) so every internal variable is >= 0.
    enum Map {
        Shift(f64, usize),
        Mirror(f64, usize),
        Split(usize, usize),
    }
    let mut maps = Vec::with_capacity(n);
    let mut cols = 0usize;
    for &(lo, hi) in bounds {
        if lo.is_finite() {
            maps.push(Map::Shift(lo, cols));
            cols += 1;
        } else if hi.is_finite() {
            maps.push(Map::Mirror(hi, cols));
            cols += 1;
        } else {
            maps.push(Map::Split(cols, cols + 1));
            cols += 2;
        }
    }
    let mut c = vec![0.0; cols];
    for (j, m) in maps.iter().enumerate() {
        match *m {
            Map::Shift(_, k) => c[k] = costs[j],
            Map::Mirror(_, k) => c[k] = -costs[j],
            Map::Split(p, q) => {
                c[p] = costs[j];
                c[q] = -costs[j];
            }
        }
    }
    let translate = |coef: &[f64], rhs: f64| -> (Vec<f64>, f64) {
        let mut row = vec![0.0; cols];
        let mut rhs = rhs;
        for (j, m) in maps.iter().enumerate() {
            match *m {
                Map::Shift(lo, k) => {
                    row[k] = coef[j];
                    rhs -= coef[j] * lo;
                }
                Map::Mirror(hi, k) => {
                    row[k] = -coef[j];
                    rhs -= coef[j] * hi;
                }
                Map::Split(p, q) => {
                    row[p] = coef[j];
                    row[q] = -coef[j];
                }
            }
        }
        (row, rhs)
    };
    let mut rows: Vec<(Vec<f64>, Sense, f64)> =
        constraints.iter().map(|k| {
            let (r, b) = translate(&k.coefficients, k.rhs);
            (r, k.sense, b)
        }).collect();
    for (j, &(lo, hi)) in bounds.iter().enumerate() {
        if lo.is_finite() && hi.is_finite() {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let (r, b) = translate(&e, hi);
            rows.push((r, Sense::Le, b));
        }
    }

    let y = Tableau::solve(&c, rows)?;
    let x: Vec<f64> = maps
        .iter()
        .map(|m| match *m {
            Map::Shift(lo, k) => lo + y.0[k],
            Map::Mirror(hi, k) => hi - y.0[k],
            Map::Split(p, q) => y.0[p] - y.0[q],
        })
        .collect();
    let objective = costs.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
    Ok(LpSolution { x, objective, pivots: y.1 })
}

/// Standard form `min c·y, A y = b, y >= 0, b >= 0` with slack and
/// artificial columns appended after the structural ones.
struct Tableau {
    m: usize,
    width: usize,
    a: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn solve(c: &[f64], rows: Vec<(Vec<f64>, Sense, f64)>) -> Result<(Vec<f64>, usize)> {
        let n = c.len();
        let m = rows.len();
        let slacks = rows.iter().filter(|r| r.1 != Sense::Eq).count();
        let artificial_from = n + slacks;
        let width = artificial_from + m + 1; // last column holds b
        let mut t = Tableau { m, width, a: vec![0.0; m * width], basis: vec![0; m], pivots: 0 };
        let mut slack = n;
        for (r, (coef, sense, rhs)) in rows.into_iter().enumerate() {
            let flip = rhs < 0.0;
            let sgn = if flip { -1.0 } else { 1.0 };
            for (j, v) in coef.iter().enumerate() {
                t.a[r * width + j] = sgn * v;
            }
            t.a[r * width + width - 1] = sgn * rhs;
            let mut basic = None;
            match sense {
                Sense::Eq => {}
                Sense::Le | Sense::Ge => {
                    let s = if sense == Sense::Le { 1.0 } else { -1.0 } * sgn;
                    t.a[r * width + slack] = s;
                    if s > 0.0 {
                        basic = Some(slack);
                    }
                    slack += 1;
                }
            }
            t.basis[r] = match basic {
                Some(j) => j,
                None => {
                    t.a[r * width + artificial_from + r] = 1.0;
                    artificial_from + r
                }
            };
        }

        // Phase 1: minimize the sum of artificials.
        let mut phase1 = vec![0.0; width - 1];
        for j in artificial_from..width - 1 {
            if t.basis.contains(&j) {
                phase1[j] = 1.0;
            }
        }
        t.optimize(&phase1, width - 1)?;
        let infeas: f64 = (0..m).filter(|&r| t.basis[r] >= artificial_from).map(|r| t.rhs(r)).sum();
        let scale = 1.0 + (0..m).map(|r| t.rhs(r).abs()).fold(0.0, f64::max);
        if infeas > LP_TOL * scale {
            return Err(Error::Infeasible);
        }
        // Drive zero-level artificials out of the basis where possible.
        for r in 0..m {
            if t.basis[r] >= artificial_from {
                if let Some(j) = (0..artificial_from).find(|&j| t.at(r, j).abs() > LP_TOL) {
                    t.pivot(r, j);
                }
            }
        }

        // Phase 2 over structural and slack columns only.
        let mut phase2 = vec![0.0; width - 1];
        phase2[..n].copy_from_slice(c);
        t.optimize(&phase2, artificial_from)?;

        let mut y = vec![0.0; n];
        for r in 0..m {
            if t.basis[r] < n {
                y[t.basis[r]] = t.rhs(r).max(0.0);
            }
        }
        Ok((y, t.pivots))
    }

    fn at(&self, r: usize, j: usize) -> f64 {
        self.a[r * self.width + j]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.a[r * self.width + self.width - 1]
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let w = self.width;
        let p = self.at(r, j);
        for v in &mut self.a[r * w..(r + 1) * w] {
            *v /= p;
        }
        let (before, rest) = self.a.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let f = row[j];
            if f != 0.0 {
                for (x, y) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * y;
                }
                row[j] = 0.0;
            }
        }
        self.basis[r] = j;
        self.pivots += 1;
    }

    /// Simplex iterations on `cost`; columns `>= allowed` never enter.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> Result<()> {
        let cap = 50_000 + 200 * (self.m + self.width);
        for _ in 0..cap {
            // Bland: the lowest-index column with negative reduced cost.
            let entering = (0..allowed).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let reduced = cost[j] - (0..self.m).map(|r| cost[self.basis[r]] * self.at(r, j)).sum::<f64>();
                reduced < -LP_TOL
            });
            let Some(j) = entering else { return Ok(()) };
            // Ratio test; ties go to the lowest basic index.
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.m {
                let a = self.at(r, j);
                if a > LP_TOL {
                    let ratio = self.rhs(r) / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((q, best)) => {
                            if ratio < best - LP_TOL || (ratio <= best + LP_TOL && self.basis[r] < self.basis[q]) {
                                Some((r, ratio.min(best)))
                            } else {
                                Some((q, best))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else { return Err(Error::Unbounded) };
            self.pivot(r, j);
        }
        Err(Error::Solver("simplex iteration cap reached".into()))
    }
}
