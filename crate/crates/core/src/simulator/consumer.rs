//! Consumer load model: unconditional noise, curtailable load and one shiftable block.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use super::actions::IntervalAction;
use super::{RecurrenceMode, SimParams};
use crate::curve::LoadCurve;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ConsumerModel {
    /// Scale of the unconditional load reduction noise (W).
    pub sigma_u: f64,
    /// AR(1) smoothing of the noise across slots, in `[0, 1]`.
    pub z: f64,
    /// Load suspended on every requested slot (W).
    pub curtailable: f64,
    /// Height of the shiftable block (W).
    pub shift_magnitude: f64,
    /// First slot number of the shiftable block; may be `<= 0`.
    pub window_start: i64,
    /// Block length in slots, at least 1.
    pub window_len: usize,
    pub cooperative: bool,
}

/// How a consumer answers a request with its shiftable block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShiftDecision {
    /// First slot number of the chosen placement.
    pub placement_start: i64,
    /// Overlap (slots) of the chosen placement with the request.
    pub overlap: usize,
    /// The block is dropped instead of moved.
    pub curtailed: bool,
}

impl ConsumerModel {
    pub fn window_end(&self) -> i64 {
        self.window_start + self.window_len as i64 - 1
    }

    fn in_window(&self, slot: i64) -> bool {
        slot >= self.window_start && slot <= self.window_end()
    }

    /// Picks the placement with the least overlap with `request` among all
    /// integer offsets that stay inside the original window united with
    /// `[1, H]`. The original placement is kept when it already attains the
    /// least overlap; otherwise ties go to the smallest start. A cooperative
    /// consumer whose best overlap is still positive curtails the block.
    pub fn shift_decision(&self, request: IntervalAction, horizon: usize) -> ShiftDecision {
        let h = horizon as i64;
        let len = self.window_len as i64;
        let lo = self.window_start.min(1);
        let hi = self.window_end().max(h);
        let allowed = |s: i64| self.in_window(s) || (1..=h).contains(&s);
        let overlap_at = |p: i64| (p..p + len).filter(|&s| request.contains(s)).count();
        let original = overlap_at(self.window_start);
        let mut best = (self.window_start, original);
        for p in lo..=hi - len + 1 {
            if !(p..p + len).all(allowed) {
                continue;
            }
            let overlap = overlap_at(p);
            if overlap < best.1 || (overlap == best.1 && best.1 < original && p < best.0) {
                best = (p, overlap);
            }
        }
        let (placement_start, overlap) = best;
        ShiftDecision { placement_start, overlap, curtailed: overlap > 0 && self.cooperative }
    }

    /// Shiftable-block contribution for slot numbers `from..=to`.
    ///
    /// `+magnitude` where the block originally sat, `-magnitude` where it was
    /// moved to (unless curtailed).
    fn shift_contribution(&self, decision: ShiftDecision, from: i64, to: i64) -> Vec<f64> {
        let len = self.window_len as i64;
        (from..=to)
            .map(|s| {
                let mut v = 0.0;
                if self.in_window(s) {
                    v += self.shift_magnitude;
                }
                if !decision.curtailed && s >= decision.placement_start && s < decision.placement_start + len {
                    v -= self.shift_magnitude;
                }
                v
            })
            .collect()
    }

    /// Load-reduction contribution of the shiftable block on `[1, H]`.
    pub fn shiftable_response(&self, request: IntervalAction, horizon: usize) -> LoadCurve {
        let d = self.shift_decision(request, horizon);
        LoadCurve::new(self.shift_contribution(d, 1, horizon as i64)).expect("finite")
    }

    /// The noise-free part of the response: curtailable plus shiftable load.
    pub fn deterministic_response(&self, request: IntervalAction, horizon: usize) -> LoadCurve {
        let mut curve = self.shiftable_response(request, horizon);
        for s in request.start..=request.end {
            curve.values_mut()[s - 1] += self.curtailable;
        }
        curve
    }

    /// One realisation of the unconditional load reduction `u(1..H)`.
    pub fn unconditional_curve<R: Rng + ?Sized>(
        &self,
        horizon: usize,
        mode: RecurrenceMode,
        rng: &mut R,
    ) -> LoadCurve {
        let innovation = match mode {
            RecurrenceMode::ExactAr => (1.0 - self.z * self.z).max(0.0).sqrt(),
            RecurrenceMode::PaperLiteral => 1.0 - self.z,
        };
        let mut values = Vec::with_capacity(horizon);
        let mut prev = 0.0;
        for h in 0..horizon {
            let e: f64 = rng.sample(StandardNormal);
            let u = if h == 0 {
                self.sigma_u * e
            } else {
                self.z * prev + innovation * self.sigma_u * e
            };
            values.push(u);
            prev = u;
        }
        LoadCurve::new(values).expect("finite noise")
    }
}

/// Draws `params.actors` independent consumers.
///
/// The block length is drawn uniformly in `[f_min·H, f_max·H]`, rounded to the
/// nearest slot count and clamped to `[ceil(f_min·H), floor(f_max·H)]` (at
/// least 1). The start time is drawn uniformly in `[-L/2, H - L/2]` and its
/// slot is `floor(start) + 1`.
pub fn sample_population<R: Rng + ?Sized>(params: &SimParams, rng: &mut R) -> Vec<ConsumerModel> {
    let h = params.horizon as f64;
    let len_lo = ((params.shift_len_min_frac * h).ceil() as usize).max(1);
    let len_hi = ((params.shift_len_max_frac * h).floor() as usize).max(len_lo);
    (0..params.actors)
        .map(|_| {
            let curtailable = uniform(rng, params.curtail_min_w, params.curtail_max_w);
            let shift_magnitude = uniform(rng, params.shift_magnitude_min_w, params.shift_magnitude_max_w);
            let len_real = uniform(rng, params.shift_len_min_frac * h, params.shift_len_max_frac * h);
            let window_len = (len_real.round().max(1.0) as usize).clamp(len_lo, len_hi);
            let l = window_len as f64;
            let start_real = uniform(rng, -0.5 * l, h - 0.5 * l);
            let cooperative = rng.random::<f64>() < params.coop_prob;
            ConsumerModel {
                sigma_u: params.sigma_u,
                z: params.z,
                curtailable,
                shift_magnitude,
                window_start: start_real.floor() as i64 + 1,
                window_len,
                cooperative,
            }
        })
        .collect()
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

const POPULATION_HEADER: &str = "# sigma_u,z,curtailable,magnitude,window_start,window_len,cooperative";

/// Writes one consumer per line with full float precision.
pub fn write_population<W: Write>(consumers: &[ConsumerModel], mut out: W) -> Result<()> {
    writeln!(out, "{POPULATION_HEADER}")?;
    for c in consumers {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.sigma_u,
            c.z,
            c.curtailable,
            c.shift_magnitude,
            c.window_start,
            c.window_len,
            u8::from(c.cooperative)
        )?;
    }
    Ok(())
}

pub fn read_population<R: BufRead>(input: R) -> Result<Vec<ConsumerModel>> {
    let mut out = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let perr = |msg: String| Error::Parse { line: lineno, msg };
        let f: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if f.len() != 7 {
            return Err(perr(format!("expected 7 fields, got {}", f.len())));
        }
        let real = |s: &str| s.parse::<f64>().map_err(|e| perr(format!("bad number {s:?}: {e}")));
        let window_len: usize = f[5].parse().map_err(|e| perr(format!("bad window length: {e}")))?;
        if window_len == 0 {
            return Err(perr("window length must be at least 1".into()));
        }
        let consumer = ConsumerModel {
            sigma_u: real(f[0])?,
            z: real(f[1])?,
            curtailable: real(f[2])?,
            shift_magnitude: real(f[3])?,
            window_start: f[4].parse().map_err(|e| perr(format!("bad window start: {e}")))?,
            window_len,
            cooperative: match f[6] {
                "1" | "true" => true,
                "0" | "false" => false,
                other => return Err(perr(format!("bad cooperative flag {other:?}"))),
            },
        };
        if !(0.0..=1.0).contains(&consumer.z) || consumer.sigma_u < 0.0 {
            return Err(perr("z must lie in [0,1] and sigma_u be nonnegative".into()));
        }
        out.push(consumer);
    }
    Ok(out)
}
