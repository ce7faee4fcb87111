//! The episode strategy that couples two walks started `d` apart until their
//! gap `G = X - X'` lands in `[0, eps]`.
//!
//! Signs are coupled equal except at two indices per episode, where they are
//! anti-coupled: at `n` (past which every gap `|a_j - a_{j-1}|` is below
//! `delta/2`) and at the first `m > n` with `a_m - a_n` in `[x - delta/2, x]`.
//! Equal signs leave `G` unchanged, so only those indices are simulated.
//! Indices grow geometrically from one episode to the next and can pass
//! `10^26`, hence `u128` indices and double-double values.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::error::{config, Error, Result};
use crate::rng::{stream, SignSource};
use crate::seqgen::{generate, Family, StepSequenceSpec};
use crate::stats::{wilson, Z_99};

pub const DEFAULT_MAX_INDEX_LOG2: u32 = 100;

/// Relative accuracy assumed for closed-form values.
const CLOSED_FORM_REL: f64 = 1e-29;

/// Step sizes as seen by the coupling game.
#[derive(Clone, Debug)]
pub enum StepModel {
    /// `a_n = n^alpha` with `0 < alpha < 1`, evaluated in double-double.
    Power { alpha: f64, max_index: u128 },
    /// Pre-generated values `a_1..a_len` with suffix maxima of the gaps.
    Table { values: Vec<f64>, suffix_gap: Vec<f64> },
}

fn tf(n: u128) -> TwoFloat {
    TwoFloat::from(n)
}

impl StepModel {
    pub fn from_spec(spec: &StepSequenceSpec, horizon: u64) -> Result<Self> {
        Self::from_spec_with_limit(spec, horizon, DEFAULT_MAX_INDEX_LOG2)
    }

    pub fn from_spec_with_limit(spec: &StepSequenceSpec, horizon: u64, max_index_log2: u32) -> Result<Self> {
        spec.validate()?;
        if max_index_log2 == 0 || max_index_log2 > 120 {
            return Err(config("max_index_log2 must lie in 1..=120"));
        }
        match (spec.family, spec.alpha) {
            (Family::Power, Some(alpha)) if !spec.floor_values && alpha > 0.0 && alpha < 1.0 => {
                Ok(StepModel::Power { alpha, max_index: 1u128 << max_index_log2 })
            }
            _ => {
                let n = usize::try_from(horizon).map_err(|_| config("horizon too large"))?;
                Ok(Self::table(generate(spec, n)?))
            }
        }
    }

    pub fn table(values: Vec<f64>) -> Self {
        let mut suffix_gap = vec![0.0; values.len()];
        let mut run = 0.0f64;
        for i in (1..values.len()).rev() {
            run = run.max((values[i] - values[i - 1]).abs());
            suffix_gap[i] = run;
        }
        StepModel::Table { values, suffix_gap }
    }

    pub fn max_index(&self) -> u128 {
        match self {
            StepModel::Power { max_index, .. } => *max_index,
            StepModel::Table { values, .. } => values.len() as u128,
        }
    }

    /// `a_n` for `n >= 1`.
    pub fn value(&self, n: u128) -> TwoFloat {
        match self {
            StepModel::Power { alpha, .. } => {
                if *alpha == 0.5 {
                    tf(n).sqrt()
                } else if *alpha == 1.0 / 3.0 {
                    tf(n).cbrt()
                } else {
                    tf(n).powf(TwoFloat::from(*alpha))
                }
            }
            StepModel::Table { values, .. } => TwoFloat::from(values[(n - 1) as usize]),
        }
    }

    fn gap(&self, n: u128) -> TwoFloat {
        match self {
            StepModel::Power { alpha, .. } if *alpha == 0.5 => {
                TwoFloat::from(1.0) / (tf(n).sqrt() + tf(n - 1).sqrt())
            }
            _ => self.value(n) - self.value(n - 1),
        }
    }

    fn relative_accuracy(&self) -> f64 {
        match self {
            StepModel::Power { .. } => CLOSED_FORM_REL,
            StepModel::Table { .. } => f64::EPSILON,
        }
    }

    /// First `n >= from` (and `n >= 2`) with `|a_j - a_{j-1}| < half_delta`
    /// for every `j >= n` up to the index limit.
    fn settle(&self, from: u128, half_delta: f64) -> Option<u128> {
        let lo = from.max(2);
        let hi = self.max_index();
        if lo > hi {
            return None;
        }
        match self {
            StepModel::Power { .. } => {
                // gaps of n^alpha decrease for alpha < 1
                if self.gap(hi) >= half_delta {
                    return None;
                }
                Some(first_true(lo, hi, |n| self.gap(n) < half_delta))
            }
            StepModel::Table { suffix_gap, .. } => {
                let ok = |n: u128| suffix_gap[(n - 1) as usize] < half_delta;
                if !ok(hi) {
                    return None;
                }
                Some(first_true(lo, hi, ok))
            }
        }
    }

    /// First `m > n` with `a_m - base` in `[lo, hi]`.
    fn reach(&self, n: u128, base: TwoFloat, lo: TwoFloat, hi: TwoFloat) -> Option<u128> {
        let limit = self.max_index();
        if n >= limit {
            return None;
        }
        match self {
            StepModel::Power { .. } => {
                if self.value(limit) - base < lo {
                    return None;
                }
                let m = first_true(n + 1, limit, |m| self.value(m) - base >= lo);
                (self.value(m) - base <= hi).then_some(m)
            }
            StepModel::Table { values, .. } => (n + 1..=limit).find(|&m| {
                let v = TwoFloat::from(values[(m - 1) as usize]) - base;
                v >= lo && v <= hi
            }),
        }
    }
}

/// Smallest `x` in `[lo, hi]` with `pred(x)`, given `pred(hi)` and that `pred`
/// is monotone.
fn first_true(lo: u128, hi: u128, pred: impl Fn(u128) -> bool) -> u128 {
    let (mut lo, mut hi) = (lo, hi);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub n: u128,
    /// Absent when the game was already won at `n`.
    pub m: Option<u128>,
    pub delta: f64,
    pub x: f64,
    pub sign_n: i8,
    pub sign_m: Option<i8>,
    pub gap_after: f64,
    pub won: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledPair {
    pub offset_d: f64,
    pub epsilon_target: f64,
    pub episodes_used: u64,
    pub final_gap: f64,
    pub success: bool,
    pub episodes: Vec<EpisodeRecord>,
}

impl CoupledPair {
    pub fn final_index(&self) -> u128 {
        self.episodes.last().map(|e| e.m.unwrap_or(e.n)).unwrap_or(0)
    }
}

/// Plays the game with signs from `stream(seed, run)`.
pub fn simulate_coupling(model: &StepModel, d: f64, epsilon: f64, seed: u64, run: u64) -> Result<CoupledPair> {
    if !(epsilon > 0.0 && epsilon.is_finite()) || !d.is_finite() {
        return Err(config("need finite d and epsilon > 0"));
    }
    let mut signs = SignSource::new(stream(seed, run));
    let eps = TwoFloat::from(epsilon);
    let zero = TwoFloat::from(0.0);
    let won = |g: TwoFloat| g >= zero && g <= eps;
    let mut g = TwoFloat::from(d);
    let mut episodes = Vec::new();
    let mut prev_m = 0u128;
    while !won(g) {
        let delta = epsilon.min(g.abs().hi());
        let half = delta / 2.0;
        let n = model.settle(prev_m + 1, half).ok_or_else(|| {
            Error::Infeasible(format!(
                "episode {}: no index in ({prev_m}, {}] after which all gaps are below delta/2 (delta = {delta})",
                episodes.len() + 1,
                model.max_index()
            ))
        })?;
        let x = if g > zero { g / 2.0 } else { -g / 2.0 + half };
        let a_n = model.value(n);
        let m = model.reach(n, a_n, x - half, x).ok_or_else(|| {
            Error::Infeasible(format!(
                "episode {}: no index in ({n}, {}] with a_m - a_n in [x - delta/2, x] (delta = {delta}, x = {})",
                episodes.len() + 1,
                model.max_index(),
                x.hi()
            ))
        })?;
        let a_m = model.value(m);
        if a_m.hi() * model.relative_accuracy() > half * 1e-3 {
            return Err(Error::Infeasible(format!(
                "episode {}: a_m = {} too large to resolve delta = {delta}",
                episodes.len() + 1,
                a_m.hi()
            )));
        }
        let sign_n = signs.next_sign();
        g += a_n * (2.0 * sign_n as f64);
        if won(g) {
            episodes.push(EpisodeRecord {
                n,
                m: None,
                delta,
                x: x.hi(),
                sign_n,
                sign_m: None,
                gap_after: g.hi() + g.lo(),
                won: true,
            });
            break;
        }
        let sign_m = signs.next_sign();
        g += a_m * (2.0 * sign_m as f64);
        let w = won(g);
        episodes.push(EpisodeRecord {
            n,
            m: Some(m),
            delta,
            x: x.hi(),
            sign_n,
            sign_m: Some(sign_m),
            gap_after: g.hi() + g.lo(),
            won: w,
        });
        prev_m = m;
    }
    Ok(CoupledPair {
        offset_d: d,
        epsilon_target: epsilon,
        episodes_used: episodes.len() as u64,
        final_gap: g.hi() + g.lo(),
        success: true,
        episodes,
    })
}

/// Runs both walks step by step from `X_0 = 0`, `X'_0 = -d`, with signs equal
/// except at the recorded anti-coupled indices, and returns `X - X'` at the
/// last scheduled index. Signs at ordinary indices come from `filler_seed`.
pub fn replay_gap(model: &StepModel, pair: &CoupledPair, filler_seed: u64, max_steps: u64) -> Result<f64> {
    let last = pair.final_index();
    if last > max_steps as u128 {
        return Err(Error::Infeasible(format!("replay needs {last} steps > {max_steps}")));
    }
    let mut anti: Vec<(u128, i8)> = Vec::new();
    for e in &pair.episodes {
        anti.push((e.n, e.sign_n));
        if let (Some(m), Some(s)) = (e.m, e.sign_m) {
            anti.push((m, s));
        }
    }
    let mut filler = SignSource::new(stream(filler_seed, 0));
    let (mut x, mut xp) = (0.0f64, -pair.offset_d);
    let mut next = anti.iter().peekable();
    for i in 1..=last {
        let a = model.value(i).hi();
        let (s, sp) = match next.peek() {
            Some(&&(j, s)) if j == i => {
                next.next();
                (s, -s)
            }
            _ => {
                let s = filler.next_sign();
                (s, s)
            }
        };
        x += s as f64 * a;
        xp += sp as f64 * a;
    }
    Ok(x - xp)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingRun {
    pub episodes_used: u64,
    pub final_gap: f64,
    pub final_index: u128,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingSummary {
    pub d: f64,
    pub epsilon: f64,
    pub runs: u64,
    pub successes: u64,
    pub episodes_total: u64,
    pub episode_wins: u64,
    pub per_episode_rate: f64,
    pub per_episode_sigma: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    pub max_episodes: u64,
    pub max_index: u128,
    pub per_run: Vec<CouplingRun>,
}

pub(super) fn coupling_experiment(
    model: &StepModel,
    d: f64,
    epsilon: f64,
    seed: u64,
    runs: u64,
    max_index_log2: u32,
) -> Result<CouplingSummary> {
    let model = match model {
        StepModel::Power { alpha, .. } => StepModel::Power {
            alpha: *alpha,
            max_index: 1u128 << max_index_log2.clamp(1, 120),
        },
        other => other.clone(),
    };
    let pairs: Vec<Result<CoupledPair>> = (0..runs)
        .into_par_iter()
        .map(|r| simulate_coupling(&model, d, epsilon, seed, r))
        .collect();
    let mut per_run = Vec::with_capacity(runs as usize);
    let (mut episodes_total, mut episode_wins, mut successes, mut max_episodes, mut max_index) = (0, 0, 0, 0, 0);
    for p in pairs {
        let p = p?;
        episodes_total += p.episodes_used;
        episode_wins += p.episodes.iter().filter(|e| e.won).count() as u64;
        successes += (p.success && p.final_gap >= 0.0 && p.final_gap <= epsilon) as u64;
        max_episodes = max_episodes.max(p.episodes_used);
        max_index = max_index.max(p.final_index());
        per_run.push(CouplingRun { episodes_used: p.episodes_used, final_gap: p.final_gap, final_index: p.final_index() });
    }
    let rate = if episodes_total > 0 { episode_wins as f64 / episodes_total as f64 } else { 1.0 };
    let iv = wilson(episode_wins, episodes_total, Z_99);
    Ok(CouplingSummary {
        d,
        epsilon,
        runs,
        successes,
        episodes_total,
        episode_wins,
        per_episode_rate: rate,
        per_episode_sigma: if episodes_total > 0 { (0.25 * 0.75 / episodes_total as f64).sqrt() } else { 0.0 },
        wilson_lo: iv.lo,
        wilson_hi: iv.hi,
        max_episodes,
        max_index,
        per_run,
    })
}
