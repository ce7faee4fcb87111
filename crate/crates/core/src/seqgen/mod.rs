//! Step-size sequences and their arithmetic side conditions.

mod counts;
mod growth;

pub use counts::{
    check_ints_conditions, check_sparse_conditions, value_counts, IntsReport, SequenceCounts,
    SparseReport, SparseWitness,
};
pub use growth::GrowthFn;

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::rng::{stream, SignSource};
use crate::stats::{wilson, Z_99};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Power,
    LogPower,
    SqrtBlock,
    FastBlock,
    FastIncreasing,
    SparseValues,
    Geometric,
    Constant,
    Custom,
}

/// Declarative description of a step-size sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSequenceSpec {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub floor_values: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth_fn: Option<GrowthFn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cover_confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom_values: Option<Vec<f64>>,
    /// Step size of the `constant` family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    /// Seed of the `fast_block` cover-time calibration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

pub const DEFAULT_COVER_CONFIDENCE: f64 = 0.5;
pub const DEFAULT_CALIBRATION_SEED: u64 = 0x5EED_B10C;
/// Independent 2D walks per candidate horizon.
pub const CALIBRATION_TRIALS: u64 = 200;
/// Total simulated 2D steps allowed per block.
pub const CALIBRATION_STEP_BUDGET: u64 = 1 << 30;

impl StepSequenceSpec {
    pub fn new(family: Family) -> Self {
        StepSequenceSpec {
            family,
            alpha: None,
            floor_values: false,
            growth_fn: None,
            cover_confidence: None,
            custom_values: None,
            value: None,
            seed: None,
        }
    }

    pub fn power(alpha: f64, floor_values: bool) -> Self {
        StepSequenceSpec { alpha: Some(alpha), floor_values, ..Self::new(Family::Power) }
    }

    pub fn log_power(alpha: f64, floor_values: bool) -> Self {
        StepSequenceSpec { alpha: Some(alpha), floor_values, ..Self::new(Family::LogPower) }
    }

    pub fn sqrt_block() -> Self {
        Self::new(Family::SqrtBlock)
    }

    pub fn constant(value: f64) -> Self {
        StepSequenceSpec { value: Some(value), ..Self::new(Family::Constant) }
    }

    pub fn custom(values: Vec<f64>) -> Self {
        StepSequenceSpec { custom_values: Some(values), ..Self::new(Family::Custom) }
    }

    pub fn with_growth(family: Family, growth_fn: GrowthFn) -> Self {
        StepSequenceSpec { growth_fn: Some(growth_fn), ..Self::new(family) }
    }

    /// Checks that the parameters needed by `family` are present and sane.
    pub fn validate(&self) -> Result<()> {
        if let Some(g) = &self.growth_fn {
            g.validate()?;
        }
        let need_alpha = || {
            self.alpha
                .filter(|a| a.is_finite())
                .ok_or_else(|| config(format!("{:?} family needs a finite alpha", self.family)))
        };
        match self.family {
            Family::Power => {
                need_alpha()?;
            }
            Family::LogPower => {
                if need_alpha()? <= 0.0 {
                    return Err(config("log_power needs alpha > 0"));
                }
            }
            Family::SqrtBlock => {}
            Family::FastBlock => {
                self.need_growth()?;
                let c = self.cover_confidence.unwrap_or(DEFAULT_COVER_CONFIDENCE);
                if !(c > 0.0 && c < 1.0) {
                    return Err(config("cover_confidence must lie in (0, 1)"));
                }
            }
            Family::FastIncreasing | Family::Geometric => {
                self.need_growth()?;
            }
            Family::SparseValues => {}
            Family::Constant => {
                let v = self.value.ok_or_else(|| config("constant family needs a value"))?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(config("constant value must be finite and non-negative"));
                }
            }
            Family::Custom => {
                let vs = self
                    .custom_values
                    .as_ref()
                    .ok_or_else(|| config("custom family needs custom_values"))?;
                if vs.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(config("custom values must be finite and non-negative"));
                }
            }
        }
        Ok(())
    }

    fn need_growth(&self) -> Result<&GrowthFn> {
        self.growth_fn
            .as_ref()
            .ok_or_else(|| config(format!("{:?} family needs growth_fn", self.family)))
    }
}

/// The first `n` step sizes described by `spec`.
pub fn generate(spec: &StepSequenceSpec, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(domain("n must be at least 1"));
    }
    spec.validate()?;
    match spec.family {
        Family::Power => {
            let alpha = spec.alpha.unwrap();
            Ok((1..=n as u64).map(|k| power_term(k, alpha, spec.floor_values)).collect())
        }
        Family::LogPower => {
            let alpha = spec.alpha.unwrap();
            Ok((1..=n as u64)
                .map(|k| {
                    let v = (k as f64).ln().powf(alpha);
                    if spec.floor_values {
                        v.floor()
                    } else {
                        v
                    }
                })
                .collect())
        }
        Family::SqrtBlock => Ok(sqrt_block(n)),
        Family::FastBlock => fast_block(spec, n),
        Family::FastIncreasing => fast_increasing(spec.need_growth()?, n),
        Family::SparseValues => sparse_values(spec.growth_fn.as_ref(), n),
        Family::Geometric => {
            let g = spec.need_growth()?;
            Ok((1..=n as u64)
                .map(|k| {
                    let f = g.eval(k);
                    if f > 0.0 {
                        f.log2().floor().exp2()
                    } else {
                        0.0
                    }
                })
                .collect())
        }
        Family::Constant => Ok(vec![spec.value.unwrap(); n]),
        Family::Custom => {
            let vs = spec.custom_values.as_ref().unwrap();
            if vs.len() < n {
                return Err(config(format!(
                    "custom sequence has {} values, {n} requested",
                    vs.len()
                )));
            }
            Ok(vs[..n].to_vec())
        }
    }
}

fn power_term(k: u64, alpha: f64, floor: bool) -> f64 {
    let x = k as f64;
    let v = if alpha == 1.0 {
        x
    } else if alpha == 0.5 {
        x.sqrt()
    } else {
        x.powf(alpha)
    };
    if floor {
        v.floor()
    } else {
        v
    }
}

/// Converts a sequence to non-negative integers, rejecting fractional entries.
pub fn integer_steps(seq: &[f64]) -> Result<Vec<u64>> {
    seq.iter()
        .enumerate()
        .map(|(i, &v)| {
            if v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(63) {
                Ok(v as u64)
            } else {
                Err(domain(format!("entry {} = {v} is not a non-negative integer", i + 1)))
            }
        })
        .collect()
}

pub fn is_integer_valued(seq: &[f64]) -> bool {
    integer_steps(seq).is_ok()
}

/// First index of the k-th block of the sqrt_block sequence, `(4^k + 2) / 6`.
pub fn sqrt_block_start(k: u32) -> u64 {
    (4u64.pow(k) + 2) / 6
}

fn sqrt_block(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut k = 1u32;
    while out.len() < n {
        let len = 1usize << (2 * k - 1);
        let hi = (1u64 << k) as f64 + 1.0;
        let lo = hi - 2.0;
        for i in 0..len.min(n - out.len()) {
            out.push(if i % 2 == 0 { hi } else { lo });
        }
        k += 1;
    }
    out
}

/// Steps until a 2D simple random walk from the origin has visited every
/// `(0, y)` with `|y| <= m`, or `None` if that takes more than `cap` steps.
pub fn segment_cover_time<R: rand::RngCore>(m: u64, cap: u64, signs: &mut SignSource<R>) -> Option<u64> {
    let mut visited = vec![false; (2 * m + 1) as usize];
    visited[m as usize] = true;
    let mut remaining = 2 * m;
    if remaining == 0 {
        return Some(0);
    }
    let (mut x, mut y) = (0i64, 0i64);
    for t in 1..=cap {
        let axis = signs.next_bit();
        let s = signs.next_sign() as i64;
        if axis {
            x += s;
        } else {
            y += s;
        }
        if x == 0 && y.unsigned_abs() <= m {
            let slot = &mut visited[(y + m as i64) as usize];
            if !*slot {
                *slot = true;
                remaining -= 1;
                if remaining == 0 {
                    return Some(t);
                }
            }
        }
    }
    None
}

/// Smallest power-of-two horizon `L` at which a 2D simple random walk from the
/// origin has visited every `(0, y)` with `|y| <= m`, with Wilson lower
/// confidence at least `confidence`.
///
/// Each of the `CALIBRATION_TRIALS` walks runs until it covers the segment or
/// exhausts its share of `CALIBRATION_STEP_BUDGET`; every candidate horizon is
/// then scored against the same recorded cover times.
pub fn calibrate_cover_horizon(m: u64, confidence: f64, seed: u64, block: usize) -> Result<u64> {
    if m == 0 {
        return Ok(1);
    }
    let cap = CALIBRATION_STEP_BUDGET / CALIBRATION_TRIALS;
    if 2 * m > cap {
        return Err(Error::CalibrationBudget { block });
    }
    let key = seed ^ (block as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut times = Vec::with_capacity(CALIBRATION_TRIALS as usize);
    let mut misses = 0u64;
    for trial in 0..CALIBRATION_TRIALS {
        match segment_cover_time(m, cap, &mut SignSource::new(stream(key, trial))) {
            Some(t) => times.push(t),
            None => {
                misses += 1;
                if wilson(CALIBRATION_TRIALS - misses, CALIBRATION_TRIALS, Z_99).lo < confidence {
                    return Err(Error::CalibrationBudget { block });
                }
            }
        }
    }
    times.sort_unstable();
    let mut horizon = (2 * m).next_power_of_two();
    while horizon <= cap {
        let hits = times.partition_point(|&t| t <= horizon) as u64;
        if wilson(hits, CALIBRATION_TRIALS, Z_99).lo >= confidence {
            return Ok(horizon);
        }
        horizon *= 2;
    }
    Err(Error::CalibrationBudget { block })
}

fn fast_block(spec: &StepSequenceSpec, n: usize) -> Result<Vec<f64>> {
    let g = spec.need_growth()?;
    let confidence = spec.cover_confidence.unwrap_or(DEFAULT_COVER_CONFIDENCE);
    let seed = spec.seed.unwrap_or(DEFAULT_CALIBRATION_SEED);
    let mut out: Vec<f64> = Vec::with_capacity(n);
    let mut total = 0u64;
    let mut block = 1usize;
    while out.len() < n {
        let l = calibrate_cover_horizon(total, confidence, seed, block)?;
        let len = 2 * l;
        let r = g.eval(out.len() as u64 + len).ceil().max(1.0);
        if r >= 2f64.powi(52) {
            return Err(Error::Infeasible(format!("block {block}: step size {r} exceeds exact integer range")));
        }
        let r = r as u64;
        for i in 0..len.min((n - out.len()) as u64) {
            out.push(if i % 2 == 0 { (r + 1) as f64 } else { r as f64 });
        }
        total = total
            .checked_add(len / 2 * (2 * r + 1))
            .ok_or_else(|| Error::Infeasible(format!("block {block}: step total overflows")))?;
        block += 1;
    }
    Ok(out)
}

/// `c_m = sum_{j=1}^{m-1} j^{-3/2} / sqrt(1 + ln j)`, for `m = 1..=count`.
pub fn c_increments(count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    let mut acc = 0.0f64;
    let mut comp = 0.0f64;
    for m in 1..=count {
        out.push(acc + comp);
        let j = m as f64;
        let term = j.powf(-1.5) / (1.0 + j.ln()).sqrt();
        let t = acc + term;
        comp += (acc - t) + term;
        acc = t;
    }
    out
}

/// Length of the j-th block of the fast_increasing sequence.
pub fn fast_increasing_block_len(j: u32) -> usize {
    4usize.pow(j)
}

fn fast_increasing(g: &GrowthFn, n: usize) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = Vec::with_capacity(n);
    let mut j = 1u32;
    let mut cs: Vec<f64> = Vec::new();
    while out.len() < n {
        let len = fast_increasing_block_len(j);
        let take = len.min(n - out.len());
        if cs.len() < take {
            cs = c_increments(take);
        }
        let end = out.len() + len;
        let prev = out.last().map(|v| v + 1.0).unwrap_or(0.0);
        let x = g.eval(end as u64).max(prev).max(0.0);
        for &c in &cs[..take] {
            let v = x + c;
            if let Some(&last) = out.last() {
                if v <= last {
                    return Err(Error::Infeasible(format!(
                        "block {j}: {x} + c exceeds f64 resolution, sequence no longer strictly increasing"
                    )));
                }
            }
            out.push(v);
        }
        j += 1;
    }
    Ok(out)
}

/// `(2i + 1)^2`
pub fn sparse_value(i: u64) -> u64 {
    (2 * i + 1) * (2 * i + 1)
}

fn parity_ok(i: u64, len: u64) -> bool {
    if i < 2 {
        return true;
    }
    let k = i / 2;
    let want = if i % 2 == 0 { k + 1 } else { k };
    len % 2 == want % 2
}

fn sparse_values(g: Option<&GrowthFn>, n: usize) -> Result<Vec<f64>> {
    const LIMIT: u64 = u64::MAX / 4;
    let mut out: Vec<f64> = Vec::with_capacity(n);
    if let Some(g) = g {
        let first = g
            .first_reaching(1, sparse_value(1) as f64, LIMIT)
            .ok_or_else(|| Error::Infeasible("growth function never reaches 9".into()))?;
        let zeros = ((first - 1) as usize).min(n);
        out.resize(zeros, 0.0);
    }
    let mut i = 1u64;
    while out.len() < n {
        let p = sparse_value(i);
        let p_next = sparse_value(i + 1);
        let start = out.len() as u64 + 1;
        let min_len = p_next * p_next;
        let remaining = (n - out.len()) as u64;
        if remaining <= min_len {
            out.extend(std::iter::repeat(p as f64).take(remaining as usize));
            break;
        }
        let mut len = min_len;
        if let Some(g) = g {
            let reach = g
                .first_reaching(start + len, p_next as f64, LIMIT)
                .ok_or_else(|| {
                    Error::Infeasible(format!("growth function never reaches {p_next} (block {i})"))
                })?;
            len = reach - start;
        }
        if !parity_ok(i, len) {
            len += 1;
        }
        out.extend(std::iter::repeat(p as f64).take(len.min(remaining) as usize));
        i += 1;
    }
    Ok(out)
}

/// Block lengths `l_1..l_k` of the sparse_values sequence for the given growth.
pub fn sparse_block_lengths(g: Option<&GrowthFn>, blocks: usize) -> Result<Vec<u64>> {
    let total: u64 = (1..=blocks as u64 + 1).map(|i| sparse_value(i + 1).pow(2) + 1).sum();
    let extra = match g {
        Some(g) => g.first_reaching(1, sparse_value(blocks as u64 + 1) as f64, u64::MAX / 4),
        None => Some(0),
    }
    .ok_or_else(|| Error::Infeasible("growth function too slow".into()))?;
    // the sequence is long enough to finish `blocks` blocks and start the next
    let seq = sparse_values(g, (total + extra) as usize)?;
    let mut lens = Vec::new();
    let mut iter = seq.iter().skip_while(|v| **v == 0.0).peekable();
    while let Some(&v) = iter.next() {
        let mut len = 1u64;
        while iter.peek() == Some(&&v) {
            iter.next();
            len += 1;
        }
        lens.push(len);
        if lens.len() == blocks {
            break;
        }
    }
    Ok(lens)
}
