use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::error::{domain, Error, Result};

pub const DEFAULT_SUPPORT_CAP: usize = 1 << 26;

/// Exact law of an integer-valued walk position, as sorted parallel arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactPmf {
    pub support: Vec<i64>,
    pub probs: Vec<f64>,
    pub steps_applied: usize,
}

/// Same law with probabilities `counts[i] / 2^denom_log2`, kept exact.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationalPmf {
    pub support: Vec<i64>,
    pub counts: Vec<u128>,
    pub denom_log2: u32,
    pub steps_applied: usize,
}

/// Largest number of nonzero steps accepted by the rational engine.
pub const RATIONAL_MAX_STEPS: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationQuery {
    pub r: f64,
    pub result: f64,
    /// Left endpoint `x` of a maximising window `(x, x + r]`.
    pub argmax_x: f64,
}

fn projected(len: usize, lo: i64, hi: i64, a: u64) -> usize {
    let span = (hi - lo) as u128 + 2 * a as u128 + 1;
    (2 * len as u128).min(span) as usize
}

/// Merges the copies of `support` shifted by `-a` and `+a`, combining values
/// through `add` and `half`.
fn shift_merge<T: Copy>(
    support: &[i64],
    vals: &[T],
    a: i64,
    cap_hint: usize,
    add: impl Fn(T, T) -> T,
    half: impl Fn(T) -> T,
) -> (Vec<i64>, Vec<T>) {
    let n = support.len();
    let mut s_out = Vec::with_capacity(cap_hint);
    let mut v_out = Vec::with_capacity(cap_hint);
    let (mut i, mut j) = (0usize, 0usize);
    while i < n || j < n {
        let left = if i < n { Some(support[i] - a) } else { None };
        let right = if j < n { Some(support[j] + a) } else { None };
        match (left, right) {
            (Some(l), Some(r)) if l == r => {
                s_out.push(l);
                v_out.push(add(half(vals[i]), half(vals[j])));
                i += 1;
                j += 1;
            }
            (Some(l), Some(r)) if l < r => {
                s_out.push(l);
                v_out.push(half(vals[i]));
                i += 1;
            }
            (Some(_), Some(r)) | (None, Some(r)) => {
                s_out.push(r);
                v_out.push(half(vals[j]));
                j += 1;
            }
            (Some(l), None) => {
                s_out.push(l);
                v_out.push(half(vals[i]));
                i += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    (s_out, v_out)
}

impl ExactPmf {
    /// Point mass at 0, the law of `X_0`.
    pub fn origin() -> Self {
        ExactPmf { support: vec![0], probs: vec![1.0], steps_applied: 0 }
    }

    /// Builds a PMF from arbitrary atoms, merging duplicates and dropping zeros.
    pub fn from_atoms(atoms: impl IntoIterator<Item = (i64, f64)>) -> Result<Self> {
        let mut atoms: Vec<(i64, f64)> = atoms.into_iter().collect();
        if atoms.iter().any(|a| !(a.1.is_finite() && a.1 >= 0.0)) {
            return Err(domain("probabilities must be finite and non-negative"));
        }
        atoms.sort_by_key(|a| a.0);
        let mut support = Vec::new();
        let mut probs: Vec<f64> = Vec::new();
        for (x, p) in atoms {
            if p == 0.0 {
                continue;
            }
            if support.last() == Some(&x) {
                *probs.last_mut().unwrap() += p;
            } else {
                support.push(x);
                probs.push(p);
            }
        }
        if support.is_empty() {
            return Err(domain("PMF has no mass"));
        }
        Ok(ExactPmf { support, probs, steps_applied: 0 })
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        crate::stats::compensated_sum(self.probs.iter().copied())
    }

    /// `P(X = x)`
    pub fn prob(&self, x: i64) -> f64 {
        match self.support.binary_search(&x) {
            Ok(i) => self.probs[i],
            Err(_) => 0.0,
        }
    }

    /// Convolves with one symmetric step `±a`.
    pub fn apply_step(&mut self, a: u64, cap: usize) -> Result<()> {
        self.steps_applied += 1;
        if a == 0 {
            return Ok(());
        }
        let lo = self.support[0];
        let hi = *self.support.last().unwrap();
        let proj = projected(self.len(), lo, hi, a);
        if proj > cap {
            return Err(Error::SupportCap { step_index: self.steps_applied, projected: proj, cap });
        }
        let a = i64::try_from(a).map_err(|_| domain("step too large"))?;
        hi.checked_add(a).ok_or_else(|| domain("walk position overflows i64"))?;
        let (s, p) = shift_merge(&self.support, &self.probs, a, proj, |x, y| x + y, |x| 0.5 * x);
        self.support = s;
        self.probs = p;
        Ok(())
    }

    /// Law of `A + B` for independent `A` (self) and `B`.
    pub fn convolve(&self, other: &ExactPmf) -> Result<ExactPmf> {
        let mut atoms = Vec::with_capacity(self.len() * other.len());
        for (&x, &p) in self.support.iter().zip(&self.probs) {
            for (&y, &q) in other.support.iter().zip(&other.probs) {
                atoms.push((x + y, p * q));
            }
        }
        let mut out = ExactPmf::from_atoms(atoms)?;
        out.steps_applied = self.steps_applied + other.steps_applied;
        Ok(out)
    }

    pub fn max_atom(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }
}

/// Exact law of `sum eps_i a_i`, with the default support cap.
pub fn walk_pmf(steps: &[u64]) -> Result<ExactPmf> {
    walk_pmf_with_cap(steps, DEFAULT_SUPPORT_CAP)
}

pub fn walk_pmf_with_cap(steps: &[u64], cap: usize) -> Result<ExactPmf> {
    let mut pmf = ExactPmf::origin();
    for &a in steps {
        pmf.apply_step(a, cap)?;
    }
    Ok(pmf)
}

impl RationalPmf {
    pub fn origin() -> Self {
        RationalPmf { support: vec![0], counts: vec![1], denom_log2: 0, steps_applied: 0 }
    }

    pub fn apply_step(&mut self, a: u64) -> Result<()> {
        self.steps_applied += 1;
        if a == 0 {
            return Ok(());
        }
        if self.denom_log2 as usize >= RATIONAL_MAX_STEPS {
            return Err(domain(format!(
                "rational mode supports at most {RATIONAL_MAX_STEPS} nonzero steps"
            )));
        }
        let a = i64::try_from(a).map_err(|_| domain("step too large"))?;
        let len = self.support.len();
        // counts double instead of halving: the denominator grows by one bit
        let (s, c) = shift_merge(&self.support, &self.counts, a, 2 * len, |x, y| x + y, |x| x);
        self.support = s;
        self.counts = c;
        self.denom_log2 += 1;
        Ok(())
    }

    pub fn denominator(&self) -> u128 {
        1u128 << self.denom_log2
    }

    /// Reduced fraction `p/q` for the atom at index `i`.
    pub fn reduced(&self, i: usize) -> (u128, u128) {
        reduce_dyadic(self.counts[i], self.denom_log2)
    }

    pub fn to_f64(&self) -> ExactPmf {
        let d = self.denominator() as f64;
        ExactPmf {
            support: self.support.clone(),
            probs: self.counts.iter().map(|&c| c as f64 / d).collect(),
            steps_applied: self.steps_applied,
        }
    }

    /// Largest window mass of `(x, x + r]` as an exact count over the denominator.
    pub fn concentration_count(&self, r: f64) -> Result<u128> {
        if !(r > 0.0) {
            return Err(domain("window width r must be positive"));
        }
        let mut best = 0u128;
        let mut window = 0u128;
        let mut i = 0usize;
        for j in 0..self.support.len() {
            window += self.counts[j];
            while (self.support[i] as f64) <= self.support[j] as f64 - r {
                window -= self.counts[i];
                i += 1;
            }
            best = best.max(window);
        }
        Ok(best)
    }
}

/// `count / 2^log2` in lowest terms.
pub fn reduce_dyadic(count: u128, log2: u32) -> (u128, u128) {
    if count == 0 {
        return (0, 1);
    }
    let shift = count.trailing_zeros().min(log2);
    (count >> shift, 1u128 << (log2 - shift))
}

pub fn rational_walk_pmf(steps: &[u64]) -> Result<RationalPmf> {
    let mut pmf = RationalPmf::origin();
    for &a in steps {
        pmf.apply_step(a)?;
    }
    Ok(pmf)
}

/// `Q_r = sup_x P(x < X <= x + r)`.
pub fn concentration_q(pmf: &ExactPmf, r: f64) -> Result<ConcentrationQuery> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(domain("window width r must be positive and finite"));
    }
    // double-double prefix sums keep window differences accurate to ~1e-30
    let mut prefix = Vec::with_capacity(pmf.len() + 1);
    let mut acc = TwoFloat::from(0.0);
    prefix.push(acc);
    for &p in &pmf.probs {
        acc += p;
        prefix.push(acc);
    }
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0.0;
    let mut i = 0usize;
    for j in 0..pmf.len() {
        let right = pmf.support[j] as f64;
        while (pmf.support[i] as f64) <= right - r {
            i += 1;
        }
        let mass = if i == j { pmf.probs[j] } else { (prefix[j + 1] - prefix[i]).hi() };
        if mass > best {
            best = mass;
            arg = right - r;
        }
    }
    Ok(ConcentrationQuery { r, result: best, argmax_x: arg })
}

/// `P(X >= t)`
pub fn tail_prob(pmf: &ExactPmf, t: f64) -> f64 {
    let start = pmf.support.partition_point(|&x| (x as f64) < t);
    crate::stats::compensated_sum(pmf.probs[start..].iter().copied())
}

/// `P(|X| >= t)`
pub fn abs_tail_prob(pmf: &ExactPmf, t: f64) -> f64 {
    crate::stats::compensated_sum(
        pmf.support
            .iter()
            .zip(&pmf.probs)
            .filter(|(&x, _)| (x as f64).abs() >= t)
            .map(|(_, &p)| p),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub variance: f64,
    pub l2_norm: f64,
    pub total: f64,
}

pub fn summary_moments(steps: &[f64]) -> Moments {
    let variance = crate::stats::compensated_sum(steps.iter().map(|a| a * a));
    Moments {
        variance,
        l2_norm: variance.sqrt(),
        total: crate::stats::compensated_sum(steps.iter().copied()),
    }
}
