//! Closed-form anti-concentration bounds and the verification record that pairs
//! each with the quantity it should dominate.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_bigint::BigUint;
use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Slack allowed when deciding whether a bound holds.
pub const BOUND_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundName {
    Elo,
    ModularElo,
    CosineProduct,
    AntiExponent,
    LowerAntiFloor,
    Hoeffding,
    PaleyZygmund,
    LocalClt,
    CombineScales,
    KochenStone,
    TransienceSum,
}

/// Whether the bound is an upper bound (the compared value must not exceed it)
/// or a floor (the compared value must reach it).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundSide {
    Upper,
    Lower,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound_name: BoundName,
    pub side: BoundSide,
    pub params: BTreeMap<String, f64>,
    pub bound_value: f64,
    /// `bound_value` clamped to `[0, 1]`.
    pub bound_value_clamped: f64,
    pub compared_value: Option<f64>,
    pub satisfied: Option<bool>,
    /// `bound - compared` for upper bounds, `compared - bound` for floors.
    pub slack: Option<f64>,
}

impl BoundReport {
    pub fn upper(bound_name: BoundName, bound_value: f64) -> Self {
        Self::with_side(bound_name, BoundSide::Upper, bound_value)
    }

    pub fn lower(bound_name: BoundName, bound_value: f64) -> Self {
        Self::with_side(bound_name, BoundSide::Lower, bound_value)
    }

    fn with_side(bound_name: BoundName, side: BoundSide, bound_value: f64) -> Self {
        BoundReport {
            bound_name,
            side,
            params: BTreeMap::new(),
            bound_value,
            bound_value_clamped: bound_value.clamp(0.0, 1.0),
            compared_value: None,
            satisfied: None,
            slack: None,
        }
    }

    pub fn param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    pub fn compare(mut self, value: f64) -> Self {
        let (ok, slack) = match self.side {
            BoundSide::Upper => (value <= self.bound_value + BOUND_TOLERANCE, self.bound_value - value),
            BoundSide::Lower => (value >= self.bound_value - BOUND_TOLERANCE, value - self.bound_value),
        };
        self.compared_value = Some(value);
        self.satisfied = Some(ok);
        self.slack = Some(slack);
        self
    }
}

/// `2^e` for any `e` in the normal range.
fn pow2(e: i64) -> f64 {
    f64::from_bits(((e + 1023) as u64) << 52)
}

fn big_ratio_to_f64(num: &BigUint, log2_den: u64) -> f64 {
    let bits = num.bits();
    if bits <= 64 {
        let v = num.iter_u64_digits().next().unwrap_or(0);
        return v as f64 * pow2(-(log2_den as i64));
    }
    let shift = bits - 64;
    let top: BigUint = num >> shift;
    let mut v = top.iter_u64_digits().next().unwrap();
    // round to nearest: fold a sticky bit in so the u64 -> f64 rounding sees it
    let rest = num - (&top << shift);
    if rest != BigUint::default() {
        v |= 1;
    }
    v as f64 * pow2(shift as i64 - log2_den as i64)
}

/// Exact `C(n, floor(n/2))` as a big integer.
pub fn central_binomial(n: u64) -> BigUint {
    let k = n / 2;
    let mut c = BigUint::from(1u32);
    for i in 0..k {
        c *= n - i;
        c /= i + 1;
    }
    c
}

/// `C(2k, k) / 4^k` from its asymptotic expansion; relative error below 1e-15
/// for `k >= 500`.
fn central_ratio_series(k: f64) -> f64 {
    let x = 1.0 / k;
    let poly = 1.0
        + x * (-1.0 / 8.0
            + x * (1.0 / 128.0
                + x * (5.0 / 1024.0
                    + x * (-21.0 / 32768.0 + x * (-399.0 / 262_144.0 + x * (869.0 / 4_194_304.0))))));
    poly / (PI * k).sqrt()
}

/// Largest atom of a sum of `n` Rademacher signs, `C(n, floor(n/2)) 2^-n`.
pub fn elo_bound(n: u64) -> Result<f64> {
    if n == 0 {
        return Err(domain("n must be at least 1"));
    }
    if n <= 1000 {
        return Ok(big_ratio_to_f64(&central_binomial(n), n));
    }
    let k = (n / 2) as f64;
    let even = central_ratio_series(k);
    Ok(if n % 2 == 0 { even } else { even * (2.0 * k + 1.0) / (2.0 * k + 2.0) })
}

/// `1/m + sqrt(2/(pi n))` for odd `m`, `2/m + sqrt(2/(pi n))` for even `m`.
pub fn modular_elo_bound(m: u64, n: u64) -> Result<f64> {
    if m < 2 || n == 0 {
        return Err(domain("need m >= 2 and n >= 1"));
    }
    let head = if m % 2 == 1 { 1.0 } else { 2.0 } / m as f64;
    Ok(head + (2.0 / (PI * n as f64)).sqrt())
}

fn cos_abs(b: u64, lambda: u64, m: u64) -> f64 {
    let k = ((b % m) as u128 * lambda as u128 % m as u128) as f64;
    (2.0 * PI * k / m as f64).cos().abs()
}

/// `(1/m) sum_lambda prod_i |cos(2 pi b_i lambda / m)|`
pub fn cosine_product_bound(m: u64, steps: &[u64]) -> Result<f64> {
    if m < 2 {
        return Err(domain("modulus must be at least 2"));
    }
    if let Some((i, b)) = steps.iter().enumerate().find(|(_, b)| b.gcd(&m) != 1) {
        return Err(domain(format!("step {} = {b} is not coprime to {m}", i + 1)));
    }
    let total: f64 = (0..m).map(|l| steps.iter().map(|&b| cos_abs(b, l, m)).product::<f64>()).sum();
    Ok(total / m as f64)
}

/// The cosine-product bound with every step congruent to 1, its maximum over
/// coprime assignments of `n` steps.
pub fn cosine_product_bound_max(m: u64, n: u64) -> Result<f64> {
    if m < 2 {
        return Err(domain("modulus must be at least 2"));
    }
    let exp = i32::try_from(n).map_err(|_| domain("n too large"))?;
    let total: f64 = (0..m).map(|l| cos_abs(1, l, m).powi(exp)).sum();
    Ok(total / m as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    SmallDelta,
    LargeDelta,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentQuery {
    pub alpha: f64,
    pub delta: f64,
    pub gamma: f64,
    pub f_value: f64,
    /// `1/2 + alpha f - gamma`
    pub exponent: f64,
    pub branch: Branch,
}

/// `(sqrt(alpha^2 + 1) - alpha) / 2`
pub fn delta_star(alpha: f64) -> f64 {
    // rationalised form, stable for large alpha
    0.5 / ((alpha * alpha + 1.0).sqrt() + alpha)
}

pub fn f_small_delta(alpha: f64, delta: f64) -> f64 {
    alpha * alpha
        / ((alpha + delta) * (alpha + 2.0 * delta + 2.0 * (delta * delta + alpha * delta).sqrt()))
}

pub fn f_large_delta(alpha: f64, delta: f64) -> f64 {
    alpha * alpha / ((alpha + delta) * (1.0 + 2.0 * delta) * (alpha + 0.5 + delta))
}

pub fn anti_exponent_f(alpha: f64, delta: f64, gamma: f64) -> Result<ExponentQuery> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(domain("alpha must be positive"));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(domain("delta must be non-negative"));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(domain("gamma must be positive"));
    }
    let (f_value, branch) = if delta <= delta_star(alpha) {
        (f_small_delta(alpha, delta), Branch::SmallDelta)
    } else {
        (f_large_delta(alpha, delta), Branch::LargeDelta)
    };
    Ok(ExponentQuery { alpha, delta, gamma, f_value, exponent: 0.5 + alpha * f_value - gamma, branch })
}

/// `3 / (16 ceil(sqrt(variance)))`
pub fn lower_anti_floor(variance: f64) -> Result<f64> {
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(domain("variance must be positive"));
    }
    let mut root = variance.sqrt().ceil();
    // guard against sqrt rounding just above an exact square
    if (root - 1.0) * (root - 1.0) >= variance {
        root -= 1.0;
    }
    Ok(3.0 / (16.0 * root))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoeffdingBound {
    /// `t ||a||_2`, the point whose right tail is bounded.
    pub threshold: f64,
    /// `exp(-t^2 / 2)`
    pub bound: f64,
}

pub fn hoeffding_tail(l2_norm: f64, t: f64) -> Result<HoeffdingBound> {
    if !(t >= 0.0) || !(l2_norm >= 0.0) {
        return Err(domain("need t >= 0 and a non-negative l2 norm"));
    }
    Ok(HoeffdingBound { threshold: t * l2_norm, bound: (-t * t / 2.0).exp() })
}

/// `P(|X| >= ||a||_2 / 2) >= 3/16` for every Rademacher sum.
pub const PALEY_ZYGMUND_FLOOR: f64 = 3.0 / 16.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalClt {
    pub approx: f64,
    pub parity_ok: bool,
}

/// `exp(-x^2 / 2n) / sqrt(pi n / 2)`
pub fn local_clt_approx(n: u64, x: i64) -> Result<LocalClt> {
    if n == 0 {
        return Err(domain("n must be at least 1"));
    }
    if x.unsigned_abs() > n {
        return Err(domain(format!("|x| = {} exceeds n = {n}", x.unsigned_abs())));
    }
    if x.rem_euclid(2) as u64 != n % 2 {
        return Err(domain(format!("x = {x} and n = {n} differ in parity; P(X = x) = 0")));
    }
    let nf = n as f64;
    let xf = x as f64;
    Ok(LocalClt { approx: (-xf * xf / (2.0 * nf)).exp() / (PI * nf / 2.0).sqrt(), parity_ok: true })
}

/// `P(|A| >= s) + 3 Q_r(A) Q_s(B)`, unclamped.
pub fn combine_scales_rhs(qr_a: f64, qs_b: f64, tail_a_at_s: f64) -> f64 {
    tail_a_at_s + 3.0 * qr_a * qs_b
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KochenStone {
    pub ratio: f64,
    /// Set when the mean is zero, where the lower bound says nothing.
    pub zero_mean: bool,
}

/// `mean^2 / second_moment`
pub fn kochen_stone_ratio(mean: f64, second_moment: f64) -> Result<KochenStone> {
    if !(second_moment > 0.0) {
        return Err(domain("second moment must be positive"));
    }
    if second_moment < mean * mean * (1.0 - 1e-12) {
        return Err(Error::InconsistentMoments { mean, second_moment });
    }
    if mean == 0.0 {
        return Ok(KochenStone { ratio: 0.0, zero_mean: true });
    }
    Ok(KochenStone { ratio: (mean * mean / second_moment).min(1.0), zero_mean: false })
}

/// Running sums of `(2C + 1) Q_1(X_n)` over points sorted by `n`.
pub fn transience_partial_sum(q1_values: &[(u64, f64)], c: f64) -> Result<Vec<f64>> {
    if !(c >= 0.0) {
        return Err(domain("C must be non-negative"));
    }
    if q1_values.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(domain("points must be sorted by n"));
    }
    let w = 2.0 * c + 1.0;
    let mut acc = 0.0;
    let mut comp = 0.0;
    Ok(q1_values
        .iter()
        .map(|&(_, q)| {
            let term = w * q;
            let t = acc + term;
            comp += if acc >= term { (acc - t) + term } else { (term - t) + acc };
            acc = t;
            acc + comp
        })
        .collect())
}
