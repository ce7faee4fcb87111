use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

/// A non-decreasing growth function `f: N -> R` used by the fast-growing and
/// slowly-growing constructions.
///
/// `Table` interpolates linearly between tabulated points and is held constant
/// outside them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GrowthFn {
    Table { points: Vec<(u64, f64)> },
    /// `scale * n^exponent`
    Power { scale: f64, exponent: f64 },
    /// `scale * exp(rate * n)`
    Exponential { scale: f64, rate: f64 },
}

impl GrowthFn {
    pub fn validate(&self) -> Result<()> {
        match self {
            GrowthFn::Table { points } => {
                if points.is_empty() {
                    return Err(config("growth table is empty"));
                }
                for w in points.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return Err(config("growth table abscissae must be strictly increasing"));
                    }
                    if w[1].1 < w[0].1 {
                        return Err(config("growth table must be non-decreasing"));
                    }
                }
                if points.iter().any(|p| !p.1.is_finite()) {
                    return Err(config("growth table values must be finite"));
                }
            }
            GrowthFn::Power { scale, exponent } => {
                if !(scale.is_finite() && *scale >= 0.0 && exponent.is_finite() && *exponent >= 0.0) {
                    return Err(config("power growth needs finite scale >= 0 and exponent >= 0"));
                }
            }
            GrowthFn::Exponential { scale, rate } => {
                if !(scale.is_finite() && *scale >= 0.0 && rate.is_finite() && *rate >= 0.0) {
                    return Err(config("exponential growth needs finite scale >= 0 and rate >= 0"));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, n: u64) -> f64 {
        let x = n as f64;
        match self {
            GrowthFn::Table { points } => {
                let idx = points.partition_point(|p| p.0 <= n);
                if idx == 0 {
                    return points[0].1;
                }
                if idx == points.len() {
                    return points[idx - 1].1;
                }
                let (x0, y0) = points[idx - 1];
                let (x1, y1) = points[idx];
                y0 + (y1 - y0) * (n - x0) as f64 / (x1 - x0) as f64
            }
            GrowthFn::Power { scale, exponent } => scale * x.powf(*exponent),
            GrowthFn::Exponential { scale, rate } => scale * (rate * x).exp(),
        }
    }

    /// Smallest `n >= from` with `f(n) >= target`, if one exists below `limit`.
    pub fn first_reaching(&self, from: u64, target: f64, limit: u64) -> Option<u64> {
        if self.eval(from) >= target {
            return Some(from);
        }
        let mut lo = from;
        let mut step = 1u64;
        let hi = loop {
            let probe = from.saturating_add(step);
            if probe >= limit {
                if self.eval(limit) >= target {
                    break limit;
                }
                return None;
            }
            if self.eval(probe) >= target {
                break probe;
            }
            lo = probe;
            step = step.saturating_mul(2);
        };
        // f(lo) < target <= f(hi)
        let (mut lo, mut hi) = (lo, hi);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.eval(mid) >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }
}
