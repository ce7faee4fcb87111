use serde::{Deserialize, Serialize};

use super::per_replicate;
use crate::error::{config, domain, Result};
use crate::rng::{stream, SignSource};
use crate::seqgen::is_integer_valued;

/// Grid resolution used for real-valued walks.
pub const REAL_GRID: f64 = 16.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowAnchor {
    /// Windows `(x, x + 1]` at integer `x`: one lattice point each.
    Integer,
    /// Windows `(j/16, j/16 + 1]`, positions binned to the 1/16 grid.
    Grid16,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Q1Estimate {
    pub n: u64,
    pub replicates: u64,
    pub q1_hat: f64,
    pub stderr: f64,
    pub anchor: WindowAnchor,
    pub bias_note: Option<String>,
}

/// Largest empirical mass of a unit window `(x, x + 1]` for `X_n`, where
/// `n = steps.len()`.
///
/// Maximising over windows biases the estimate upwards; a note is attached
/// when fewer than `100 / q1_hat` replicates were used.
pub fn estimate_q1(steps: &[f64], master_seed: u64, replicates: u64) -> Result<Q1Estimate> {
    if replicates == 0 {
        return Err(config("replicates must be positive"));
    }
    let integer = is_integer_valued(steps);
    let finals = per_replicate(replicates, |r| {
        let mut signs = SignSource::new(stream(master_seed, r));
        let mut x = 0.0f64;
        for &a in steps {
            if signs.next_bit() {
                x += a;
            } else {
                x -= a;
            }
        }
        x
    });
    let (best, anchor) = if integer {
        let mut v: Vec<i64> = finals.iter().map(|&x| x as i64).collect();
        v.sort_unstable();
        (longest_run(&v), WindowAnchor::Integer)
    } else {
        // bin b holds positions in ((b - 1)/16, b/16]
        let mut bins: Vec<i64> = finals.iter().map(|&x| (x * REAL_GRID).ceil() as i64).collect();
        bins.sort_unstable();
        (max_in_span(&bins, REAL_GRID as i64), WindowAnchor::Grid16)
    };
    let q1_hat = best as f64 / replicates as f64;
    let stderr = (q1_hat * (1.0 - q1_hat) / replicates as f64).sqrt();
    let bias_note = ((replicates as f64) < 100.0 / q1_hat).then(|| {
        format!(
            "maximum over windows is biased upwards; {replicates} replicates < 100/q1_hat = {:.0}",
            100.0 / q1_hat
        )
    });
    Ok(Q1Estimate { n: steps.len() as u64, replicates, q1_hat, stderr, anchor, bias_note })
}

fn longest_run(sorted: &[i64]) -> u64 {
    let mut best = 0u64;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        best = best.max((j - i) as u64);
        i = j;
    }
    best
}

/// Most sorted values inside any `span` consecutive integers.
fn max_in_span(sorted: &[i64], span: i64) -> u64 {
    let mut best = 0usize;
    let mut i = 0;
    for j in 0..sorted.len() {
        while sorted[j] - sorted[i] >= span {
            i += 1;
        }
        best = best.max(j - i + 1);
    }
    best as u64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least squares on `(ln n, ln value)`.
pub fn fit_exponent(points: &[(f64, f64)]) -> Result<ExponentFit> {
    if points.len() < 3 {
        return Err(domain("need at least 3 points"));
    }
    if let Some(p) = points.iter().find(|p| !(p.0 > 0.0 && p.1 > 0.0)) {
        return Err(domain(format!("non-positive point ({}, {})", p.0, p.1)));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(domain("all n are equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(ExponentFit { slope, intercept, r_squared, points: points.len() })
}
