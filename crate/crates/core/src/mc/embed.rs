use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::rng::{stream, SignSource};
use crate::seqgen::sqrt_block_start;

/// Lattice image of the paired steps of block `2k` of the sqrt_block walk.
///
/// Paired increments `+-2^(2k+1)` move along the first axis and `+-2` along
/// the second; `Y_m = 0` exactly when the path point lies on the line
/// `2^(2k+1) a + 2 b + Y_{m0} = 0`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoDEmbedding {
    pub path: Vec<(i64, i64)>,
    /// `(A, B, c)` for the line `A a + B b + c = 0`.
    pub line: (i64, i64, i64),
    pub visits_to_line: u64,
}

pub fn embed_2d(y_m0: i64, increments: &[i64], k: u32) -> Result<TwoDEmbedding> {
    if k == 0 || 2 * k + 1 >= 62 {
        return Err(domain("block index k out of range"));
    }
    let big = 1i64 << (2 * k + 1);
    let line = (big, 2, y_m0);
    let on_line = |(a, b): (i64, i64)| big * a + 2 * b + y_m0 == 0;
    let mut path = Vec::with_capacity(increments.len() + 1);
    let mut p = (0i64, 0i64);
    path.push(p);
    let mut visits = on_line(p) as u64;
    for (i, &d) in increments.iter().enumerate() {
        p = match d {
            d if d == big => (p.0 + 1, p.1),
            d if d == -big => (p.0 - 1, p.1),
            2 => (p.0, p.1 + 1),
            -2 => (p.0, p.1 - 1),
            _ => {
                return Err(domain(format!(
                    "increment {} = {d} is not one of +-{big}, +-2",
                    i + 1
                )))
            }
        };
        path.push(p);
        visits += on_line(p) as u64;
    }
    Ok(TwoDEmbedding { path, line, visits_to_line: visits })
}

/// Index range `m0..=m1` of `Y_m = X_{2m}` covering block `2k`.
fn pair_range(k: u32) -> (usize, usize) {
    let m0 = (sqrt_block_start(2 * k) - 1) / 2;
    let m1 = (sqrt_block_start(2 * k + 1) - 1) / 2;
    (m0 as usize, m1 as usize)
}

/// `(Y_{m0}, [Y_m - Y_{m-1}])` for block `2k`, read off a trace `X_0..`.
pub fn block_increments(positions: &[f64], k: u32) -> Result<(i64, Vec<i64>)> {
    let (m0, m1) = pair_range(k);
    if positions.len() <= 2 * m1 {
        return Err(config(format!("trace too short for block {}", 2 * k)));
    }
    let y = |m: usize| positions[2 * m] as i64;
    Ok((y(m0), (m0 + 1..=m1).map(|m| y(m) - y(m - 1)).collect()))
}

/// `#{m in m0..=m1 : X_{2m} = 0}`, counted directly on the trace.
pub fn recount_block_zeros(positions: &[f64], k: u32) -> Result<u64> {
    let (m0, m1) = pair_range(k);
    if positions.len() <= 2 * m1 {
        return Err(config(format!("trace too short for block {}", 2 * k)));
    }
    Ok((m0..=m1).filter(|&m| positions[2 * m] == 0.0).count() as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedSummary {
    pub k: u32,
    pub traces: u64,
    /// Traces where the line-visit count differs from the direct recount.
    pub mismatches: u64,
    pub total_visits: u64,
    /// Traces with at least one visit.
    pub traces_with_visit: u64,
}

pub(super) fn embed_experiment(steps: &[f64], master_seed: u64, replicates: u64, k: u32) -> Result<EmbedSummary> {
    let (_, m1) = pair_range(k);
    if steps.len() < 2 * m1 {
        return Err(config(format!("horizon must reach {} for block {}", 2 * m1, 2 * k)));
    }
    let steps = &steps[..2 * m1];
    let rows: Vec<Result<(u64, u64)>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let trace = super::walk_positions(steps, &mut SignSource::new(stream(master_seed, r)));
            let (y0, inc) = block_increments(&trace, k)?;
            let e = embed_2d(y0, &inc, k)?;
            Ok((e.visits_to_line, recount_block_zeros(&trace, k)?))
        })
        .collect();
    let mut s = EmbedSummary { k, traces: replicates, mismatches: 0, total_visits: 0, traces_with_visit: 0 };
    for row in rows {
        let (v, z) = row?;
        s.mismatches += (v != z) as u64;
        s.total_visits += v;
        s.traces_with_visit += (v > 0) as u64;
    }
    Ok(s)
}
