use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::kochen_stone_ratio;
use crate::error::{config, domain, Result};
use crate::rng::{stream, SignSource};
use crate::stats::{wilson, Z_99};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventStats {
    /// Inclusive range of time indices.
    pub window: (u64, u64),
    pub hits: u64,
    pub replicates: u64,
    pub p_hat: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
}

impl EventStats {
    pub fn new(window: (u64, u64), hits: u64, replicates: u64) -> Self {
        let iv = wilson(hits, replicates, Z_99);
        EventStats {
            window,
            hits,
            replicates,
            p_hat: hits as f64 / replicates as f64,
            wilson_lo: iv.lo,
            wilson_hi: iv.hi,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointCount {
    pub j: usize,
    pub k: usize,
    pub hits: u64,
}

/// Hit frequencies of `{exists i in window: |X_i| <= C}`, keyed from 1 in
/// window order, with all pairwise joint counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceStats {
    pub c: f64,
    pub replicates: u64,
    pub per_event: BTreeMap<usize, EventStats>,
    pub joint: Vec<JointCount>,
}

impl RecurrenceStats {
    pub fn joint_hits(&self, j: usize, k: usize) -> Option<u64> {
        let (j, k) = if j <= k { (j, k) } else { (k, j) };
        self.joint.iter().find(|c| c.j == j && c.k == k).map(|c| c.hits)
    }

    /// `p(E_j and E_k) / (p(E_j) p(E_k))`, if both marginals are positive.
    pub fn correlation_ratio(&self, j: usize, k: usize) -> Option<f64> {
        let pj = self.per_event.get(&j)?.p_hat;
        let pk = self.per_event.get(&k)?.p_hat;
        if pj == 0.0 || pk == 0.0 {
            return None;
        }
        let pjk = self.joint_hits(j, k)? as f64 / self.replicates as f64;
        Some(pjk / (pj * pk))
    }
}

pub fn estimate_interval_hits(
    steps: &[f64],
    master_seed: u64,
    replicates: u64,
    c: f64,
    windows: &[(u64, u64)],
) -> Result<RecurrenceStats> {
    if replicates == 0 {
        return Err(config("replicates must be positive"));
    }
    if !(c >= 0.0) {
        return Err(domain("C must be non-negative"));
    }
    let horizon = steps.len() as u64;
    let mut order: Vec<usize> = (0..windows.len()).collect();
    order.sort_by_key(|&i| windows[i]);
    for (pos, &i) in order.iter().enumerate() {
        let (s, e) = windows[i];
        if s > e {
            return Err(config(format!("window {} has start after end", i + 1)));
        }
        if e > horizon {
            return Err(config(format!("window {} ends beyond horizon {horizon}", i + 1)));
        }
        if pos > 0 && windows[order[pos - 1]].1 >= s {
            return Err(config(format!(
                "windows {} and {} overlap",
                order[pos - 1] + 1,
                i + 1
            )));
        }
    }
    let w = windows.len();
    let last = windows.iter().map(|x| x.1).max().unwrap_or(0) as usize;
    let mut owner = vec![u32::MAX; last + 1];
    for (i, &(s, e)) in windows.iter().enumerate() {
        owner[s as usize..=e as usize].iter_mut().for_each(|o| *o = i as u32);
    }
    let steps = &steps[..last];

    // counts[i * w + j]: replicates hitting both window i and window j
    let counts = (0..replicates)
        .into_par_iter()
        .fold(
            || vec![0u64; w * w],
            |mut acc, r| {
                let mut signs = SignSource::new(stream(master_seed, r));
                let mut hit = vec![false; w];
                let mut x = 0.0f64;
                if owner.first().is_some_and(|&o| o != u32::MAX) && x.abs() <= c {
                    hit[owner[0] as usize] = true;
                }
                for (t, &a) in steps.iter().enumerate() {
                    if signs.next_bit() {
                        x += a;
                    } else {
                        x -= a;
                    }
                    let o = owner[t + 1];
                    if o != u32::MAX && x.abs() <= c {
                        hit[o as usize] = true;
                    }
                }
                for i in 0..w {
                    if hit[i] {
                        for j in i..w {
                            if hit[j] {
                                acc[i * w + j] += 1;
                            }
                        }
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; w * w],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );

    let per_event = (0..w)
        .map(|i| (i + 1, EventStats::new(windows[i], counts[i * w + i], replicates)))
        .collect();
    let mut joint = Vec::new();
    for i in 0..w {
        for j in i + 1..w {
            joint.push(JointCount { j: i + 1, k: j + 1, hits: counts[i * w + j] });
        }
    }
    Ok(RecurrenceStats { c, replicates, per_event, joint })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KochenStoneEstimate {
    pub up_to_k: usize,
    pub z_mean: f64,
    pub z_second_moment: f64,
    pub ratio: f64,
    pub zero_mean: bool,
}

/// Plug-in moments of `Z = sum_{k <= K} 1(E_k)`:
/// `E Z = sum p_k` and `E Z^2 = sum p_k + 2 sum_{j<k} p_jk`.
pub fn kochen_stone_estimate(stats: &RecurrenceStats, up_to_k: usize) -> Result<KochenStoneEstimate> {
    if stats.replicates == 0 {
        return Err(domain("no replicates"));
    }
    let r = stats.replicates as f64;
    let mut singles = 0u64;
    let mut pairs = 0u64;
    for k in 1..=up_to_k {
        let e = stats
            .per_event
            .get(&k)
            .ok_or_else(|| domain(format!("event {k} missing from stats")))?;
        singles += e.hits;
        for j in 1..k {
            pairs += stats
                .joint_hits(j, k)
                .ok_or_else(|| domain(format!("joint count ({j},{k}) missing")))?;
        }
    }
    let z_mean = singles as f64 / r;
    let z_second_moment = (singles + 2 * pairs) as f64 / r;
    if z_second_moment == 0.0 {
        return Ok(KochenStoneEstimate { up_to_k, z_mean, z_second_moment, ratio: 0.0, zero_mean: true });
    }
    let ks = kochen_stone_ratio(z_mean, z_second_moment)?;
    Ok(KochenStoneEstimate { up_to_k, z_mean, z_second_moment, ratio: ks.ratio, zero_mean: ks.zero_mean })
}
