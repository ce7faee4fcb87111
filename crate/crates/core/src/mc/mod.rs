//! Reproducible Monte Carlo for walks beyond the exact engine.
//!
//! Replicate `i` of a run draws its signs from `rng::stream(master_seed, i)`,
//! so every estimate is a pure function of the manifest. Replicates are
//! sharded over the current rayon pool and only counts and sums are
//! aggregated, which keeps results independent of the thread count.

mod coupling;
mod embed;
mod hits;
mod q1;

pub use coupling::{
    replay_gap, simulate_coupling, CoupledPair, CouplingSummary, EpisodeRecord, StepModel,
    DEFAULT_MAX_INDEX_LOG2,
};
pub use embed::{block_increments, embed_2d, recount_block_zeros, EmbedSummary, TwoDEmbedding};
pub use hits::{
    estimate_interval_hits, kochen_stone_estimate, EventStats, JointCount, KochenStoneEstimate,
    RecurrenceStats,
};
pub use q1::{estimate_q1, fit_exponent, ExponentFit, Q1Estimate, WindowAnchor};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::rng::{stream, SignSource};
use crate::seqgen::{generate, StepSequenceSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", content = "params", rename_all = "snake_case")]
pub enum Experiment {
    IntervalHits {
        c: f64,
        windows: Vec<(u64, u64)>,
    },
    Q1Estimate {
        n: u64,
    },
    /// Embeds block `2k` of every replicate into the 2D lattice walk.
    Embed2d {
        k: u32,
    },
    Coupling {
        d: f64,
        epsilon: f64,
        /// Indices up to `2^max_index_log2` may be used.
        #[serde(default)]
        max_index_log2: Option<u32>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McRunManifest {
    pub master_seed: u64,
    pub replicates: u64,
    /// Largest time index simulated.
    pub horizon: u64,
    pub spec: StepSequenceSpec,
    #[serde(flatten)]
    pub experiment: Experiment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum McOutcome {
    IntervalHits(RecurrenceStats),
    Q1Estimate(Q1Estimate),
    Embed2d(EmbedSummary),
    Coupling(CouplingSummary),
}

impl McRunManifest {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(config("replicates must be positive"));
        }
        if self.horizon == 0 {
            return Err(config("horizon must be positive"));
        }
        self.spec.validate()
    }

    pub fn steps(&self) -> Result<Vec<f64>> {
        let n = usize::try_from(self.horizon).map_err(|_| config("horizon too large"))?;
        generate(&self.spec, n)
    }
}

/// Positions `X_0..=X_n` for the given steps and sign source.
pub fn walk_positions<R: rand::RngCore>(steps: &[f64], signs: &mut SignSource<R>) -> Vec<f64> {
    let mut out = Vec::with_capacity(steps.len() + 1);
    let mut x = 0.0f64;
    out.push(x);
    for &a in steps {
        if signs.next_bit() {
            x += a;
        } else {
            x -= a;
        }
        out.push(x);
    }
    out
}

/// Trace `X_0..=X_horizon` of one replicate.
pub fn simulate_walk(manifest: &McRunManifest, replicate: u64) -> Result<Vec<f64>> {
    manifest.validate()?;
    if replicate >= manifest.replicates {
        return Err(config(format!(
            "replicate {replicate} out of range (replicates = {})",
            manifest.replicates
        )));
    }
    let steps = manifest.steps()?;
    Ok(walk_positions(&steps, &mut SignSource::new(stream(manifest.master_seed, replicate))))
}

/// Runs the experiment described by `manifest` on the current rayon pool.
pub fn run(manifest: &McRunManifest) -> Result<McOutcome> {
    manifest.validate()?;
    match &manifest.experiment {
        Experiment::IntervalHits { c, windows } => {
            let steps = manifest.steps()?;
            estimate_interval_hits(&steps, manifest.master_seed, manifest.replicates, *c, windows)
                .map(McOutcome::IntervalHits)
        }
        Experiment::Q1Estimate { n } => {
            if *n > manifest.horizon {
                return Err(config("q1 time index exceeds horizon"));
            }
            let steps = manifest.steps()?;
            estimate_q1(&steps[..*n as usize], manifest.master_seed, manifest.replicates)
                .map(McOutcome::Q1Estimate)
        }
        Experiment::Embed2d { k } => {
            let steps = manifest.steps()?;
            embed::embed_experiment(&steps, manifest.master_seed, manifest.replicates, *k)
                .map(McOutcome::Embed2d)
        }
        Experiment::Coupling { d, epsilon, max_index_log2 } => {
            let model = StepModel::from_spec(&manifest.spec, manifest.horizon)?;
            coupling::coupling_experiment(
                &model,
                *d,
                *epsilon,
                manifest.master_seed,
                manifest.replicates,
                max_index_log2.unwrap_or(DEFAULT_MAX_INDEX_LOG2),
            )
            .map(McOutcome::Coupling)
        }
    }
}

/// Maps every replicate through `f` in parallel, preserving replicate order.
pub(crate) fn per_replicate<T: Send>(
    replicates: u64,
    f: impl Fn(u64) -> T + Sync + Send,
) -> Vec<T> {
    (0..replicates).into_par_iter().map(f).collect()
}
