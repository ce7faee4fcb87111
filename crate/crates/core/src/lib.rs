//! Rademacher random walks: step sequences, exact laws, closed-form
//! anti-concentration bounds and reproducible Monte Carlo.

pub mod bounds;
pub mod error;
pub mod exactdist;
pub mod mc;
pub mod rng;
pub mod seqgen;
pub mod stats;

pub use error::{Error, Result};
pub use seqgen::{generate, Family, GrowthFn, SequenceCounts, StepSequenceSpec};

pub use exactdist::{walk_pmf, ExactPmf, ModularPmf};
pub use mc::{McOutcome, McRunManifest};
