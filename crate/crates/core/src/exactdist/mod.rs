//! Exact laws of integer-step Rademacher walks on the integers and on the
//! cyclic groups.

mod modular;
mod pmf;

pub use modular::{modular_walk_pmf, modular_walk_pmf_spectral, reduce_mod, ModularPmf};
pub use pmf::{
    abs_tail_prob, concentration_q, rational_walk_pmf, reduce_dyadic, summary_moments, tail_prob,
    walk_pmf, walk_pmf_with_cap, ConcentrationQuery, ExactPmf, Moments, RationalPmf,
    DEFAULT_SUPPORT_CAP, RATIONAL_MAX_STEPS,
};
