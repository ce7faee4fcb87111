use std::collections::{BTreeMap, BTreeSet};

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Multiplicity `L_i` of every value `i` in a sequence prefix.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceCounts {
    pub counts: BTreeMap<u64, u64>,
    pub prefix_length: u64,
}

impl SequenceCounts {
    pub fn get(&self, value: u64) -> u64 {
        self.counts.get(&value).copied().unwrap_or(0)
    }
}

pub fn value_counts(seq: &[f64]) -> Result<SequenceCounts> {
    let ints = super::integer_steps(seq)?;
    let mut counts = BTreeMap::new();
    for v in ints {
        *counts.entry(v).or_insert(0u64) += 1;
    }
    Ok(SequenceCounts { counts, prefix_length: seq.len() as u64 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntsReport {
    pub n: u64,
    pub assump1_holds: bool,
    /// Sum of `L_i` over `i <= n` coprime to `n`.
    pub assump1_lhs: u128,
    /// `2 n^2`
    pub assump1_rhs: u128,
    pub assump2_holds: bool,
    /// Sum of `i^2 L_i` over `i < n`.
    pub assump2_lhs: u128,
    /// `4 n^2 ln(n)^3 L_n`
    pub assump2_rhs: f64,
}

/// Evaluates both counting inequalities at `n`.
///
/// The second one is only counted as holding when `n` actually occurs
/// (`L_n > 0`); otherwise it is vacuous and says nothing about the sequence.
pub fn check_ints_conditions(counts: &SequenceCounts, n: u64) -> Result<IntsReport> {
    if n < 2 {
        return Err(domain("n must be at least 2"));
    }
    let assump1_lhs: u128 = counts
        .counts
        .range(1..=n)
        .filter(|(i, _)| i.gcd(&n) == 1)
        .map(|(_, &l)| l as u128)
        .sum();
    let assump1_rhs = 2 * (n as u128) * (n as u128);
    let assump2_lhs: u128 = counts
        .counts
        .range(..n)
        .map(|(&i, &l)| (i as u128) * (i as u128) * l as u128)
        .sum();
    let l_n = counts.get(n);
    let nf = n as f64;
    let assump2_rhs = 4.0 * nf * nf * nf.ln().powi(3) * l_n as f64;
    Ok(IntsReport {
        n,
        assump1_holds: assump1_lhs >= assump1_rhs,
        assump1_lhs,
        assump1_rhs,
        assump2_holds: l_n > 0 && assump2_lhs as f64 >= assump2_rhs,
        assump2_lhs,
        assump2_rhs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseWitness {
    pub value: u64,
    /// Smallest `s' < value` with `L_{s'} >= eps * value^2`.
    pub witness: Option<u64>,
    /// Sum of `1/s` over values `s <= value` of the set.
    pub reciprocal_sum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseReport {
    pub eps: f64,
    /// Every nonzero value of the prefix belongs to the set.
    pub values_in_set: bool,
    pub all_witnessed: bool,
    pub per_value: Vec<SparseWitness>,
}

/// Checks the sparse-value hypotheses on a finite prefix. An empty `valueset`
/// stands for the set of nonzero values that occur in the prefix.
pub fn check_sparse_conditions(
    counts: &SequenceCounts,
    valueset: &BTreeSet<u64>,
    eps: f64,
) -> Result<SparseReport> {
    if !(eps > 0.0) {
        return Err(domain("eps must be positive"));
    }
    let present: BTreeSet<u64> =
        counts.counts.iter().filter(|(&v, &l)| v > 0 && l > 0).map(|(&v, _)| v).collect();
    let set: BTreeSet<u64> = if valueset.is_empty() {
        present.clone()
    } else {
        valueset.iter().copied().filter(|&v| v > 0).collect()
    };
    let values_in_set = present.is_subset(&set);
    let mut per_value = Vec::with_capacity(present.len());
    let mut recip = 0.0;
    let mut set_iter = set.iter().peekable();
    for &s in &present {
        while let Some(&&v) = set_iter.peek() {
            if v > s {
                break;
            }
            recip += 1.0 / v as f64;
            set_iter.next();
        }
        let need = eps * (s as f64) * (s as f64);
        let witness = counts
            .counts
            .range(1..s)
            .find(|(_, &l)| l as f64 >= need)
            .map(|(&v, _)| v);
        per_value.push(SparseWitness { value: s, witness, reciprocal_sum: recip });
    }
    Ok(SparseReport {
        eps,
        values_in_set,
        all_witnessed: !per_value.is_empty() && per_value.iter().all(|w| w.witness.is_some()),
        per_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqgen::{generate, StepSequenceSpec};

    fn counts_of(pairs: &[(u64, u64)]) -> SequenceCounts {
        let counts: BTreeMap<u64, u64> = pairs.iter().copied().collect();
        let prefix_length = counts.values().sum();
        SequenceCounts { counts, prefix_length }
    }

    #[test]
    fn sqrt_block_histogram() {
        let seq = generate(&StepSequenceSpec::sqrt_block(), 10).unwrap();
        let c = value_counts(&seq).unwrap();
        assert_eq!(c, counts_of(&[(1, 1), (3, 5), (5, 4)]));
    }

    #[test]
    fn trivial_histograms() {
        assert_eq!(value_counts(&[7.0, 7.0, 7.0]).unwrap(), counts_of(&[(7, 3)]));
        let empty = value_counts(&[]).unwrap();
        assert!(empty.counts.is_empty());
        assert_eq!(empty.prefix_length, 0);
        assert!(value_counts(&[1.5]).is_err());
    }

    #[test]
    fn ints_gcd_filter() {
        let c = counts_of(&[(1, 1_000_000), (2, 1_000_000), (3, 1_000_000), (4, 1_000_000)]);
        let r = check_ints_conditions(&c, 4).unwrap();
        assert_eq!(r.assump1_lhs, 2_000_000);
        assert_eq!(r.assump1_rhs, 32);
        assert!(r.assump1_holds);
    }

    #[test]
    fn ints_all_zero_fails() {
        let c = counts_of(&[(1, 0), (2, 0), (3, 0)]);
        let r = check_ints_conditions(&c, 3).unwrap();
        assert!(!r.assump1_holds);
        assert!(!r.assump2_holds);
        assert!(check_ints_conditions(&c, 1).is_err());
    }

    #[test]
    fn sparse_witness_arithmetic() {
        let c = counts_of(&[(2, 100), (10, 1)]);
        let r = check_sparse_conditions(&c, &BTreeSet::new(), 1.0).unwrap();
        assert_eq!(r.per_value[1].value, 10);
        assert_eq!(r.per_value[1].witness, Some(2));
        assert_eq!(r.per_value[0].witness, None);
        assert!((r.per_value[1].reciprocal_sum - 0.6).abs() < 1e-15);
    }

    #[test]
    fn sparse_single_value_fails() {
        let c = counts_of(&[(5, 1000)]);
        let r = check_sparse_conditions(&c, &BTreeSet::new(), 1.0).unwrap();
        assert!(!r.all_witnessed);
        assert!(check_sparse_conditions(&c, &BTreeSet::new(), 0.0).is_err());
    }
}
