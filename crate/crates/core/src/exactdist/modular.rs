use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::ExactPmf;
use crate::error::{domain, Result};

/// Law of a walk position reduced modulo `modulus`; `probs[r] = P(X = r mod m)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModularPmf {
    pub modulus: u64,
    pub probs: Vec<f64>,
}

impl ModularPmf {
    pub fn max_prob(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }
}

fn check_modulus(m: u64) -> Result<usize> {
    if m < 2 {
        return Err(domain("modulus must be at least 2"));
    }
    usize::try_from(m).map_err(|_| domain("modulus too large"))
}

/// Direct cyclic convolution, one step at a time.
pub fn modular_walk_pmf(steps: &[u64], m: u64) -> Result<ModularPmf> {
    let mu = check_modulus(m)?;
    let mut probs = vec![0.0; mu];
    probs[0] = 1.0;
    let mut next = vec![0.0; mu];
    for &a in steps {
        let b = (a % m) as usize;
        if b == 0 {
            continue;
        }
        for (r, slot) in next.iter_mut().enumerate() {
            *slot = 0.5 * (probs[(r + mu - b) % mu] + probs[(r + b) % mu]);
        }
        std::mem::swap(&mut probs, &mut next);
    }
    Ok(ModularPmf { modulus: m, probs })
}

/// Fourier route: coefficient `lambda` is `prod_i cos(2 pi b_i lambda / m)`.
pub fn modular_walk_pmf_spectral(steps: &[u64], m: u64) -> Result<ModularPmf> {
    let mu = check_modulus(m)?;
    let coeffs: Vec<f64> = (0..m)
        .map(|lambda| {
            steps
                .iter()
                .map(|&a| {
                    let k = ((a % m) * lambda) % m;
                    (2.0 * PI * k as f64 / m as f64).cos()
                })
                .product()
        })
        .collect();
    let probs = (0..mu)
        .map(|r| {
            let s: f64 = coeffs
                .iter()
                .enumerate()
                .map(|(lambda, c)| {
                    let k = (lambda * r) % mu;
                    c * (2.0 * PI * k as f64 / m as f64).cos()
                })
                .sum();
            (s / m as f64).max(0.0)
        })
        .collect();
    Ok(ModularPmf { modulus: m, probs })
}

pub fn reduce_mod(pmf: &ExactPmf, m: u64) -> Result<ModularPmf> {
    let mu = check_modulus(m)?;
    let mut probs = vec![0.0; mu];
    for (&x, &p) in pmf.support.iter().zip(&pmf.probs) {
        probs[x.rem_euclid(m as i64) as usize] += p;
    }
    Ok(ModularPmf { modulus: m, probs })
}
