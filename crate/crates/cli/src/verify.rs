//! Randomised verification suites. Each suite draws its cases from
//! `stream(seed, suite index)`, checks them in parallel and reports every
//! failing case together with the empirical constants it observed.

use std::collections::BTreeMap;

use clap::ValueEnum;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rlab_core::bounds::{
    combine_scales_rhs, cosine_product_bound, elo_bound, hoeffding_tail, local_clt_approx, modular_elo_bound,
    BOUND_TOLERANCE, PALEY_ZYGMUND_FLOOR,
};
use rlab_core::exactdist::{
    abs_tail_prob, concentration_q, modular_walk_pmf, modular_walk_pmf_spectral, rational_walk_pmf, reduce_dyadic,
    summary_moments, tail_prob, walk_pmf, ExactPmf,
};
use rlab_core::mc::fit_exponent;
use rlab_core::rng::stream;

use crate::commands::exact_q_series;
use crate::report::Table;
use crate::{CliError, Ctx, Output, VerifyArgs};

pub const DEFAULT_VERIFY_SEED: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Suite {
    Elo,
    ModularElo,
    Hoeffding,
    PaleyZygmund,
    CombineScales,
    Prefix,
    LocalClt,
    ExponentFit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseFailure {
    pub case: String,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifySuiteResult {
    pub suite: Suite,
    pub seed: u64,
    pub cases_run: u64,
    pub failures: Vec<CaseFailure>,
    pub empirical_constants: BTreeMap<String, f64>,
}

impl VerifySuiteResult {
    fn new(suite: Suite, seed: u64) -> Self {
        VerifySuiteResult { suite, seed, cases_run: 0, failures: Vec::new(), empirical_constants: BTreeMap::new() }
    }

    fn fail(&mut self, case: impl Into<String>, detail: impl Into<String>) {
        self.failures.push(CaseFailure { case: case.into(), detail: detail.into() });
    }

    fn constant(&mut self, name: &str, value: f64) {
        self.empirical_constants.insert(name.to_string(), value);
    }
}

pub fn run_suite(a: &VerifyArgs, ctx: &mut Ctx) -> Result<Output, CliError> {
    let seed = ctx.seed.unwrap_or(DEFAULT_VERIFY_SEED);
    let result = match a.suite {
        Suite::Elo => elo(seed, a.max_n.unwrap_or(18), a.cases.unwrap_or(10))?,
        Suite::ModularElo => modular(seed, a.max_m.unwrap_or(64), a.max_n, a.cases.unwrap_or(20))?,
        Suite::Hoeffding => hoeffding(seed, a.max_n.unwrap_or(18), a.cases.unwrap_or(10))?,
        Suite::PaleyZygmund => paley_zygmund(seed, a.max_n.unwrap_or(18), a.cases.unwrap_or(10))?,
        Suite::CombineScales => combine_scales(seed, a.cases.unwrap_or(200))?,
        Suite::Prefix => prefix(seed, a.max_n.unwrap_or(14), a.cases.unwrap_or(200))?,
        Suite::LocalClt => local_clt(seed, a.max_n.unwrap_or(10_000))?,
        Suite::ExponentFit => exponent_fit(seed, ctx.support_cap)?,
    };
    let mut table = Table::new(&["suite", "case", "detail"]);
    let name = serde_json::to_value(result.suite)?;
    for f in &result.failures {
        table.push(vec![name.as_str().unwrap().into(), f.case.as_str().into(), f.detail.as_str().into()]);
    }
    let failure = (!result.failures.is_empty())
        .then(|| format!("{} of {} cases failed", result.failures.len(), result.cases_run));
    Ok(Output { report: serde_json::to_value(&result)?, table, text: None, failure })
}

fn suite_rng(seed: u64, suite: Suite) -> impl Rng {
    stream(seed, suite as u64)
}

fn check_max_n(max_n: u64, limit: u64) -> Result<usize, CliError> {
    if max_n == 0 || max_n > limit {
        return Err(CliError::Usage(format!("--max-n must lie in 1..={limit}")));
    }
    Ok(max_n as usize)
}

/// Random step lists, `cases` of each length `1..=max_n`.
fn step_lists(rng: &mut impl Rng, max_n: usize, cases: u64, lo: u64, hi: u64) -> Vec<Vec<u64>> {
    let mut out = Vec::new();
    for n in 1..=max_n {
        for _ in 0..cases {
            out.push((0..n).map(|_| rng.random_range(lo..=hi)).collect());
        }
    }
    out
}

/// Exhaustive sum over all `2^n` sign vectors: value -> number of vectors.
pub fn enumerate_signs(steps: &[u64]) -> BTreeMap<i64, u64> {
    let n = steps.len();
    let mut out = BTreeMap::new();
    for mask in 0u64..(1u64 << n) {
        let x: i64 = steps
            .iter()
            .enumerate()
            .map(|(i, &a)| if mask >> i & 1 == 1 { a as i64 } else { -(a as i64) })
            .sum();
        *out.entry(x).or_insert(0) += 1;
    }
    out
}

fn elo(seed: u64, max_n: u64, cases: u64) -> Result<VerifySuiteResult, CliError> {
    let max_n = check_max_n(max_n, 22)?;
    let mut rng = suite_rng(seed, Suite::Elo);
    let mut corpus = Vec::new();
    for n in 1..=max_n {
        for _ in 0..cases {
            let c: u64 = rng.random_range(1..=3);
            // narrow ranges force many coincident sums
            let width = if rng.random_bool(0.5) { 2 } else { 12 };
            corpus.push((c, (0..n).map(|_| rng.random_range(c..=c + width)).collect::<Vec<u64>>()));
        }
    }
    let rows: Vec<(Option<String>, f64)> = corpus
        .par_iter()
        .map(|(c, steps)| {
            let n = steps.len();
            let oracle = enumerate_signs(steps);
            let exact = match rational_walk_pmf(steps) {
                Ok(p) => p,
                Err(e) => return (Some(e.to_string()), 0.0),
            };
            let float = match walk_pmf(steps) {
                Ok(p) => p,
                Err(e) => return (Some(e.to_string()), 0.0),
            };
            if exact.support.len() != oracle.len() || float.support != exact.support {
                return (Some("support differs from enumeration".into()), 0.0);
            }
            for (i, (&x, &count)) in oracle.iter().enumerate() {
                if exact.support[i] != x || exact.reduced(i) != reduce_dyadic(count as u128, n as u32) {
                    return (Some(format!("atom {x}: rational mass differs from enumeration")), 0.0);
                }
                let want = count as f64 / (1u64 << n) as f64;
                if (float.probs[i] - want).abs() > 1e-12 {
                    return (Some(format!("atom {x}: float mass {} vs {want}", float.probs[i])), 0.0);
                }
            }
            let q = concentration_q(&float, 2.0 * *c as f64).map(|q| q.result).unwrap_or(f64::NAN);
            let bound = elo_bound(n as u64).unwrap_or(f64::NAN);
            let detail = (!(q <= bound + BOUND_TOLERANCE)).then(|| format!("Q_2c = {q} > {bound}"));
            (detail, q / bound)
        })
        .collect();
    let mut res = VerifySuiteResult::new(Suite::Elo, seed);
    let mut worst: f64 = 0.0;
    for ((c, steps), (detail, ratio)) in corpus.iter().zip(rows) {
        res.cases_run += 1;
        worst = worst.max(ratio);
        if let Some(d) = detail {
            res.fail(format!("c={c} steps={steps:?}"), d);
        }
    }
    res.constant("max_q_over_bound", worst);
    Ok(res)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn modular(seed: u64, max_m: u64, max_n: Option<u64>, cases: u64) -> Result<VerifySuiteResult, CliError> {
    if !(3..=1024).contains(&max_m) {
        return Err(CliError::Usage("--max-m must lie in 3..=1024".into()));
    }
    let lengths: Vec<usize> = [10usize, 100, 1000]
        .into_iter()
        .filter(|&n| max_n.map_or(true, |cap| n as u64 <= cap))
        .collect();
    let mut rng = suite_rng(seed, Suite::ModularElo);
    let mut corpus = Vec::new();
    for m in 3..=max_m {
        for &n in &lengths {
            for _ in 0..cases {
                let steps: Vec<u64> = (0..n)
                    .map(|_| loop {
                        let b = rng.random_range(1..=1000u64);
                        if gcd(b, m) == 1 {
                            break b;
                        }
                    })
                    .collect();
                corpus.push((m, steps));
            }
        }
    }
    let rows: Vec<(Option<String>, f64)> = corpus
        .par_iter()
        .map(|(m, steps)| {
            let run = || -> Result<(Option<String>, f64), rlab_core::Error> {
                let direct = modular_walk_pmf(steps, *m)?;
                let spectral = modular_walk_pmf_spectral(steps, *m)?;
                let gap = direct.probs.iter().zip(&spectral.probs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                let max_r = direct.max_prob();
                let cos = cosine_product_bound(*m, steps)?;
                let bound = modular_elo_bound(*m, steps.len() as u64)?;
                let detail = if gap > 1e-10 {
                    Some(format!("direct and spectral residue laws differ by {gap}"))
                } else if max_r > cos + BOUND_TOLERANCE {
                    Some(format!("max residue probability {max_r} > cosine product {cos}"))
                } else if cos > bound + 1e-10 {
                    Some(format!("cosine product {cos} > modular bound {bound}"))
                } else {
                    None
                };
                Ok((detail, cos / bound))
            };
            run().unwrap_or_else(|e| (Some(e.to_string()), 0.0))
        })
        .collect();
    let mut res = VerifySuiteResult::new(Suite::ModularElo, seed);
    let mut worst: f64 = 0.0;
    for ((m, steps), (detail, ratio)) in corpus.iter().zip(rows) {
        res.cases_run += 1;
        worst = worst.max(ratio);
        if let Some(d) = detail {
            res.fail(format!("m={m} n={}", steps.len()), d);
        }
    }
    res.constant("max_cosine_over_bound", worst);
    Ok(res)
}

const HOEFFDING_T: [f64; 5] = [0.0, 0.5, 1.0, 2.0, 3.0];

fn hoeffding(seed: u64, max_n: u64, cases: u64) -> Result<VerifySuiteResult, CliError> {
    let max_n = check_max_n(max_n, 22)?;
    let corpus = step_lists(&mut suite_rng(seed, Suite::Hoeffding), max_n, cases, 1, 20);
    let rows: Vec<(Option<String>, f64)> = corpus
        .par_iter()
        .map(|steps| {
            let pmf = walk_pmf(steps).expect("small walks fit the default cap");
            let seq: Vec<f64> = steps.iter().map(|&a| a as f64).collect();
            let l2 = summary_moments(&seq).l2_norm;
            let mut worst: f64 = 0.0;
            for t in HOEFFDING_T {
                let h = hoeffding_tail(l2, t).unwrap();
                let tail = tail_prob(&pmf, h.threshold);
                worst = worst.max(tail / h.bound);
                if tail > h.bound + BOUND_TOLERANCE {
                    return (Some(format!("t={t}: P(X >= {}) = {tail} > {}", h.threshold, h.bound)), worst);
                }
            }
            (None, worst)
        })
        .collect();
    let mut res = VerifySuiteResult::new(Suite::Hoeffding, seed);
    let mut worst: f64 = 0.0;
    for (steps, (detail, ratio)) in corpus.iter().zip(rows) {
        res.cases_run += 1;
        worst = worst.max(ratio);
        if let Some(d) = detail {
            res.fail(format!("steps={steps:?}"), d);
        }
    }
    res.constant("max_tail_over_bound", worst);
    Ok(res)
}

fn paley_zygmund(seed: u64, max_n: u64, cases: u64) -> Result<VerifySuiteResult, CliError> {
    let max_n = check_max_n(max_n, 22)?;
    let corpus = step_lists(&mut suite_rng(seed, Suite::PaleyZygmund), max_n, cases, 1, 20);
    let probs: Vec<f64> = corpus
        .par_iter()
        .map(|steps| {
            let pmf = walk_pmf(steps).expect("small walks fit the default cap");
            let seq: Vec<f64> = steps.iter().map(|&a| a as f64).collect();
            abs_tail_prob(&pmf, summary_moments(&seq).l2_norm / 2.0)
        })
        .collect();
    let mut res = VerifySuiteResult::new(Suite::PaleyZygmund, seed);
    let mut least: f64 = 1.0;
    for (steps, p) in corpus.iter().zip(probs) {
        res.cases_run += 1;
        least = least.min(p);
        if p < PALEY_ZYGMUND_FLOOR - BOUND_TOLERANCE {
            res.fail(format!("steps={steps:?}"), format!("P(|X| >= |a|/2) = {p} < 3/16"));
        }
    }
    res.constant("min_probability", least);
    Ok(res)
}

/// A PMF with 1 to 8 atoms on `[-12, 12]`.
fn random_pmf(rng: &mut impl Rng) -> ExactPmf {
    let k = rng.random_range(1..=8);
    let atoms: Vec<(i64, f64)> = (0..k).map(|_| (rng.random_range(-12..=12), rng.random_range(0.05..1.0))).collect();
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    ExactPmf::from_atoms(atoms.into_iter().map(|(x, p)| (x, p / total))).unwrap()
}

const SCALES: [f64; 4] = [0.5, 1.0, 2.0, 3.0];

fn combine_scales(seed: u64, cases: u64) -> Result<VerifySuiteResult, CliError> {
    let mut rng = suite_rng(seed, Suite::CombineScales);
    let corpus: Vec<(ExactPmf, ExactPmf)> = (0..cases).map(|_| (random_pmf(&mut rng), random_pmf(&mut rng))).collect();
    let rows: Vec<(Vec<String>, f64)> = corpus
        .par_iter()
        .map(|(a, b)| {
            let sum = a.convolve(b).unwrap();
            let mut fails = Vec::new();
            let mut worst: f64 = 0.0;
            for r in SCALES {
                for ds in [0.5, 1.0, 2.0, 4.0] {
                    let s = r + ds;
                    let lhs = concentration_q(&sum, r).unwrap().result;
                    let rhs = combine_scales_rhs(
                        concentration_q(a, r).unwrap().result,
                        concentration_q(b, s).unwrap().result,
                        abs_tail_prob(a, s),
                    );
                    worst = worst.max(lhs / rhs);
                    if lhs > rhs + BOUND_TOLERANCE {
                        fails.push(format!("r={r} s={s}: Q_r(A+B) = {lhs} > {rhs}"));
                    }
                }
            }
            (fails, worst)
        })
        .collect();
    let mut res = VerifySuiteResult::new(Suite::CombineScales, seed);
    let mut worst: f64 = 0.0;
    for (i, (fails, ratio)) in rows.into_iter().enumerate() {
        res.cases_run += 1;
        worst = worst.max(ratio);
        for f in fails {
            res.fail(format!("case {i}"), f);
        }
    }
    res.constant("max_lhs_over_rhs", worst);
    Ok(res)
}

fn prefix(seed: u64, max_n: u64, cases: u64) -> Result<VerifySuiteResult, CliError> {
    let max_n = check_max_n(max_n, 22)?;
    let mut rng = suite_rng(seed, Suite::Prefix);
    let mut corpus = Vec::new();
    for _ in 0..cases {
        let n = rng.random_range(1..=max_n);
        let m = rng.random_range(1..=n.min(6));
        let s: Vec<u64> = (0..n).map(|_| rng.random_range(1..=15)).collect();
        let mut t = s.clone();
        for v in t.iter_mut().take(m) {
            *v = rng.random_range(0..=15);
        }
        corpus.push((m, s, t, random_pmf(&mut rng), random_pmf(&mut rng)));
    }
    let rows: Vec<Vec<String>> = corpus
        .par_iter()
        .map(|(m, s, t, a, b)| {
            let mut fails = Vec::new();
            let x = walk_pmf(s).unwrap();
            let y = walk_pmf(t).unwrap();
            let factor = (1u64 << (m + 1)) as f64;
            let ab = a.convolve(b).unwrap();
            for r in [1.0, 2.0, 5.0] {
                let qx = concentration_q(&x, r).unwrap().result;
                let qy = concentration_q(&y, r).unwrap().result;
                if qx > factor * qy + BOUND_TOLERANCE || qy > factor * qx + BOUND_TOLERANCE {
                    fails.push(format!("r={r}: Q = {qx}, Q' = {qy} outside factor {factor}"));
                }
                let qa = concentration_q(a, r).unwrap().result;
                let qb = concentration_q(b, r).unwrap().result;
                let qab = concentration_q(&ab, r).unwrap().result;
                if qa * qb / 2.0 > qab + BOUND_TOLERANCE || qab > qa.min(qb) + BOUND_TOLERANCE {
                    fails.push(format!("r={r}: Q(A+B) = {qab} outside [{}, {}]", qa * qb / 2.0, qa.min(qb)));
                }
            }
            fails
        })
        .collect();
    let mut res = VerifySuiteResult::new(Suite::Prefix, seed);
    for ((m, s, t, _, _), fails) in corpus.iter().zip(rows) {
        res.cases_run += 1;
        for f in fails {
            res.fail(format!("m={m} steps={s:?} modified={t:?}"), f);
        }
    }
    Ok(res)
}

/// `P(X_n = 0)` of the simple walk for even `n <= max_n`, by the ratio
/// recurrence `p_{2k} = p_{2k-2} (2k - 1) / (2k)`.
pub fn ssrw_return_probs(max_n: u64) -> Vec<(u64, f64)> {
    let mut out = Vec::new();
    let mut p = 1.0f64;
    let mut n = 2;
    while n <= max_n {
        p *= (n - 1) as f64 / n as f64;
        out.push((n, p));
        n += 2;
    }
    out
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        (values[k / 2 - 1] + values[k / 2]) / 2.0
    }
}

fn local_clt(seed: u64, max_n: u64) -> Result<VerifySuiteResult, CliError> {
    if max_n < 2 {
        return Err(CliError::Usage("--max-n must be at least 2".into()));
    }
    let mut res = VerifySuiteResult::new(Suite::LocalClt, seed);
    let mut terms = Vec::new();
    let (mut worst, mut worst_n) = (0.0f64, 0u64);
    for (n, p) in ssrw_return_probs(max_n) {
        res.cases_run += 1;
        if n <= 1000 {
            let direct = elo_bound(n)?;
            if (direct - p).abs() > 1e-12 * p {
                res.fail(format!("n={n}"), format!("recurrence {p} vs central binomial {direct}"));
            }
        }
        let approx = local_clt_approx(n, 0)?.approx;
        let term = n as f64 * (p - approx).abs();
        if term > worst {
            worst = term;
            worst_n = n;
        }
        terms.push((n, term));
    }
    let mut sorted: Vec<f64> = terms.iter().map(|t| t.1).collect();
    let med = median(&mut sorted);
    for &(n, term) in &terms {
        if term > 10.0 * med {
            res.fail(format!("n={n}"), format!("n |P(X_n = 0) - approx| = {term} > 10 x median {med}"));
        }
    }
    res.constant("max_scaled_error", worst);
    res.constant("argmax_n", worst_n as f64);
    res.constant("median_scaled_error", med);
    res.constant("max_over_median", worst / med);
    Ok(res)
}

fn exponent_fit(seed: u64, cap: usize) -> Result<VerifySuiteResult, CliError> {
    let mut res = VerifySuiteResult::new(Suite::ExponentFit, seed);

    let linear: Vec<u64> = (1..=400).collect();
    let pts = exact_q_series(&linear, 50, 400, 10, 1.0, cap)?;
    let f = fit_exponent(&pts)?;
    let scaled = 400f64.powf(1.5) * pts.last().unwrap().1;
    let target = (6.0 / std::f64::consts::PI).sqrt();
    res.cases_run += 2;
    if !(-1.65..=-1.35).contains(&f.slope) {
        res.fail("a_n = n slope", format!("{} outside [-1.65, -1.35]", f.slope));
    }
    if !(scaled / target <= 1.5 && target / scaled <= 1.5) {
        res.fail("a_n = n scale", format!("n^1.5 Q1 = {scaled} not within x1.5 of {target}"));
    }
    res.constant("linear_slope", f.slope);
    res.constant("linear_r_squared", f.r_squared);
    res.constant("linear_scaled_q1_at_400", scaled);

    let ones = vec![1u64; 2000];
    let pts = exact_q_series(&ones, 100, 2000, 100, 1.0, cap)?;
    let f = fit_exponent(&pts)?;
    let scaled = (std::f64::consts::PI * 2000.0 / 2.0).sqrt() * pts.last().unwrap().1;
    res.cases_run += 2;
    if !(-0.55..=-0.45).contains(&f.slope) {
        res.fail("a_n = 1 slope", format!("{} outside [-0.55, -0.45]", f.slope));
    }
    if (scaled - 1.0).abs() > 0.02 {
        res.fail("a_n = 1 scale", format!("sqrt(pi n / 2) Q1 = {scaled} not within 2% of 1"));
    }
    res.constant("unit_slope", f.slope);
    res.constant("unit_r_squared", f.r_squared);
    res.constant("unit_scaled_q1_at_2000", scaled);
    Ok(res)
}
