//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. Every Monte Carlo criterion uses the fixed seed `SEED`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::Rng;
use rlab::run_with;
use rlab_core::bounds::{anti_exponent_f, cosine_product_bound, delta_star, elo_bound, f_large_delta, f_small_delta,
    local_clt_approx, lower_anti_floor};
use rlab_core::exactdist::{concentration_q, modular_walk_pmf, rational_walk_pmf, walk_pmf, ExactPmf};
use rlab_core::mc::{
    block_increments, embed_2d, estimate_interval_hits, fit_exponent, simulate_coupling, walk_positions, StepModel,
};
use rlab_core::rng::{stream, SignSource};
use rlab_core::seqgen::{check_ints_conditions, value_counts};
use rlab_core::{generate, StepSequenceSpec};

const SEED: u64 = 1;

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let t = start.elapsed();
    if t > limit {
        Err(format!("took {t:.1?}, limit {limit:?}"))
    } else {
        Ok(())
    }
}

/// Number of sign vectors giving each value, by depth-first enumeration.
fn enumerate(steps: &[u64]) -> BTreeMap<i64, u128> {
    fn go(steps: &[u64], x: i64, out: &mut BTreeMap<i64, u128>) {
        match steps.split_first() {
            None => *out.entry(x).or_insert(0) += 1,
            Some((&a, rest)) => {
                go(rest, x + a as i64, out);
                go(rest, x - a as i64, out);
            }
        }
    }
    let mut out = BTreeMap::new();
    go(steps, 0, &mut out);
    out
}

/// Pascal row `C(n, k)` for `k = 0..=n`.
fn binomials(n: usize) -> Vec<u128> {
    let mut row = vec![1u128];
    for _ in 0..n {
        let mut next = vec![1u128; row.len() + 1];
        for k in 1..row.len() {
            next[k] = row[k - 1] + row[k];
        }
        row = next;
    }
    row
}

struct Case {
    c: u64,
    steps: Vec<u64>,
}

fn corpus() -> Vec<Case> {
    let mut rng = stream(SEED, 1);
    (0..200)
        .map(|_| {
            let n = rng.random_range(1..=18usize);
            let c = rng.random_range(1..=4u64);
            let width = if rng.random_bool(0.5) { 3 } else { 25 };
            Case { c, steps: (0..n).map(|_| rng.random_range(c..=c + width)).collect() }
        })
        .collect()
}

fn c1_oracle(cases: &[Case]) -> Verdict {
    let start = Instant::now();
    let mut atoms = 0usize;
    for (i, case) in cases.iter().enumerate() {
        let n = case.steps.len();
        let oracle = enumerate(&case.steps);
        let exact = rational_walk_pmf(&case.steps).map_err(|e| e.to_string())?;
        let float = walk_pmf(&case.steps).map_err(|e| e.to_string())?;
        let got: BTreeMap<i64, u128> = exact.support.iter().copied().zip(exact.counts.iter().copied()).collect();
        if got != oracle || exact.denom_log2 as usize != n {
            return Err(format!("case {i}: rational law differs from enumeration"));
        }
        if float.support.len() != oracle.len() {
            return Err(format!("case {i}: float support differs"));
        }
        for ((x, p), (y, c)) in float.support.iter().zip(&float.probs).zip(&oracle) {
            let want = *c as f64 / (1u64 << n) as f64;
            if x != y || (p - want).abs() > 1e-12 {
                return Err(format!("case {i}: atom {x} has {p}, want {want}"));
            }
        }
        atoms += oracle.len();
    }
    within(Duration::from_secs(60), start)?;
    Ok(format!("{} lists, {atoms} atoms exact, {:.1?}", cases.len(), start.elapsed()))
}

fn c2_elo(cases: &[Case]) -> Verdict {
    let mut worst: f64 = 0.0;
    for (i, case) in cases.iter().enumerate() {
        let n = case.steps.len();
        let exact = rational_walk_pmf(&case.steps).map_err(|e| e.to_string())?;
        let q = exact.concentration_count(2.0 * case.c as f64).map_err(|e| e.to_string())?;
        let central = binomials(n)[n / 2];
        if q > central {
            return Err(format!("case {i}: Q_2c = {q}/2^{n} > C({n},{}) / 2^{n}", n / 2));
        }
        let float = elo_bound(n as u64).map_err(|e| e.to_string())?;
        if (float - central as f64 / (1u64 << n) as f64).abs() > 1e-15 {
            return Err(format!("elo_bound({n}) = {float} disagrees with Pascal's triangle"));
        }
        worst = worst.max(q as f64 / central as f64);
    }
    Ok(format!("zero violations, max Q_2c / bound = {worst:.4}"))
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn c3_modular() -> Verdict {
    let start = Instant::now();
    let mut rng = stream(SEED, 3);
    let mut count = 0;
    let mut worst: f64 = 0.0;
    for m in 3..=64u64 {
        for n in [10usize, 100, 1000] {
            for _ in 0..20 {
                let steps: Vec<u64> = (0..n)
                    .map(|_| loop {
                        let b = rng.random_range(1..=10_000u64);
                        if gcd(b, m) == 1 {
                            break b;
                        }
                    })
                    .collect();
                let max_r = modular_walk_pmf(&steps, m).map_err(|e| e.to_string())?.max_prob();
                let cos = cosine_product_bound(m, &steps).map_err(|e| e.to_string())?;
                let head = if m % 2 == 1 { 1.0 } else { 2.0 } / m as f64;
                let bound = head + (2.0 / (PI * n as f64)).sqrt();
                if max_r > cos + 1e-12 || cos > bound + 1e-10 {
                    return Err(format!("m={m} n={n}: max_r {max_r}, cosine {cos}, bound {bound}"));
                }
                worst = worst.max(cos / bound);
                count += 1;
            }
        }
    }
    within(Duration::from_secs(300), start)?;
    Ok(format!("{count} lists, max cosine/bound = {worst:.4}, {:.1?}", start.elapsed()))
}

/// `(n, Q_1(X_n))` for every `n` in `from..=to`.
fn q1_series(steps: &[u64], from: usize, to: usize) -> Result<Vec<(f64, f64)>, String> {
    let mut pmf = ExactPmf::origin();
    let mut out = Vec::new();
    for (i, &a) in steps.iter().take(to).enumerate() {
        pmf.apply_step(a, usize::MAX).map_err(|e| e.to_string())?;
        if i + 1 >= from {
            out.push(((i + 1) as f64, concentration_q(&pmf, 1.0).map_err(|e| e.to_string())?.result));
        }
    }
    Ok(out)
}

fn c4_stanley() -> Verdict {
    let start = Instant::now();
    let steps: Vec<u64> = (1..=400).collect();
    let pts = q1_series(&steps, 50, 400)?;
    let fit = fit_exponent(&pts).map_err(|e| e.to_string())?;
    let scaled = 400f64.powf(1.5) * pts.last().unwrap().1;
    let target = (6.0 / PI).sqrt();
    within(Duration::from_secs(600), start)?;
    check(
        (-1.65..=-1.35).contains(&fit.slope) && scaled / target <= 1.5 && target / scaled <= 1.5,
        format!("slope {:.4}, n^1.5 Q1(400) = {scaled:.4} vs {target:.4}, {:.1?}", fit.slope, start.elapsed()),
    )
}

fn c5_ssrw() -> Verdict {
    let pts = q1_series(&[1; 2000], 100, 2000)?;
    let fit = fit_exponent(&pts).map_err(|e| e.to_string())?;
    let scaled = (PI * 2000.0 / 2.0).sqrt() * pts.last().unwrap().1;
    check(
        (-0.55..=-0.45).contains(&fit.slope) && (scaled - 1.0).abs() <= 0.02,
        format!("slope {:.4}, sqrt(pi n/2) Q1(2000) = {scaled:.6}", fit.slope),
    )
}

fn c6_exponent() -> Verdict {
    let mut rng = stream(SEED, 6);
    let mut gap: f64 = 0.0;
    for _ in 0..100 {
        let alpha = rng.random_range(1e-3..=4.0);
        let q = anti_exponent_f(alpha, 0.0, 0.01).map_err(|e| e.to_string())?;
        if q.f_value != 1.0 {
            return Err(format!("f({alpha}, 0) = {}", q.f_value));
        }
    }
    for _ in 0..100 {
        let alpha: f64 = rng.random_range(1e-3..=4.0);
        let ds = ((alpha * alpha + 1.0).sqrt() - alpha) / 2.0;
        if (ds - delta_star(alpha)).abs() > 1e-12 {
            return Err(format!("delta* mismatch at alpha {alpha}"));
        }
        gap = gap.max((f_small_delta(alpha, ds) - f_large_delta(alpha, ds)).abs());
    }
    check(gap <= 1e-9, format!("f(alpha,0) = 1 for 100 alphas; max branch gap at delta* = {gap:.2e}"))
}

/// Smallest integer `r` with `r^2 >= v`.
fn ceil_sqrt(v: u128) -> u128 {
    let mut r = (v as f64).sqrt() as u128;
    while r * r < v {
        r += 1;
    }
    while r > 0 && (r - 1) * (r - 1) >= v {
        r -= 1;
    }
    r
}

fn c7_lower_anti() -> Verdict {
    let lists: Vec<(&str, Vec<u64>)> = vec![
        ("sqrt_block", generate(&StepSequenceSpec::sqrt_block(), 200).unwrap().iter().map(|&x| x as u64).collect()),
        ("n", (1..=200).collect()),
        ("n^2", (1..=200u64).map(|k| k * k).collect()),
    ];
    let mut checked = 0;
    let mut worst = f64::INFINITY;
    for (name, steps) in lists {
        let mut pmf = ExactPmf::origin();
        let mut var = 0u128;
        for (i, &a) in steps.iter().enumerate() {
            pmf.apply_step(a, usize::MAX).map_err(|e| e.to_string())?;
            var += (a as u128) * (a as u128);
            let floor = 3.0 / (16.0 * ceil_sqrt(var) as f64);
            if (lower_anti_floor(var as f64).map_err(|e| e.to_string())? - floor).abs() > 1e-15 {
                return Err(format!("{name}, n={}: lower_anti_floor disagrees with {floor}", i + 1));
            }
            let q = concentration_q(&pmf, 1.0).map_err(|e| e.to_string())?.result;
            if q < floor {
                return Err(format!("{name}, n={}: Q1 = {q} < {floor}", i + 1));
            }
            worst = worst.min(q / floor);
            checked += 1;
        }
    }
    Ok(format!("{checked} walks, zero violations, min Q1/floor = {worst:.3}"))
}

fn c8_hoeffding_pz(cases: &[Case]) -> Verdict {
    let mut least: f64 = 1.0;
    for (i, case) in cases.iter().enumerate() {
        let n = case.steps.len() as u32;
        let oracle = enumerate(&case.steps);
        let sq: u128 = case.steps.iter().map(|&a| (a as u128) * (a as u128)).sum();
        let total = 2f64.powi(n as i32);
        // t = k/2: X >= t |a| iff X >= 0 and 4 X^2 >= k^2 |a|^2
        for k in [0u128, 1, 2, 4, 6] {
            let t = k as f64 / 2.0;
            let hits: u128 = oracle
                .iter()
                .filter(|(&x, _)| x >= 0 && 4 * (x as i128 * x as i128) as u128 >= k * k * sq)
                .map(|(_, &c)| c)
                .sum();
            let p = hits as f64 / total;
            if p > (-t * t / 2.0).exp() + 1e-12 {
                return Err(format!("case {i}: P(X >= {t}|a|) = {p} > e^(-t^2/2)"));
            }
        }
        let hits: u128 =
            oracle.iter().filter(|(&x, _)| 4 * (x as i128 * x as i128) as u128 >= sq).map(|(_, &c)| c).sum();
        let p = hits as f64 / total;
        if 16 * hits < 3 * (1u128 << n) {
            return Err(format!("case {i}: P(|X| >= |a|/2) = {p} < 3/16"));
        }
        least = least.min(p);
    }
    Ok(format!("zero violations, min P(|X| >= |a|/2) = {least:.4}"))
}

fn c9_local_clt() -> Verdict {
    let mut pmf = ExactPmf::origin();
    let mut terms = Vec::new();
    for n in 1..=10_000u64 {
        pmf.apply_step(1, usize::MAX).map_err(|e| e.to_string())?;
        if n % 2 == 0 {
            let approx = local_clt_approx(n, 0).map_err(|e| e.to_string())?.approx;
            terms.push((n, n as f64 * (pmf.prob(0) - approx).abs()));
        }
    }
    let (max_n, max) = terms.iter().copied().fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let mut sorted: Vec<f64> = terms.iter().map(|t| t.1).collect();
    sorted.sort_by(f64::total_cmp);
    let median = (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) / 2.0;
    let over = terms.iter().filter(|t| t.1 > 10.0 * median).count();
    check(
        max.is_finite() && over == 0,
        format!(
            "max n|P(X_n=0) - approx| = {max:.6} at n={max_n}, median {median:.6}, ratio {:.1}; {over} terms exceed 10x median",
            max / median
        ),
    )
}

/// `n_k = (4^k + 2) / 6`, the first index of block `k`.
fn block_start(k: u32) -> u64 {
    (4u64.pow(k) + 2) / 6
}

fn c10_recurrence() -> Verdict {
    let start = Instant::now();
    let replicates = 100_000u64;
    let windows: Vec<(u64, u64)> = (1..=3).map(|k| (block_start(2 * k), block_start(2 * k + 1) - 1)).collect();
    let steps = generate(&StepSequenceSpec::sqrt_block(), windows[2].1 as usize).unwrap();
    let s = estimate_interval_hits(&steps, SEED, replicates, 0.0, &windows).map_err(|e| e.to_string())?;
    let p: Vec<f64> = (1..=3).map(|k| s.per_event[&k].p_hat).collect();
    let kp: Vec<f64> = p.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).collect();
    let spread = kp.iter().copied().fold(0.0, f64::max) / kp.iter().copied().fold(f64::INFINITY, f64::min);
    let mut corr: f64 = 0.0;
    for j in 1..=3 {
        for k in j + 1..=3 {
            corr = corr.max(s.correlation_ratio(j, k).unwrap_or(f64::INFINITY));
        }
    }
    let small = estimate_interval_hits(&steps, SEED, replicates, 0.0, &[(1, 4)]).map_err(|e| e.to_string())?;
    let ph = small.per_event[&1].p_hat;
    let sigma = (0.125f64 * 0.875 / replicates as f64).sqrt();
    within(Duration::from_secs(600), start)?;
    check(
        p.iter().all(|&x| x >= 0.01) && spread <= 5.0 && corr <= 10.0 && (ph - 0.125).abs() <= 4.0 * sigma,
        format!(
            "p(E_k) = {:.4} {:.4} {:.4}, k p max/min {spread:.2}, max joint ratio {corr:.2}, small window {ph:.5} ({:.1} sigma)",
            p[0],
            p[1],
            p[2],
            (ph - 0.125).abs() / sigma
        ),
    )
}

fn c11_embedding() -> Verdict {
    let mut traces = 0;
    let mut visits = 0u64;
    for k in 1..=3u32 {
        let m0 = ((block_start(2 * k) - 1) / 2) as usize;
        let m1 = ((block_start(2 * k + 1) - 1) / 2) as usize;
        let steps = generate(&StepSequenceSpec::sqrt_block(), 2 * m1).unwrap();
        for r in 0..10_000u64 {
            let trace = walk_positions(&steps, &mut SignSource::new(stream(SEED, r)));
            let (y0, inc) = block_increments(&trace, k).map_err(|e| e.to_string())?;
            let e = embed_2d(y0, &inc, k).map_err(|e| e.to_string())?;
            let zeros = (m0..=m1).filter(|&m| trace[2 * m] == 0.0).count() as u64;
            if e.visits_to_line != zeros {
                return Err(format!("k={k} trace {r}: {} line visits vs {zeros} zeros", e.visits_to_line));
            }
            visits += zeros;
            traces += 1;
        }
    }
    Ok(format!("{traces} traces, {visits} zeros, all equal to line visits"))
}

fn c12_coupling() -> Verdict {
    let start = Instant::now();
    let model = StepModel::from_spec(&StepSequenceSpec::power(0.5, false), 1).map_err(|e| e.to_string())?;
    let (mut episodes, mut wins, mut max_index) = (0u64, 0u64, 0u128);
    for run in 0..10_000u64 {
        let p = simulate_coupling(&model, 1.0, 0.1, SEED, run).map_err(|e| format!("run {run}: {e}"))?;
        if !(0.0..=0.1).contains(&p.final_gap) {
            return Err(format!("run {run}: final gap {}", p.final_gap));
        }
        episodes += p.episodes_used;
        wins += p.episodes.iter().filter(|e| e.won).count() as u64;
        max_index = max_index.max(p.final_index());
    }
    let rate = wins as f64 / episodes as f64;
    let sigma = (0.25 * 0.75 / episodes as f64).sqrt();
    check(
        rate >= 0.25 - 3.0 * sigma,
        format!(
            "10000/10000 runs in [0, 0.1]; per-episode rate {rate:.4} over {episodes} episodes (threshold {:.4}); max index {:.3e}, {:.1?}",
            0.25 - 3.0 * sigma,
            max_index as f64,
            start.elapsed()
        ),
    )
}

fn c13_ints() -> Verdict {
    let seq = generate(&StepSequenceSpec::log_power(2.0, true), 1_000_000).unwrap();
    let counts = value_counts(&seq).map_err(|e| e.to_string())?;
    let top = *counts.counts.keys().next_back().unwrap();
    let (mut f1, mut f2) = (Vec::new(), Vec::new());
    let mut ratios = Vec::new();
    for n in 20..=top {
        let r = check_ints_conditions(&counts, n).map_err(|e| e.to_string())?;
        if !r.assump1_holds {
            f1.push(n);
        }
        if !r.assump2_holds {
            f2.push(n);
        }
        ratios.push(r.assump2_lhs as f64 / r.assump2_rhs);
    }
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    check(
        f1.is_empty() && f2.is_empty(),
        format!(
            "n in 20..={top}: first condition fails at {} n, second at {} n; second lhs/rhs in [{lo:.3}, {hi:.3}]",
            f1.len(),
            f2.len()
        ),
    )
}

fn cli(args: &[&str], env: &BTreeMap<String, String>) -> (i32, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("rlab").chain(args.iter().copied());
    let code = run_with(argv, env, &mut out, &mut err);
    (code, String::from_utf8_lossy(&err).into_owned())
}

fn c14_determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let seq = dir.path().join("seq.txt");
    std::fs::write(&seq, (1..=30).map(|k| format!("{}\n", 2 * k + 1)).collect::<String>()).unwrap();
    let manifest = dir.path().join("run.json");
    std::fs::write(
        &manifest,
        r#"{"master_seed": 7, "replicates": 20000, "horizon": 170, "spec": {"family": "sqrt_block"},
            "experiment": "interval_hits", "params": {"c": 0, "windows": [[3, 10], [43, 170]]}}"#,
    )
    .unwrap();
    let seq = seq.to_str().unwrap().to_string();
    let manifest = manifest.to_str().unwrap().to_string();
    let runs: Vec<(&str, Vec<String>)> = vec![
        ("dist", vec!["dist".into(), "--seq".into(), seq, "--q".into(), "3".into()]),
        ("mc", vec!["mc".into(), "--manifest".into(), manifest]),
        ("verify", vec!["verify".into(), "--suite".into(), "prefix".into(), "--cases".into(), "100".into()]),
    ];
    let env = BTreeMap::from([("SOURCE_DATE_EPOCH".to_string(), "1700000000".to_string())]);
    for (name, args) in runs {
        // 1 thread to one file, then 4 threads twice to another
        let mut files = Vec::new();
        for (i, threads) in [(0, "1"), (1, "4"), (1, "4")] {
            let out = dir.path().join(format!("{name}-{i}.json"));
            let out_s = out.to_str().unwrap().to_string();
            let mut a: Vec<&str> = args.iter().map(String::as_str).collect();
            a.extend(["--threads", threads, "--out", &out_s]);
            let (code, err) = cli(&a, &env);
            if code != 0 {
                return Err(format!("{name}: exit {code}: {err}"));
            }
            files.push(std::fs::read(&out).unwrap());
        }
        let report = |b: &[u8]| serde_json::from_slice::<serde_json::Value>(b).unwrap()["report"].to_string();
        if report(&files[0]) != report(&files[1]) {
            return Err(format!("{name}: report payload depends on the thread count"));
        }
        if files[1] != files[2] {
            return Err(format!("{name}: rerun wrote a different file"));
        }
    }
    Ok("dist, mc and verify reports bit-identical across reruns and thread counts".into())
}

fn main() {
    let cases = corpus();
    let criteria: Vec<(u32, &str, Box<dyn Fn() -> Verdict>)> = vec![
        (1, "exact-oracle equivalence", Box::new(|| c1_oracle(&cases))),
        (2, "ELO domination", Box::new(|| c2_elo(&cases))),
        (3, "modular ELO", Box::new(c3_modular)),
        (4, "a_n = n rate", Box::new(c4_stanley)),
        (5, "simple walk rate", Box::new(c5_ssrw)),
        (6, "f(alpha, delta) formula", Box::new(c6_exponent)),
        (7, "lower-anti floor", Box::new(c7_lower_anti)),
        (8, "Hoeffding and Paley-Zygmund", Box::new(|| c8_hoeffding_pz(&cases))),
        (9, "local CLT", Box::new(c9_local_clt)),
        (10, "recurrence events", Box::new(c10_recurrence)),
        (11, "embedding fidelity", Box::new(c11_embedding)),
        (12, "coupling game", Box::new(c12_coupling)),
        (13, "ints checker on floor(ln^2 n)", Box::new(c13_ints)),
        (14, "determinism", Box::new(c14_determinism)),
    ];
    let mut failed = Vec::new();
    for (id, name, f) in &criteria {
        match f() {
            Ok(d) => println!("criterion {id:>2} PASS  {name}: {d}"),
            Err(d) => {
                println!("criterion {id:>2} FAIL  {name}: {d}");
                failed.push(*id);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
    } else {
        println!("acceptance: {} of {} criteria failed: {failed:?}", failed.len(), criteria.len());
        std::process::exit(1);
    }
}
