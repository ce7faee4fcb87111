use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde_json::{json, Value};

use rlab_core::bounds::{
    anti_exponent_f, cosine_product_bound, elo_bound, hoeffding_tail, local_clt_approx, lower_anti_floor,
    modular_elo_bound, BoundName, BoundReport, PALEY_ZYGMUND_FLOOR,
};
use rlab_core::exactdist::{
    abs_tail_prob, concentration_q, modular_walk_pmf, modular_walk_pmf_spectral, rational_walk_pmf, reduce_dyadic,
    summary_moments, tail_prob, walk_pmf_with_cap, ExactPmf,
};
use rlab_core::mc::{self, fit_exponent, McOutcome, McRunManifest};
use rlab_core::seqgen::{check_ints_conditions, check_sparse_conditions, integer_steps, value_counts};
use rlab_core::{generate, StepSequenceSpec};

use crate::report::{Cell, Table};
use crate::{CliError, Ctx, Output};

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    serde_json::from_str(&read_file(path)?).map_err(|e| usage(format!("{}: invalid JSON: {e}", path.display())))
}

fn parse_spec(v: &Value, path: &Path) -> Result<StepSequenceSpec, CliError> {
    let spec: StepSequenceSpec =
        serde_json::from_value(v.clone()).map_err(|e| usage(format!("{}: invalid spec: {e}", path.display())))?;
    spec.validate()?;
    Ok(spec)
}

/// Reads a sequence file: a JSON spec object (needs `n`) or one decimal value
/// per line, `#` comments allowed.
pub fn load_sequence(path: &Path, n: Option<usize>, ctx: &mut Ctx) -> Result<Vec<f64>, CliError> {
    let text = read_file(path)?;
    if text.trim_start().starts_with('{') {
        let v: Value = serde_json::from_str(&text).map_err(|e| usage(format!("{}: invalid JSON: {e}", path.display())))?;
        let spec = parse_spec(&v, path)?;
        ctx.inputs.insert("spec".into(), v);
        let n = n.ok_or_else(|| usage("--n is required with a JSON spec"))?;
        return Ok(generate(&spec, n)?);
    }
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| usage(format!("{}:{}: not a number: {line:?}", path.display(), i + 1)))?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(usage(format!("{}:{}: step sizes must be finite and non-negative", path.display(), i + 1)));
        }
        values.push(v);
    }
    match n {
        Some(n) if n > values.len() => Err(usage(format!(
            "{} holds {} values, fewer than --n {n}",
            path.display(),
            values.len()
        ))),
        Some(n) => {
            values.truncate(n);
            Ok(values)
        }
        None => Ok(values),
    }
}

fn ratio_string(num: u128, den: u128) -> String {
    format!("{num}/{den}")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SeqCheck {
    Ints,
    Sparse,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// JSON step-sequence spec.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub n: usize,
    /// Check arithmetic conditions on the generated prefix instead of printing it.
    #[arg(long, value_enum)]
    pub check: Option<SeqCheck>,
    /// Smallest n checked by `--check ints`.
    #[arg(long, default_value_t = 20)]
    pub min_n: u64,
    /// Density constant for `--check sparse`.
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    /// Admissible value set for `--check sparse` (default: values present).
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<u64>,
}

pub fn gen(a: &GenArgs, ctx: &mut Ctx) -> Result<Output, CliError> {
    let v = read_json(&a.spec)?;
    let spec = parse_spec(&v, &a.spec)?;
    ctx.inputs.insert("spec".into(), v);
    let seq = generate(&spec, a.n)?;
    match a.check {
        None => {
            let mut table = Table::new(&["n", "a_n"]);
            let mut text = String::with_capacity(seq.len() * 8);
            for (i, &x) in seq.iter().enumerate() {
                table.push(vec![(i as u64 + 1).into(), x.into()]);
                text.push_str(&format!("{x}\n"));
            }
            Ok(Output { report: json!({ "n": a.n, "values": seq }), table, text: Some(text), failure: None })
        }
        Some(SeqCheck::Ints) => {
            let counts = value_counts(&seq)?;
            let top = counts.counts.keys().next_back().copied().unwrap_or(0);
            let mut reports = Vec::new();
            let mut table = Table::new(&[
                "n",
                "assump1_lhs",
                "assump1_rhs",
                "assump1_holds",
                "assump2_lhs",
                "assump2_rhs",
                "assump2_holds",
            ]);
            for n in a.min_n.max(2)..=top {
                let r = check_ints_conditions(&counts, n)?;
                table.push(vec![
                    n.into(),
                    r.assump1_lhs.into(),
                    r.assump1_rhs.into(),
                    r.assump1_holds.into(),
                    r.assump2_lhs.into(),
                    r.assump2_rhs.into(),
                    r.assump2_holds.into(),
                ]);
                reports.push(r);
            }
            let f1: Vec<u64> = reports.iter().filter(|r| !r.assump1_holds).map(|r| r.n).collect();
            let f2: Vec<u64> = reports.iter().filter(|r| !r.assump2_holds).map(|r| r.n).collect();
            let failure = (!f1.is_empty() || !f2.is_empty()).then(|| {
                format!("first condition fails at {} values of n, second at {}", f1.len(), f2.len())
            });
            Ok(Output {
                report: json!({
                    "prefix_length": a.n,
                    "min_n": a.min_n,
                    "max_value": top,
                    "assump1_failures": f1,
                    "assump2_failures": f2,
                    "checks": reports,
                }),
                table,
                text: None,
                failure,
            })
        }
        Some(SeqCheck::Sparse) => {
            let counts = value_counts(&seq)?;
            let set: BTreeSet<u64> = a.values.iter().copied().collect();
            let r = check_sparse_conditions(&counts, &set, a.eps)?;
            let mut table = Table::new(&["value", "witness", "reciprocal_sum"]);
            for w in &r.per_value {
                table.push(vec![w.value.into(), w.witness.into(), w.reciprocal_sum.into()]);
            }
            let failure = (!r.values_in_set || !r.all_witnessed)
                .then(|| "sparse-value conditions fail on this prefix".to_string());
            Ok(Output { report: serde_json::to_value(&r)?, table, text: None, failure })
        }
    }
}

#[derive(Debug, Args)]
pub struct DistArgs {
    /// Sequence file (values or JSON spec).
    #[arg(long)]
    pub seq: PathBuf,
    /// Number of steps (default: whole file).
    #[arg(long)]
    pub n: Option<usize>,
    /// Window width r of the concentration query Q_r.
    #[arg(long)]
    pub q: Option<f64>,
    /// Reduce modulo m.
    #[arg(long = "mod")]
    pub modulus: Option<u64>,
    /// Use the cosine-multiplier route for `--mod`.
    #[arg(long)]
    pub spectral: bool,
}

pub fn dist(a: &DistArgs, ctx: &mut Ctx) -> Result<Output, CliError> {
    let seq = load_sequence(&a.seq, a.n, ctx)?;
    let steps = integer_steps(&seq)?;
    if let Some(m) = a.modulus {
        return dist_mod(&steps, m, a.spectral, ctx.exact);
    }
    if ctx.exact {
        let pmf = rational_walk_pmf(&steps)?;
        let probs: Vec<String> = (0..pmf.support.len())
            .map(|i| {
                let (p, q) = pmf.reduced(i);
                ratio_string(p, q)
            })
            .collect();
        let mut table = Table::new(&["x", "p"]);
        for (x, p) in pmf.support.iter().zip(&probs) {
            table.push(vec![(*x).into(), p.as_str().into()]);
        }
        let mut report = json!({ "steps_applied": pmf.steps_applied, "support": pmf.support, "probs": probs });
        if let Some(r) = a.q {
            let count = pmf.concentration_count(r)?;
            let (p, q) = reduce_dyadic(count, pmf.denom_log2);
            let float = concentration_q(&pmf.to_f64(), r)?;
            report["q"] = json!({ "r": r, "value": ratio_string(p, q), "argmax_x": float.argmax_x });
        }
        return Ok(Output { report, table, text: None, failure: None });
    }
    let pmf = walk_pmf_with_cap(&steps, ctx.support_cap)?;
    let mut table = Table::new(&["x", "p"]);
    for (x, p) in pmf.support.iter().zip(&pmf.probs) {
        table.push(vec![(*x).into(), (*p).into()]);
    }
    let mut report = json!({ "steps_applied": pmf.steps_applied, "support": pmf.support, "probs": pmf.probs });
    if let Some(r) = a.q {
        let q = concentration_q(&pmf, r)?;
        report["q"] = json!({ "r": q.r, "value": q.result, "argmax_x": q.argmax_x });
    }
    Ok(Output { report, table, text: None, failure: None })
}

fn dist_mod(steps: &[u64], m: u64, spectral: bool, exact: bool) -> Result<Output, CliError> {
    let mut table = Table::new(&["r", "p"]);
    if exact {
        let pmf = rational_walk_pmf(steps)?;
        let mut counts = vec![0u128; m as usize];
        for (x, c) in pmf.support.iter().zip(&pmf.counts) {
            counts[x.rem_euclid(m as i64) as usize] += c;
        }
        let probs: Vec<String> = counts
            .iter()
            .map(|&c| {
                let (p, q) = reduce_dyadic(c, pmf.denom_log2);
                ratio_string(p, q)
            })
            .collect();
        for (r, p) in probs.iter().enumerate() {
            table.push(vec![r.into(), p.as_str().into()]);
        }
        return Ok(Output {
            report: json!({ "steps_applied": pmf.steps_applied, "modulus": m, "probs": probs }),
            table,
            text: None,
            failure: None,
        });
    }
    let pmf = if spectral { modular_walk_pmf_spectral(steps, m)? } else { modular_walk_pmf(steps, m)? };
    for (r, p) in pmf.probs.iter().enumerate() {
        table.push(vec![r.into(), (*p).into()]);
    }
    let nonzero: Vec<u64> = steps.iter().copied().filter(|&b| b > 0).collect();
    let cosine = cosine_product_bound(m, &nonzero).ok();
    Ok(Output {
        report: json!({
            "steps_applied": steps.len(),
            "modulus": m,
            "probs": pmf.probs,
            "max_prob": pmf.max_prob(),
            "cosine_product_bound": cosine,
        }),
        table,
        text: None,
        failure: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BoundCheck {
    Elo,
    ModularElo,
    CosineProduct,
    LowerAnti,
    Hoeffding,
    PaleyZygmund,
    LocalClt,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Compare a bound against the exact quantity it controls.
    #[arg(long, value_enum, conflicts_with = "exponent")]
    pub check: Option<BoundCheck>,
    /// Evaluate the anti-concentration exponent 1/2 + alpha f(alpha, delta) - gamma.
    #[arg(long)]
    pub exponent: bool,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub seq: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<u64>,
    /// Hoeffding thresholds in units of the l2 norm.
    #[arg(long, value_delimiter = ',')]
    pub t: Vec<f64>,
    /// Point of the local CLT comparison.
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<i64>,
}

fn bound_table(reports: &[BoundReport]) -> Table {
    let mut t = Table::new(&["bound_name", "side", "bound_value", "compared_value", "satisfied", "slack"]);
    for r in reports {
        let name = serde_json::to_value(r.bound_name).unwrap();
        let side = serde_json::to_value(r.side).unwrap();
        t.push(vec![
            name.as_str().unwrap().into(),
            side.as_str().unwrap().into(),
            r.bound_value.into(),
            r.compared_value.into(),
            r.satisfied.into(),
            r.slack.into(),
        ]);
    }
    t
}

pub fn bounds(a: &BoundsArgs, ctx: &mut Ctx) -> Result<Output, CliError> {
    if a.exponent {
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| usage(format!("--exponent needs --{name}")));
        let q = anti_exponent_f(need(a.alpha, "alpha")?, need(a.delta, "delta")?, need(a.gamma, "gamma")?)?;
        let mut table = Table::new(&["alpha", "delta", "gamma", "f_value", "exponent", "branch"]);
        let branch = serde_json::to_value(q.branch)?;
        table.push(vec![
            q.alpha.into(),
            q.delta.into(),
            q.gamma.into(),
            q.f_value.into(),
            q.exponent.into(),
            branch.as_str().unwrap().into(),
        ]);
        return Ok(Output { report: serde_json::to_value(q)?, table, text: None, failure: None });
    }
    let check = a.check.ok_or_else(|| usage("bounds needs --check <NAME> or --exponent"))?;
    let reports = match check {
        BoundCheck::LocalClt => {
            let n = a.n.ok_or_else(|| usage("--check local-clt needs --n"))?;
            let x = a.x.unwrap_or(0);
            let approx = local_clt_approx(n as u64, x)?;
            let pmf = walk_pmf_with_cap(&vec![1; n], ctx.support_cap)?;
            let exact = pmf.prob(x);
            let mut r = BoundReport::upper(BoundName::LocalClt, approx.approx)
                .param("n", n as f64)
                .param("x", x as f64)
                .param("scaled_error", n as f64 * (exact - approx.approx).abs());
            r.compared_value = Some(exact);
            vec![r]
        }
        BoundCheck::ModularElo | BoundCheck::CosineProduct => {
            let m = a.m.ok_or_else(|| usage("modular checks need --m"))?;
            let seq = load_sequence(&required_seq(a)?, a.n, ctx)?;
            let steps: Vec<u64> = integer_steps(&seq)?.into_iter().filter(|&b| b > 0).collect();
            let n = steps.len() as u64;
            let max_r = modular_walk_pmf(&steps, m)?.max_prob();
            let cos = cosine_product_bound(m, &steps)?;
            let cos_report = BoundReport::upper(BoundName::CosineProduct, cos)
                .param("m", m as f64)
                .param("n", n as f64)
                .compare(max_r);
            let elo = BoundReport::upper(BoundName::ModularElo, modular_elo_bound(m, n)?)
                .param("m", m as f64)
                .param("n", n as f64)
                .param("cosine_product", cos)
                .compare(max_r);
            if check == BoundCheck::CosineProduct {
                vec![cos_report]
            } else {
                vec![elo, cos_report]
            }
        }
        _ => {
            let seq = load_sequence(&required_seq(a)?, a.n, ctx)?;
            let steps = integer_steps(&seq)?;
            let n = steps.len();
            if n == 0 {
                return Err(usage("empty step sequence"));
            }
            let pmf = walk_pmf_with_cap(&steps, ctx.support_cap)?;
            let moments = summary_moments(&seq);
            match check {
                BoundCheck::Elo => {
                    let c = *steps.iter().min().unwrap();
                    if c == 0 {
                        return Err(usage("ELO needs every step >= c > 0"));
                    }
                    let q = concentration_q(&pmf, 2.0 * c as f64)?;
                    vec![BoundReport::upper(BoundName::Elo, elo_bound(n as u64)?)
                        .param("n", n as f64)
                        .param("c", c as f64)
                        .compare(q.result)]
                }
                BoundCheck::LowerAnti => {
                    let q = concentration_q(&pmf, 1.0)?;
                    vec![BoundReport::lower(BoundName::LowerAntiFloor, lower_anti_floor(moments.variance)?)
                        .param("variance", moments.variance)
                        .compare(q.result)]
                }
                BoundCheck::Hoeffding => {
                    let ts = if a.t.is_empty() { vec![0.0, 0.5, 1.0, 2.0, 3.0] } else { a.t.clone() };
                    let mut out = Vec::new();
                    for t in ts {
                        let h = hoeffding_tail(moments.l2_norm, t)?;
                        out.push(
                            BoundReport::upper(BoundName::Hoeffding, h.bound)
                                .param("t", t)
                                .param("threshold", h.threshold)
                                .compare(tail_prob(&pmf, h.threshold)),
                        );
                    }
                    out
                }
                BoundCheck::PaleyZygmund => {
                    vec![BoundReport::lower(BoundName::PaleyZygmund, PALEY_ZYGMUND_FLOOR)
                        .param("threshold", moments.l2_norm / 2.0)
                        .compare(abs_tail_prob(&pmf, moments.l2_norm / 2.0))]
                }
                _ => unreachable!(),
            }
        }
    };
    let failed = reports.iter().filter(|r| r.satisfied == Some(false)).count();
    let table = bound_table(&reports);
    Ok(Output {
        report: json!({ "reports": reports }),
        table,
        text: None,
        failure: (failed > 0).then(|| format!("{failed} bound(s) violated")),
    })
}

fn required_seq(a: &BoundsArgs) -> Result<PathBuf, CliError> {
    a.seq.clone().ok_or_else(|| usage("this check needs --seq"))
}

#[derive(Debug, Args)]
pub struct McArgs {
    /// Monte Carlo manifest (JSON).
    #[arg(long)]
    pub manifest: PathBuf,
}

pub fn mc(a: &McArgs, ctx: &mut Ctx) -> Result<Output, CliError> {
    let v = read_json(&a.manifest)?;
    let mut manifest: McRunManifest = serde_json::from_value(v.clone())
        .map_err(|e| usage(format!("{}: invalid manifest: {e}", a.manifest.display())))?;
    ctx.inputs.insert("manifest".into(), v);
    if let Some(seed) = ctx.seed {
        manifest.master_seed = seed;
    }
    let outcome = mc::run(&manifest)?;
    let table = mc_table(&outcome);
    Ok(Output { report: serde_json::to_value(&outcome)?, table, text: None, failure: None })
}

fn mc_table(outcome: &McOutcome) -> Table {
    match outcome {
        McOutcome::IntervalHits(s) => {
            let mut t = Table::new(&["k", "start", "end", "hits", "replicates", "p_hat", "wilson_lo", "wilson_hi"]);
            for (k, e) in &s.per_event {
                t.push(vec![
                    (*k).into(),
                    e.window.0.into(),
                    e.window.1.into(),
                    e.hits.into(),
                    e.replicates.into(),
                    e.p_hat.into(),
                    e.wilson_lo.into(),
                    e.wilson_hi.into(),
                ]);
            }
            t
        }
        McOutcome::Q1Estimate(q) => {
            let mut t = Table::new(&["n", "q1_hat", "stderr", "replicates"]);
            t.push(vec![q.n.into(), q.q1_hat.into(), q.stderr.into(), q.replicates.into()]);
            t
        }
        McOutcome::Embed2d(e) => {
            let mut t = Table::new(&["k", "traces", "mismatches", "total_visits", "traces_with_visit"]);
            t.push(vec![
                (e.k as u64).into(),
                e.traces.into(),
                e.mismatches.into(),
                e.total_visits.into(),
                e.traces_with_visit.into(),
            ]);
            t
        }
        McOutcome::Coupling(c) => {
            let mut t = Table::new(&["run", "episodes_used", "final_gap", "final_index"]);
            for (i, r) in c.per_run.iter().enumerate() {
                t.push(vec![i.into(), r.episodes_used.into(), r.final_gap.into(), r.final_index.into()]);
            }
            t
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// CSV of `n,value` points.
    #[arg(long, conflicts_with = "seq")]
    pub points: Option<PathBuf>,
    /// Sequence whose exact Q_r is computed along the way.
    #[arg(long)]
    pub seq: Option<PathBuf>,
    #[arg(long)]
    pub from: Option<usize>,
    #[arg(long)]
    pub to: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub every: usize,
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
}

pub fn fit(a: &FitArgs, ctx: &mut Ctx) -> Result<Output, CliError> {
    let points: Vec<(f64, f64)> = match (&a.points, &a.seq) {
        (Some(p), _) => read_points(p)?,
        (None, Some(s)) => {
            let from = a.from.ok_or_else(|| usage("--seq needs --from"))?;
            let to = a.to.ok_or_else(|| usage("--seq needs --to"))?;
            if from == 0 || from > to || a.every == 0 {
                return Err(usage("need 1 <= --from <= --to and --every >= 1"));
            }
            let steps = integer_steps(&load_sequence(s, Some(to), ctx)?)?;
            exact_q_series(&steps, from, to, a.every, a.r, ctx.support_cap)?
        }
        (None, None) => return Err(usage("fit needs --points or --seq")),
    };
    let f = fit_exponent(&points)?;
    let mut table = Table::new(&["n", "q1", "log_n", "log_q1"]);
    for &(n, q) in &points {
        table.push(vec![n.into(), q.into(), n.ln().into(), q.ln().into()]);
    }
    table.push(vec!["slope".into(), f.slope.into(), Cell::Empty, Cell::Empty]);
    table.push(vec!["intercept".into(), f.intercept.into(), Cell::Empty, Cell::Empty]);
    table.push(vec!["r2".into(), f.r_squared.into(), Cell::Empty, Cell::Empty]);
    let pts: Vec<Value> = points.iter().map(|&(n, q)| json!({ "n": n, "q1": q })).collect();
    Ok(Output { report: json!({ "r": a.r, "points": pts, "fit": f }), table, text: None, failure: None })
}

/// `(n, Q_r(X_n))` for `n = from, from + every, ..` up to `to`.
pub fn exact_q_series(
    steps: &[u64],
    from: usize,
    to: usize,
    every: usize,
    r: f64,
    cap: usize,
) -> Result<Vec<(f64, f64)>, CliError> {
    let mut pmf = ExactPmf::origin();
    let mut out = Vec::new();
    for (i, &a) in steps.iter().enumerate().take(to) {
        pmf.apply_step(a, cap)?;
        let n = i + 1;
        if n >= from && (n - from) % every == 0 {
            out.push((n as f64, concentration_q(&pmf, r)?.result));
        }
    }
    Ok(out)
}

fn read_points(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let mut out = Vec::new();
    for (i, line) in read_file(path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(',').map(str::trim);
        let (Some(a), Some(b)) = (parts.next(), parts.next()) else {
            return Err(usage(format!("{}:{}: expected n,value", path.display(), i + 1)));
        };
        match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(n), Ok(v)) => out.push((n, v)),
            _ if out.is_empty() && i == 0 => continue,
            _ => return Err(usage(format!("{}:{}: expected n,value", path.display(), i + 1))),
        }
    }
    Ok(out)
}
