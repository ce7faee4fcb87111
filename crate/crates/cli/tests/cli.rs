use std::collections::BTreeMap;
use std::path::Path;

use serde_json::Value;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn rlab_env(args: &[&str], env: &[(&str, &str)]) -> Run {
    let env: BTreeMap<String, String> = env.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("rlab").chain(args.iter().copied());
    let code = rlab::run_with(argv, &env, &mut out, &mut err);
    Run { code, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
}

fn rlab(args: &[&str]) -> Run {
    rlab_env(args, &[])
}

fn json(run: &Run) -> Value {
    assert_eq!(run.code, 0, "stderr: {}", run.stderr);
    serde_json::from_str(&run.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn elo_suite_passes_with_expected_case_count() {
    let v = json(&rlab(&["verify", "--suite", "elo", "--max-n", "18"]));
    assert_eq!(v["report"]["cases_run"], 180);
    assert_eq!(v["report"]["failures"].as_array().unwrap().len(), 0);
    assert_eq!(v["manifest"]["command"], "verify");
}

#[test]
fn passing_suites() {
    for suite in ["modular_elo", "hoeffding", "paley_zygmund", "combine_scales", "prefix", "exponent_fit"] {
        let mut args = vec!["verify", "--suite", suite];
        if suite == "modular_elo" {
            args.extend(["--max-m", "16", "--cases", "3"]);
        }
        let r = rlab(&args);
        assert_eq!(r.code, 0, "{suite}: {}", r.stderr);
    }
}

#[test]
fn local_clt_suite_reports_constants() {
    let r = rlab(&["verify", "--suite", "local_clt", "--max-n", "200"]);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    let c = &v["report"]["empirical_constants"];
    assert_eq!(c["argmax_n"], 2.0);
    assert!((c["max_scaled_error"].as_f64().unwrap() - 2.0 * (1.0 / std::f64::consts::PI.sqrt() - 0.5)).abs() < 1e-12);
    let ratio = c["max_over_median"].as_f64().unwrap();
    assert!(ratio < 10.0, "{ratio}");
    assert_eq!(r.code, 0);
}

#[test]
fn missing_input_is_config_error() {
    let r = rlab(&["dist", "--seq", "definitely-missing.txt"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("definitely-missing.txt"));
}

#[test]
fn unknown_flag_and_format() {
    let r = rlab(&["dist", "--bogus"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("Usage"));
    assert_eq!(rlab(&["--format", "xml", "bounds", "--exponent"]).code, 2);
}

#[test]
fn exponent_at_zero_delta() {
    let v = json(&rlab(&["bounds", "--exponent", "--alpha", "1", "--delta", "0", "--gamma", "0.01"]));
    assert_eq!(v["report"]["f_value"], 1.0);
    assert!((v["report"]["exponent"].as_f64().unwrap() - 1.49).abs() < 1e-15);
    assert_eq!(v["report"]["branch"], "small_delta");
}

#[test]
fn dist_values_and_exact_mode() {
    let dir = tempfile::tempdir().unwrap();
    let seq = write(dir.path(), "s.txt", "1\n# comment\n2\n3\n");
    let v = json(&rlab(&["dist", "--seq", &seq, "--q", "1"]));
    assert_eq!(v["report"]["support"], serde_json::json!([-6, -4, -2, 0, 2, 4, 6]));
    assert_eq!(v["report"]["probs"][3], 0.25);
    assert_eq!(v["report"]["q"]["value"], 0.25);
    let v = json(&rlab(&["--exact", "dist", "--seq", &seq, "--q", "4"]));
    assert_eq!(v["report"]["probs"], serde_json::json!(["1/8", "1/8", "1/8", "1/4", "1/8", "1/8", "1/8"]));
    assert_eq!(v["report"]["q"]["value"], "3/8");
}

#[test]
fn modular_csv_has_one_row_per_residue() {
    let dir = tempfile::tempdir().unwrap();
    let seq = write(dir.path(), "s.txt", "1\n1\n");
    let r = rlab(&["--format", "csv", "dist", "--seq", &seq, "--mod", "4"]);
    assert_eq!(r.code, 0);
    assert_eq!(r.stdout, "r,p\n0,0.5\n1,0\n2,0.5\n3,0\n");
    let r = rlab(&["--format", "csv", "--exact", "dist", "--seq", &seq, "--mod", "4"]);
    assert_eq!(r.stdout, "r,p\n0,1/2\n1,0/1\n2,1/2\n3,0/1\n");
}

#[test]
fn fit_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let pts = write(dir.path(), "p.csv", "n,value\n1,1\n2,0.25\n4,0.0625\n");
    let r = rlab(&["--format", "csv", "fit", "--points", &pts]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let lines: Vec<&str> = r.stdout.lines().collect();
    assert_eq!(lines[0], "n,q1,log_n,log_q1");
    assert_eq!(lines.len(), 1 + 3 + 3);
    assert!(lines[4].starts_with("slope,-2,"));
    assert!(lines[5].starts_with("intercept,"));
    assert!(lines[6].starts_with("r2,1,"));
}

#[test]
fn fit_from_exact_series() {
    let dir = tempfile::tempdir().unwrap();
    let seq = write(dir.path(), "ones.txt", &"1\n".repeat(1000));
    let v = json(&rlab(&["fit", "--seq", &seq, "--from", "100", "--to", "1000", "--every", "100"]));
    let slope = v["report"]["fit"]["slope"].as_f64().unwrap();
    assert!((-0.6..=-0.4).contains(&slope), "{slope}");
}

#[test]
fn empty_report_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(
        dir.path(),
        "m.json",
        r#"{"master_seed": 1, "replicates": 5, "horizon": 10, "spec": {"family": "sqrt_block"},
            "experiment": "interval_hits", "params": {"c": 0, "windows": []}}"#,
    );
    let r = rlab(&["--format", "csv", "mc", "--manifest", &m]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.stdout, "k,start,end,hits,replicates,p_hat,wilson_lo,wilson_hi\n");
}

#[test]
fn support_cap_from_environment_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let seq = write(dir.path(), "s.txt", "1\n2\n4\n8\n16\n");
    let r = rlab_env(&["dist", "--seq", &seq], &[("RLAB_SUPPORT_CAP", "8")]);
    assert_eq!(r.code, 3, "{}", r.stderr);
    assert!(r.stderr.contains("step 4"), "{}", r.stderr);
    assert_eq!(rlab_env(&["dist", "--seq", &seq], &[("RLAB_SUPPORT_CAP", "x")]).code, 2);
}

#[test]
fn coupling_without_vanishing_gaps_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(
        dir.path(),
        "m.json",
        r#"{"master_seed": 1, "replicates": 3, "horizon": 100, "spec": {"family": "power", "alpha": 1.0},
            "experiment": "coupling", "params": {"d": 1.0, "epsilon": 0.1}}"#,
    );
    let r = rlab(&["mc", "--manifest", &m]);
    assert_eq!(r.code, 3);
    assert!(r.stderr.contains("delta = 0.1"), "{}", r.stderr);
}

#[test]
fn coupling_manifest_runs() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(
        dir.path(),
        "m.json",
        r#"{"master_seed": 1, "replicates": 50, "horizon": 1, "spec": {"family": "power", "alpha": 0.5},
            "experiment": "coupling", "params": {"d": -1.0, "epsilon": 0.1}}"#,
    );
    let v = json(&rlab(&["mc", "--manifest", &m]));
    assert_eq!(v["report"]["kind"], "coupling");
    assert_eq!(v["report"]["successes"], 50);
    assert_eq!(v["manifest"]["inputs"]["manifest"]["params"]["d"], -1.0);
    assert!(v["generator_version"].as_str().unwrap().contains("ChaCha8"));
}

#[test]
fn bounds_checks() {
    let dir = tempfile::tempdir().unwrap();
    let seq = write(dir.path(), "s.txt", "3\n5\n7\n3\n5\n9\n11\n");
    let v = json(&rlab(&["bounds", "--check", "elo", "--seq", &seq]));
    assert_eq!(v["report"]["reports"][0]["satisfied"], true);
    let v = json(&rlab(&["bounds", "--check", "modular-elo", "--m", "4", "--seq", &seq]));
    let reps = v["report"]["reports"].as_array().unwrap();
    assert_eq!(reps.len(), 2);
    assert!(reps.iter().all(|r| r["satisfied"] == true));
    let v = json(&rlab(&["bounds", "--check", "hoeffding", "--seq", &seq]));
    assert_eq!(v["report"]["reports"].as_array().unwrap().len(), 5);
    let v = json(&rlab(&["bounds", "--check", "local-clt", "--n", "100"]));
    let r = &v["report"]["reports"][0];
    assert!((r["compared_value"].as_f64().unwrap() - 0.0795892373871787).abs() < 1e-12);
    assert_eq!(rlab(&["bounds", "--check", "local-clt", "--n", "3", "--x", "0"]).code, 2);
    let r = rlab(&["bounds", "--check", "modular-elo", "--m", "3", "--seq", &seq]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("step 1 = 3"), "{}", r.stderr);
}

#[test]
fn gen_outputs_and_checks() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "spec.json", r#"{"family": "sqrt_block"}"#);
    let r = rlab(&["gen", "--spec", &spec, "--n", "4"]);
    assert_eq!(r.stdout, "3\n1\n5\n3\n");
    let v = json(&rlab(&["--format", "json", "gen", "--spec", &spec, "--n", "4"]));
    assert_eq!(v["report"]["values"], serde_json::json!([3.0, 1.0, 5.0, 3.0]));
    let ln2 = write(dir.path(), "ln2.json", r#"{"family": "log_power", "alpha": 2.0, "floor_values": true}"#);
    let r = rlab(&["gen", "--spec", &ln2, "--n", "10000", "--check", "ints"]);
    assert_eq!(r.code, 1);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(v["report"]["max_value"], 84);
    let bad = write(dir.path(), "bad.json", r#"{"family": "power"}"#);
    assert_eq!(rlab(&["gen", "--spec", &bad, "--n", "3"]).code, 2);
}

#[test]
fn out_file_is_atomic_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let seq = write(dir.path(), "s.txt", "1\n2\n3\n");
    let out = dir.path().join("r.json");
    let out_s = out.to_str().unwrap();
    assert_eq!(rlab(&["dist", "--seq", &seq, "--out", out_s]).code, 0);
    let first = std::fs::read_to_string(&out).unwrap();
    // a failing run leaves the previous report untouched
    assert_eq!(rlab(&["dist", "--seq", "missing.txt", "--out", out_s]).code, 2);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), first);
    let bad_dir = dir.path().join("no/such/dir/r.json");
    assert_eq!(rlab(&["dist", "--seq", &seq, "--out", bad_dir.to_str().unwrap()]).code, 2);
    assert!(!bad_dir.exists());
    let leftovers = std::fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(leftovers, 2);

    let v: Value = serde_json::from_str(&first).unwrap();
    let argv: Vec<String> =
        v["manifest"]["inputs"]["argv"].as_array().unwrap().iter().map(|a| a.as_str().unwrap().to_string()).collect();
    let replay: Vec<&str> = argv.iter().map(String::as_str).collect();
    assert_eq!(rlab(&replay).code, 0);
    let again: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(again["report"], v["report"]);
    assert_eq!(v["manifest"]["tool_version"], again["manifest"]["tool_version"]);
}
