use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ellipslice"))
}

fn run(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, config).unwrap();
    bin()
        .arg("--config")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.join("out"))
        .arg("--no-timing")
        .args(extra)
        .output()
        .unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn zero_steps_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "[chain]\nn_steps = 0\n", &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("chain.n_steps"));
}

#[test]
fn unknown_keys_report_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "seed = 1\n[model]\ndimension = 3\n", &[]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("line 3") && e.contains("dimension"), "{e}");
}

#[test]
fn constant_likelihood_accepts_the_first_angle() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        r#"
        [model]
        dim = 2
        likelihood = { kind = "constant" }
        [chain]
        n_steps = 1000
        "#,
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = json(&dir.path().join("out/summary.json"));
    assert_eq!(s["mean_shrink_iterations"], 1.0);
    assert_eq!(s["mean_likelihood_evals"], 1.0);
    assert_eq!(s["cap_policy"]["cap_hits"], 0);
}

#[test]
fn conjugate_chain_matches_the_exact_posterior() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        r#"
        seed = 11
        [model]
        dim = 1
        likelihood = { kind = "gaussian", mean = [1.0], sigma = [1.0] }
        [chain]
        n_steps = 100000
        burn_in = 1000
        "#,
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = json(&dir.path().join("out/summary.json"));
    let mean = s["mean"][0].as_f64().unwrap();
    let var = s["variance"][0].as_f64().unwrap();
    assert!((0.48..=0.52).contains(&mean), "mean {mean}");
    assert!((0.47..=0.53).contains(&var), "variance {var}");
}

#[test]
fn outputs_are_byte_identical_and_stamped() {
    let config = r#"
        seed = 5
        [model]
        dim = 3
        prior = { kind = "power_law", exponent = 2.0 }
        likelihood = { kind = "gaussian", mean = [0.5, -0.5], sigma = [0.3] }
        [chain]
        n_steps = 500
        burn_in = 10
        n_chains = 3
    "#;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run(a.path(), config, &[]).status.code(), Some(0));
    assert_eq!(run(b.path(), config, &["--threads", "2"]).status.code(), Some(0));
    for f in ["chain_0.csv", "chain_1.csv", "chain_2.csv", "summary.json"] {
        let x = fs::read(a.path().join("out").join(f)).unwrap();
        let y = fs::read(b.path().join("out").join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
    let csv = fs::read_to_string(a.path().join("out/chain_0.csv")).unwrap();
    let mut lines = csv.lines();
    let stamp = lines.next().unwrap();
    assert!(stamp.starts_with("# config_sha256=") && stamp.contains("seed=5"), "{stamp}");
    assert_eq!(lines.next().unwrap(), "step,coord_0,coord_1,coord_2,shrink_iters,llh_evals,cap_hit");
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "11");
    // 17 significant digits round-trip exactly.
    let v: f64 = first[1].parse().unwrap();
    assert_eq!(format!("{v:.16e}"), first[1]);
    assert_eq!(csv.lines().count(), 2 + 500);
    let s = json(&a.path().join("out/summary.json"));
    assert_eq!(s["seed"], 5);
    assert_eq!(s["config_sha256"].as_str().unwrap().len(), 64);
    assert!(stamp.contains(s["config_sha256"].as_str().unwrap()));
}

#[test]
fn different_seeds_give_different_chains() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let config = "[chain]\nn_steps = 50\n";
    assert_eq!(run(a.path(), config, &["--seed", "1"]).status.code(), Some(0));
    assert_eq!(run(b.path(), config, &["--seed", "2"]).status.code(), Some(0));
    let x = fs::read(a.path().join("out/chain_0.csv")).unwrap();
    let y = fs::read(b.path().join("out/chain_0.csv")).unwrap();
    assert_ne!(x, y);
}

#[test]
fn murray_variant_runs_from_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "[chain]\nn_steps = 100\n", &["--variant", "murray"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(json(&dir.path().join("out/summary.json"))["variant"], "murray");
    let o = run(dir.path(), "[chain]\nn_steps = 100\n", &["--variant", "other"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_writes_reports_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        r#"
        mode = "verify"
        seed = 3
        [verify]
        tests = ["interval_calculus", "q_detailed_balance", "alg_equivalence_gaussian"]
        n = 20000
        "#,
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = json(&dir.path().join("out/reports/q_detailed_balance.json"));
    assert_eq!(r["test_name"], "q_detailed_balance");
    assert_eq!(r["decision"], "pass");
    assert_eq!(r["seed"], 3);
    assert_eq!(r["runtime_ms"], 0);
    assert!(r["config_sha256"].is_string());
    let s = json(&dir.path().join("out/verify_summary.json"));
    assert_eq!(s["overall"], "pass");
    assert_eq!(s["total"], 3);
}

#[test]
fn fault_injection_makes_the_run_fail() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        "mode = \"verify\"\n[verify]\ntests = [\"interval_calculus\"]\n",
        &["--fault-injection"],
    );
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let s = json(&dir.path().join("out/verify_summary.json"));
    assert_eq!(s["overall"], "fail");
    assert_eq!(s["failed"], 3);
    for name in ["q_detailed_balance_fault", "rotation_invariance_non_gaussian", "alg_equivalence_fault"] {
        let r = json(&dir.path().join(format!("out/reports/{name}.json")));
        assert_eq!(r["decision"], "fail", "{name}");
        assert_eq!(r["fault_injected"], true);
    }
}

#[test]
fn verify_rejects_bad_test_lists() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "mode = \"verify\"\n[verify]\ntests = []\n", &[]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(dir.path(), "mode = \"verify\"\n", &["--tests", "no_such_test"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no_such_test"));
}

#[test]
fn bench_counts_are_deterministic() {
    let config = "mode = \"bench\"\n[bench]\nn_steps = 2000\n";
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run(a.path(), config, &[]).status.code(), Some(0));
    assert_eq!(run(b.path(), config, &[]).status.code(), Some(0));
    let x = fs::read_to_string(a.path().join("out/bench.csv")).unwrap();
    assert_eq!(x, fs::read_to_string(b.path().join("out/bench.csv")).unwrap());
    let rows: Vec<Vec<String>> = x
        .lines()
        .skip(2)
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    assert_eq!(rows.len(), 8);
    let mut conjugate = Vec::new();
    for r in &rows {
        let evals: f64 = r[3].parse().unwrap();
        match r[0].as_str() {
            "constant" => assert_eq!(evals, 1.0, "dim {}", r[1]),
            "conjugate" => conjugate.push(evals),
            other => panic!("unexpected family {other}"),
        }
    }
    assert_eq!(conjugate.len(), 4);
    let spread = conjugate.iter().cloned().fold(0.0, f64::max) / conjugate.iter().cloned().fold(f64::MAX, f64::min);
    eprintln!("conjugate evals/step across dimensions: {conjugate:?} (max/min {spread:.3})");
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = bin()
        .args(["--out-dir"])
        .arg(blocker.join("sub"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn lists_known_tests() {
    let o = bin().arg("--list-tests").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.lines().any(|l| l == "h_reversibility_d16"));
    assert!(out.lines().any(|l| l == "alg_equivalence_fault"));
}
