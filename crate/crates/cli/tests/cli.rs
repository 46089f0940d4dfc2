use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn effbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_effbench")).args(args).current_dir(root()).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A calibrated single-problem manifest whose reference times are tiny.
fn calibrated_manifest(dir: &Path) -> PathBuf {
    let path = dir.join("cal.json");
    let text = r#"{"problems":[{"id":"inc","prompt":"","entry_point":"f","time_limit_s":0.5,"output_checker":"exact",
      "levels":[{"index":0,"hardness":0.0,"cases":[{"input":[1],"expected_output":2,"reference_time_s":0.001}]},
                {"index":1,"hardness":1.0,"cases":[{"input":[2],"expected_output":3,"reference_time_s":0.001}]}]}]}"#;
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn selftest_passes_and_is_reproducible() {
    let a = effbench(&["selftest", "--seed", "5"]);
    assert_eq!(code(&a), 0, "{}", stdout(&a));
    assert!(!stdout(&a).contains("[FAIL]"));
    assert!(stdout(&a).contains("oracle-equivalence"));
    let b = effbench(&["selftest", "--seed", "5"]);
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn calibrate_rejects_alpha_before_running_anything() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cal.json");
    // The runner would fail loudly if it were ever started.
    let o = effbench(&[
        "calibrate", "--problemset", "demo/fib/problemset.json", "--references", "demo/fib/references",
        "--out", p(&out), "--alpha", "1.0", "--runner", "false",
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("timeout factor"));
    assert!(!out.exists());
}

#[test]
fn calibrate_names_problems_without_reference() {
    let dir = tempfile::tempdir().unwrap();
    let o = effbench(&[
        "calibrate", "--problemset", "demo/fib/problemset.json", "--references", p(dir.path()),
        "--out", p(&dir.path().join("cal.json")),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("fib"), "{}", stderr(&o));
}

#[test]
fn invalid_manifest_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"problems":[{"id":"x","prompt":"","entry_point":"1f","time_limit_s":1.0,"levels":[]}]}"#)
        .unwrap();
    let o = effbench(&["calibrate", "--problemset", p(&bad), "--references", p(dir.path()), "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("entry_point_invalid"));
    assert!(stderr(&o).contains("no_scored_level"));
}

#[test]
fn evaluate_empty_samples_dir() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("samples");
    std::fs::create_dir(&samples).unwrap();
    let results = dir.path().join("results.jsonl");
    let o = effbench(&[
        "evaluate", "--problemset", p(&calibrated_manifest(dir.path())), "--samples", p(&samples), "--out", p(&results),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("no samples"));
    assert_eq!(std::fs::read_to_string(&results).unwrap(), "");
}

#[test]
fn evaluate_requires_a_calibrated_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = effbench(&[
        "evaluate", "--problemset", "demo/fib/problemset.json", "--samples", "demo/fib/samples",
        "--out", p(&dir.path().join("r.jsonl")),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("not calibrated"));
}

#[test]
fn runner_protocol_violation_is_a_harness_error() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("samples/inc");
    std::fs::create_dir_all(&samples).unwrap();
    std::fs::write(samples.join("0.py"), "def f(x): return x + 1\n").unwrap();
    let o = effbench(&[
        "evaluate", "--problemset", p(&calibrated_manifest(dir.path())), "--samples", p(&dir.path().join("samples")),
        "--out", p(&dir.path().join("r.jsonl")), "--runner", "sh -c 'echo garbage' runner",
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("protocol"));
}

#[test]
fn scripted_runner_drives_evaluation_and_resume() {
    // A shell runner that reports every case ok in 1 ms, no Python needed.
    let dir = tempfile::tempdir().unwrap();
    let runner = dir.path().join("runner.sh");
    std::fs::write(
        &runner,
        r#"for id in $(grep -o '"case_id":"[^"]*"' "$1" | cut -d'"' -f4); do
  printf '{"case_id":"%s","status":"ok","timings":[0.001,0.001]}\n' "$id"
done
"#,
    )
    .unwrap();
    let samples = dir.path().join("samples/inc");
    std::fs::create_dir_all(&samples).unwrap();
    for i in 0..3 {
        std::fs::write(samples.join(format!("{i}.py")), "def f(x): return x + 1\n").unwrap();
    }
    let results = dir.path().join("r.jsonl");
    let manifest = calibrated_manifest(dir.path());
    let run = || {
        effbench(&[
            "evaluate", "--problemset", p(&manifest), "--samples", p(&dir.path().join("samples")), "--out", p(&results),
            "--runner", &format!("sh {}", p(&runner)), "--repeats", "2",
        ])
    };
    let o = run();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let first = std::fs::read_to_string(&results).unwrap();
    assert_eq!(first.lines().count(), 3);

    // Second run is a no-op.
    assert_eq!(code(&run()), 0);
    assert_eq!(std::fs::read_to_string(&results).unwrap(), first);

    // Drop one record (and leave a torn tail): only that pair is redone.
    let kept: Vec<&str> = first.lines().take(2).collect();
    std::fs::write(&results, format!("{}\n{{\"problem_id\":\"in", kept.join("\n"))).unwrap();
    let o = run();
    assert!(stderr(&o).contains("evaluated 1 new samples"), "{}", stderr(&o));
    let again = std::fs::read_to_string(&results).unwrap();
    assert_eq!(again.lines().count(), 3);

    let report = dir.path().join("report.json");
    let o = effbench(&["score", "--results", p(&results), "--k", "1,3", "--out", p(&report)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("eff@1"));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["aggregate"]["pass_at_k"]["3"].as_f64(), Some(1.0));
}

fn record(pid: &str, i: usize, e: f64, correct: bool) -> String {
    format!(
        r#"{{"problem_id":"{pid}","sample_index":{i},"correct":{correct},"level_scores":[{e}],"efficiency_score":{e},"failure_reason":"{}","speedup":1.0,"levels":[],"diagnostics":""}}"#,
        if correct { "none" } else { "wrong_output" }
    )
}

#[test]
fn score_on_binary_scores_matches_pass_at_k() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("r.jsonl");
    let mut lines = Vec::new();
    for i in 0..12 {
        let ok = i % 3 == 0;
        lines.push(record("a", i, if ok { 1.0 } else { 0.0 }, ok));
        lines.push(record("b", i, if i < 7 { 1.0 } else { 0.0 }, i < 7));
    }
    std::fs::write(&results, lines.join("\n") + "\n").unwrap();
    let report = dir.path().join("report.json");
    let o = effbench(&["score", "--results", p(&results), "--k", "1,5,10", "--out", p(&report)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    for pid in ["a", "b"] {
        for k in ["1", "5", "10"] {
            let e = v["per_problem"][pid]["eff_at_k"][k].as_f64().unwrap();
            let pass = v["per_problem"][pid]["pass_at_k"][k].as_f64().unwrap();
            assert!((e - pass).abs() < 1e-9, "{pid} k={k}: {e} vs {pass}");
        }
    }
    assert!((v["per_problem"]["a"]["pass_at_k"]["1"].as_f64().unwrap() - 4.0 / 12.0).abs() < 1e-12);
}

#[test]
fn score_errors() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("r.jsonl");
    std::fs::write(&results, (0..3).map(|i| record("short", i, 0.5, true) + "\n").collect::<String>()).unwrap();
    let o = effbench(&["score", "--results", p(&results), "--k", "1,10"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("insufficient samples"));
    assert!(stderr(&o).contains("short"));

    std::fs::write(&results, "{not json}\n").unwrap();
    assert_eq!(code(&effbench(&["score", "--results", p(&results)])), 2);
    assert_eq!(code(&effbench(&["score", "--results", p(&dir.path().join("missing"))])), 2);
}

#[test]
fn import_cases_appends_generated_cases() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("more.json");
    let generator = r#"sh -c 'echo "{\"level\":1,\"input\":[$2]}"' gen"#;
    let o = effbench(&[
        "import-cases", "--problemset", "demo/fib/problemset.json", "--problem", "fib", "--generator", generator,
        "--seed", "29", "--out", p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let level1 = v["problems"][0]["levels"][1]["cases"].as_array().unwrap();
    assert_eq!(level1.len(), 5);
    assert_eq!(level1[4]["input"][0].as_i64(), Some(29));

    let o = effbench(&[
        "import-cases", "--problemset", "demo/fib/problemset.json", "--problem", "nope", "--generator", "true",
        "--out", p(&out),
    ]);
    assert_eq!(code(&o), 2);
    let o = effbench(&[
        "import-cases", "--problemset", "demo/fib/problemset.json", "--problem", "fib", "--generator", "false",
        "--out", p(&out),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("generator failed"));
}
