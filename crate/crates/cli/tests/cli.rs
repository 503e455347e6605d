use std::fs;
use std::path::Path;
use std::io::Write;
use std::process::{Command, Output, Stdio};

const TINY: &str = r#"{
  "world": {
    "base_vocab_size": 20,
    "sentence_length_range": [2, 4],
    "grammar_seed": 3,
    "languages": [
      {"id": "A", "substitution_seed": 40},
      {"id": "B", "substitution_seed": 41},
      {"id": "C1", "substitution_seed": 42},
      {"id": "C2", "substitution_seed": 43}
    ]
  },
  "data": {"train_sentences": 30, "valid_pairs": 4, "test_pairs": 4},
  "model": {"n_layers": 1, "d_model": 8, "n_heads": 2, "d_ff": 8, "max_context": 32},
  "phases": [
    {"phase": "monolingual", "steps": 2, "batch_size": 2},
    {"phase": "mixed", "steps": 2, "batch_size": 2, "bt_ratio": 0.9},
    {"phase": "pure_bt", "steps": 2, "batch_size": 2}
  ],
  "pool": {"primary": ["A", "B"], "auxiliary": ["C1", "C2"]},
  "rounds": {"rounds": 1, "sentences_per_direction": 3, "steps": 2, "batch_size": 2},
  "eval": {"metrics": ["chrf", "bleu"], "decode": {"temperature": 0.1, "greedy": true}, "collapse_sample": 4},
  "seed": 5
}"#;

fn btel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_btel")).args(args).env("BTEL_LOG_LEVEL", "error").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = btel(args);
    assert!(o.status.success(), "btel {args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn write_config(dir: &Path) -> String {
    let p = dir.join("tiny.json");
    fs::write(&p, TINY).unwrap();
    p.display().to_string()
}

#[test]
fn report_on_empty_log_writes_header() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("metrics.jsonl"), "").unwrap();
    ok(&["report", "--out", tmp.path().to_str().unwrap()]);
    let csv = fs::read_to_string(tmp.path().join("summary.csv")).unwrap();
    assert_eq!(csv, "system,direction,metric,split,round,value,seed\n");
}

#[test]
fn diagnose_identity_stub_copies() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = ok(&["diagnose", "--config", &cfg, "--stub", "identity", "--n", "20"]);
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert!(v["copying_rate"].as_f64().unwrap() >= 0.99);
    let out = ok(&["diagnose", "--config", &cfg, "--stub", "oracle", "--n", "20"]);
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["target_language_rate"].as_f64().unwrap(), 1.0);
}

#[test]
fn evaluate_reproduces_logged_score() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let dir = tmp.path().join("exp");
    let d = dir.to_str().unwrap();
    ok(&["gen-data", "--config", &cfg, "--out", d]);
    ok(&["train-single", "--out", d]);
    let ckpt = dir.join("checkpoints/member-1/phase-pure_bt-step-6.ckpt");
    let out = ok(&["evaluate", "--out", d, "--checkpoint", ckpt.to_str().unwrap(), "--split", "valid"]);
    let fresh: Vec<serde_json::Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(fresh.len(), 4);
    let log = fs::read_to_string(dir.join("metrics.jsonl")).unwrap();
    let logged: Vec<serde_json::Value> = log
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .filter(|r| r["kind"] == "score" && r["payload"]["system"] == "member-1")
        .map(|r| r["payload"].clone())
        .collect();
    assert_eq!(logged.len(), 4);
    for (f, l) in fresh.iter().zip(&logged) {
        assert_eq!(f["direction"], l["direction"]);
        assert_eq!(f["metric"], l["metric"]);
        assert_eq!(f["value"], l["value"]);
    }
}

#[test]
fn stages_run_independently() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let dir = tmp.path().join("exp");
    let d = dir.to_str().unwrap();
    ok(&["gen-data", "--config", &cfg, "--out", d, "--members", "1"]);
    ok(&["train-single", "--out", d]);
    ok(&["train-ensemble", "--out", d]);
    ok(&["baseline", "--out", d]);
    let sel = ok(&["evaluate", "--out", d]);
    assert!(sel.contains("\"best_member\": 0"));
    let marker = fs::read_to_string(dir.join("stage.json")).unwrap();
    assert!(marker.contains("\"done\""));
    let ckpt = dir.join("checkpoints/member-0/phase-round1-step-8.ckpt");
    let mut child = Command::new(env!("CARGO_BIN_EXE_btel"))
        .args(["translate", "--out", d, "--checkpoint", ckpt.to_str().unwrap(), "--src", "A", "--tgt", "B"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let input: String = fs::read_to_string(dir.join("data/A.train.txt")).unwrap().lines().take(3).map(|l| format!("{l}\n")).collect();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    let o = child.wait_with_output().unwrap();
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 3);
}

#[test]
fn usage_errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(!btel(&["train-single"]).status.success());
    assert!(!btel(&["train-single", "--out", tmp.path().to_str().unwrap()]).status.success());
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, TINY.replace("[\"C1\", \"C2\"]", "[\"C1\", \"Z\"]")).unwrap();
    let o = btel(&["gen-data", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("x").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("pool.auxiliary"));
}

#[test]
fn full_run_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&["run", "--config", &cfg, "--out", a.to_str().unwrap()]);
    ok(&["run", "--config", &cfg, "--out", b.to_str().unwrap()]);
    for f in ["summary.csv", "checkpoints/member-0/phase-round1-step-8.ckpt", "checkpoints/baseline/phase-round1-step-8.ckpt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}
