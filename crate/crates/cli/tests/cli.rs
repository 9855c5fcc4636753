use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn psvm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psvm"))
        .current_dir(dir)
        .args(args)
        .env_remove("PSVM_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = psvm(dir, args);
    assert!(
        out.status.success(),
        "psvm {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

fn generated(kind: &str) -> TempDir {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["gen", "--experiment", kind, "--seed", "11", "--out", "data"]);
    tmp
}

#[test]
fn gen_writes_both_labelings_and_test_set() {
    let tmp = generated("repro1d");
    let d = tmp.path().join("data");
    assert_eq!(lines(&d.join("train_hard.csv")), 201);
    assert_eq!(lines(&d.join("train_semi.csv")), 201);
    assert_eq!(lines(&d.join("test.csv")), 1001);
    let semi = std::fs::read_to_string(d.join("train_semi.csv")).unwrap();
    assert!(semi.starts_with("x1,label_kind,label_value,true_posterior\n"));
    assert!(semi.contains(",soft,") && semi.contains(",hard,"));
}

#[test]
fn gen_is_byte_identical_for_a_seed() {
    let a = generated("repro2d");
    let b = generated("repro2d");
    for name in ["train_hard.csv", "train_semi.csv", "test.csv"] {
        let fa = std::fs::read(a.path().join("data").join(name)).unwrap();
        let fb = std::fs::read(b.path().join("data").join(name)).unwrap();
        assert_eq!(fa, fb, "{name}");
    }
    let header = std::fs::read_to_string(a.path().join("data/test.csv")).unwrap();
    assert!(header.starts_with("x1,x2,label_kind"));
}

#[test]
fn train_psvm_respects_costs_and_converges() {
    let tmp = generated("repro1d");
    let dir = tmp.path();
    ok(dir, &["train", "data/train_semi.csv", "--method", "psvm", "--seed", "11", "--out", "m.json"]);
    let m = json(&dir.join("m.json"));
    assert_eq!(m["metadata"]["diagnostics"]["converged"], Value::Bool(true));
    assert_eq!(m["metadata"]["seed"], Value::from(11));
    assert_eq!(m["input_dim"], Value::from(1));
    for c in m["coefficients"].as_array().unwrap() {
        assert!(c.as_f64().unwrap().abs() <= 100.0);
    }
}

#[test]
fn train_csvm_has_empty_soft_block_and_platt_map() {
    let tmp = generated("repro1d");
    let dir = tmp.path();
    ok(dir, &["train", "data/train_hard.csv", "--method", "csvm", "--out", "c.json"]);
    let m = json(&dir.join("c.json"));
    assert_eq!(m["metadata"]["n_soft"], Value::from(0));
    assert_eq!(m["metadata"]["method"], Value::from("csvm"));
    assert!(m["calibration"]["a"].as_f64().unwrap() < 0.0);

    let out = psvm(dir, &["train", "data/train_semi.csv", "--method", "csvm", "--out", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn predict_rejects_wrong_dimension() {
    let one = generated("repro1d");
    let two = generated("repro2d");
    ok(one.path(), &["train", "data/train_semi.csv", "--out", "m.json"]);
    let other = two.path().join("data/test.csv");
    let out = psvm(one.path(), &["predict", "--model", "m.json", other.to_str().unwrap(), "--out", "p.csv"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    ok(one.path(), &["predict", "--model", "m.json", "data/test.csv", "--out", "p.csv"]);
    let text = std::fs::read_to_string(one.path().join("p.csv")).unwrap();
    assert!(text.starts_with("x1,score,prob,class\n"));
    assert_eq!(text.lines().count(), 1001);
}

#[test]
fn eval_reports_finite_kl_and_is_repeatable() {
    let tmp = generated("repro1d");
    let dir = tmp.path();
    ok(dir, &["train", "data/train_semi.csv", "--out", "m.json"]);
    ok(dir, &["eval", "--model", "m.json", "data/test.csv", "--out", "e1"]);
    ok(dir, &["eval", "--model", "m.json", "data/test.csv", "--out", "e2"]);
    let m = json(&dir.join("e1/metrics.json"));
    assert!(m["kl"].as_f64().unwrap().is_finite());
    assert_eq!(m["count"], Value::from(1000));
    assert_eq!(m["method"], Value::from("psvm"));
    assert_eq!(std::fs::read(dir.join("e1/metrics.json")).unwrap(), std::fs::read(dir.join("e2/metrics.json")).unwrap());
    assert_eq!(std::fs::read(dir.join("e1/curves.csv")).unwrap(), std::fs::read(dir.join("e2/curves.csv")).unwrap());
    let curves = std::fs::read_to_string(dir.join("e1/curves.csv")).unwrap();
    assert!(curves.starts_with("x1,true_p,pred_p,pred_y\n"));
}

#[test]
fn eval_without_posteriors_omits_kl() {
    let tmp = generated("repro1d");
    let dir = tmp.path();
    ok(dir, &["train", "data/train_semi.csv", "--out", "m.json"]);
    std::fs::write(dir.join("bare.csv"), "x1,label_kind,label_value\n0.7,hard,1\n-0.4,hard,-1\n0.1,hard,-1\n").unwrap();
    ok(dir, &["eval", "--model", "m.json", "bare.csv", "--out", "e"]);
    let m = json(&dir.join("e/metrics.json"));
    assert!(m.get("kl").is_none());
    assert_eq!(m["count"], Value::from(3));
    assert!(m["accuracy"].as_f64().is_some());
}

#[test]
fn sweep_summary_has_one_row_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    ok(
        tmp.path(),
        &[
            "experiment", "--experiment", "noise-sweep", "--repetitions", "30", "--n-learn", "30", "--n-test", "40",
            "--C", "10", "--C-tilde", "10", "--out", "sweep",
        ],
    );
    let csv = std::fs::read_to_string(tmp.path().join("sweep/summary.csv")).unwrap();
    let mut rows = csv.lines();
    assert_eq!(rows.next(), Some("amplitude,method,acc_mean,acc_std,kl_mean,kl_std"));
    let body: Vec<&str> = rows.collect();
    assert_eq!(body.len(), 22);
    assert!(body[0].starts_with("0,psvm,") && body[1].starts_with("0,csvm,"));
    assert!(body[21].starts_with("0.5,csvm,"));
}

#[test]
fn experiment_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        ok(
            tmp.path(),
            &["experiment", "--experiment", "repro2d", "--repetitions", "1", "--seed", "5", "--out", out],
        );
    }
    for name in ["summary.json", "curves.csv"] {
        assert_eq!(
            std::fs::read(tmp.path().join("a").join(name)).unwrap(),
            std::fs::read(tmp.path().join("b").join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn repro1d_defaults_favour_psvm_probabilities() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["experiment", "--experiment", "repro1d", "--out", "r"]);
    let s = json(&tmp.path().join("r/summary.json"));
    let median = s["median"].as_array().unwrap();
    assert_eq!(median[0][0], Value::from("psvm"));
    let kl_psvm = median[0][1]["kl"].as_f64().unwrap();
    let kl_platt = median[1][1]["kl"].as_f64().unwrap();
    assert!(kl_psvm < kl_platt, "{kl_psvm} vs {kl_platt}");
    let curves = std::fs::read_to_string(tmp.path().join("r/curves.csv")).unwrap();
    assert!(curves.starts_with("x1,true_p,psvm_p,platt_p,psvm_y,csvm_y\n"));
}

#[test]
fn flags_override_config_file() {
    let tmp = generated("repro1d");
    let dir = tmp.path();
    std::fs::write(dir.join("cfg.toml"), "C = 5.0\nC_tilde = 6.0\neta = 0.2\n").unwrap();
    ok(dir, &["train", "data/train_semi.csv", "--config", "cfg.toml", "--out", "a.json"]);
    ok(dir, &["train", "data/train_semi.csv", "--config", "cfg.toml", "--C", "7", "--out", "b.json"]);
    let a = json(&dir.join("a.json"));
    let b = json(&dir.join("b.json"));
    assert_eq!(a["metadata"]["c"], Value::from(5.0));
    assert_eq!(a["metadata"]["c_tilde"], Value::from(6.0));
    assert_eq!(a["metadata"]["eta"], Value::from(0.2));
    assert_eq!(b["metadata"]["c"], Value::from(7.0));
    assert_eq!(b["metadata"]["c_tilde"], Value::from(6.0));
}

#[test]
fn strict_mode_fails_on_non_convergence() {
    let tmp = generated("repro1d");
    let dir = tmp.path();
    std::fs::write(dir.join("cfg.toml"), "max_iterations = 1\n").unwrap();
    let lax = psvm(dir, &["train", "data/train_semi.csv", "--config", "cfg.toml", "--out", "lax.json"]);
    assert_eq!(lax.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&lax.stderr).contains("warning"));
    assert!(json(&dir.join("lax.json"))["metadata"]["warning"].is_string());

    let strict =
        psvm(dir, &["train", "data/train_semi.csv", "--config", "cfg.toml", "--strict", "--out", "strict.json"]);
    assert_eq!(strict.status.code(), Some(3));
    assert!(dir.join("strict.json").exists());
}

#[test]
fn usage_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(psvm(tmp.path(), &["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(psvm(tmp.path(), &["gen", "--out", "x"]).status.code(), Some(1));
    assert_eq!(psvm(tmp.path(), &["gen", "--experiment", "repro1d", "--eta", "0.7", "--out", "x"]).status.code(), Some(1));
    std::fs::write(tmp.path().join("cfg.toml"), "colour = 3\n").unwrap();
    let out = psvm(tmp.path(), &["gen", "--experiment", "repro1d", "--config", "cfg.toml", "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(psvm(tmp.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn missing_input_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(psvm(tmp.path(), &["train", "nope.csv", "--out", "m.json"]).status.code(), Some(2));
}

#[test]
fn thread_cap_is_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_psvm"))
        .current_dir(tmp.path())
        .args(["gen", "--experiment", "repro1d", "--out", "d"])
        .env("PSVM_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = Command::new(env!("CARGO_BIN_EXE_psvm"))
        .current_dir(tmp.path())
        .args(["experiment", "--experiment", "repro1d", "--repetitions", "2", "--out", "r"])
        .env("PSVM_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
}
