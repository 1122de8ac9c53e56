use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dmar(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmar"))
        .args(args)
        .current_dir(dir)
        .env("DMAR_WORKERS", "1")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = dmar(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn simulate_estimate_apply() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--scenario", "A", "--n", "3000", "--seed", "3", "--out", "cohort.csv"]);
    ok(d, &["estimate", "--data", "cohort.csv", "--out", "regime.json", "--balance-dir", "balance"]);
    let regime = fs::read_to_string(d.join("regime.json")).unwrap();
    assert!(regime.contains("\"stages\""));
    assert!(d.join("balance").read_dir().unwrap().next().is_some());

    ok(d, &["apply", "--regime", "regime.json", "--data", "cohort.csv", "--out", "decisions.csv"]);
    let decisions = fs::read_to_string(d.join("decisions.csv")).unwrap();
    let mut lines = decisions.lines();
    assert_eq!(lines.next(), Some("id,time,visit,addon"));
    // nobody is censored in scenario A, so every subject gets a decision per stage
    assert_eq!(lines.count(), 2 * 3000);
}

#[test]
fn qloma_with_ipt_and_value() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--scenario", "A", "--n", "2000", "--out", "c.csv"]);
    ok(d, &["estimate", "--data", "c.csv", "--method", "qloma", "--weights", "none", "--out", "q.json"]);
    ok(d, &["estimate", "--data", "c.csv", "--weights", "ipt", "--out", "w.json"]);
    ok(
        d,
        &["value", "--regime", "q.json", "--regime", "w.json", "--true-optimal", "--n-eval", "5000", "--out", "value.csv"],
    );
    let value = fs::read_to_string(d.join("value.csv")).unwrap();
    assert!(value.starts_with("policy,value,value_se,gain,gain_se,n_eval"));
    assert_eq!(value.lines().count(), 5);
}

#[test]
fn study_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("s.toml"),
        "[study]\nscenario = \"A\"\nn = 1500\nreplications = 2\nestimators = [\"Oc\", \"Oc-Wc\"]\noutput_dir = \"out\"\n",
    )
    .unwrap();
    let table = ok(d, &["study", "--config", "s.toml"]);
    assert!(table.contains("Oc-Wc"));
    for f in ["bias.csv", "estimates.csv", "bundle.json"] {
        assert!(d.join("out").join(f).exists(), "{f}");
    }
    ok(d, &["report", "--bundle", "out/bundle.json", "--out-dir", "again"]);
    assert_eq!(
        fs::read_to_string(d.join("out/bias.csv")).unwrap(),
        fs::read_to_string(d.join("again/bias.csv")).unwrap()
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(dmar(d, &["--help"]).status.code(), Some(0));
    assert_eq!(dmar(d, &["estimate", "--bogus"]).status.code(), Some(1));
    let out = dmar(d, &["estimate", "--data", "absent.csv", "--out", "r.json"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    let line = err.lines().last().unwrap();
    let v: serde_json::Value = serde_json::from_str(line).unwrap();
    assert_eq!(v["status"], "error");
}
