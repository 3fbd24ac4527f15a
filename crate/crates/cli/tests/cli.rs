use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn rec_opt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rec-opt"))
        .current_dir(root())
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn realloc_two_members() {
    let v = json_of(&rec_opt(&["realloc", "--meters", "configs/meters/two-members.json", "--json"]));
    assert!((v["no_rec_total"].as_f64().unwrap() - 1578.404).abs() < 1e-3);
    assert!((v["global_bill"].as_f64().unwrap() - 1032.133).abs() < 1e-3);
    let closed = json_of(&rec_opt(&["realloc", "--meters", "configs/meters/two-members.json", "--method", "two-member", "--json"]));
    assert!((closed["global_bill"].as_f64().unwrap() - 1032.133).abs() < 1e-3);
}

#[test]
fn realloc_methods_without_peaks() {
    let path = "configs/meters/three-members.json";
    let lp = json_of(&rec_opt(&["realloc", "--meters", path, "--method", "lp-no-peaks", "--json"]));
    let greedy = json_of(&rec_opt(&["realloc", "--meters", path, "--method", "greedy", "--json"]));
    assert!((lp["global_bill"].as_f64().unwrap() - 83.188).abs() < 1e-3);
    assert!((greedy["global_bill"].as_f64().unwrap() - 83.188).abs() < 1e-3);
    let two = rec_opt(&["realloc", "--meters", path, "--method", "two-member"]);
    assert!(!two.status.success());
    let text = rec_opt(&["realloc", "--meters", path]);
    assert!(String::from_utf8_lossy(&text.stdout).contains("global bill"));
}

#[test]
fn eval_writes_results() {
    let out = std::env::temp_dir().join(format!("rec-opt-cli-{}", std::process::id()));
    let out_s = out.to_str().unwrap();
    let args = [
        "eval", "--config", "rec2", "--policies", "rec", "self", "mpc:K=4,alpha=0.85", "--scenarios", "2", "--seeds", "1,2",
        "--horizon", "41", "--out", out_s, "--json",
    ];
    let v = json_of(&rec_opt(&args));
    let pols = v["summary"]["policies"].as_array().unwrap();
    assert_eq!(pols.len(), 3);
    assert_eq!(v["summary"]["curves"]["mpc alpha=0.85"][0]["horizon"], 4);
    let csv1 = std::fs::read_to_string(out.join("returns.csv")).unwrap();
    assert_eq!(csv1.lines().count(), 1 + 3 * 2);
    json_of(&rec_opt(&args));
    assert_eq!(csv1, std::fs::read_to_string(out.join("returns.csv")).unwrap());
    std::fs::remove_dir_all(&out).unwrap();

    let bad = rec_opt(&["eval", "--config", "rec2", "--policies", "dqn"]);
    assert!(!bad.status.success());
    let missing = rec_opt(&["eval", "--config", "nope", "--policies", "rec"]);
    assert!(!missing.status.success());
}

#[test]
fn serve_env_over_stdin() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_rec-opt"))
        .current_dir(root())
        .args(["serve-env", "--config", "rec2", "--mode", "dense"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    writeln!(stdin, r#"{{"cmd":"reset","seed":1}}"#).unwrap();
    for _ in 0..4 {
        writeln!(stdin, r#"{{"cmd":"step","action":[0.05]}}"#).unwrap();
    }
    writeln!(stdin, r#"{{"cmd":"close"}}"#).unwrap();
    drop(stdin);
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let lines: Vec<Value> = String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 6);
    // Dense mode: a bill at the end of the first market period.
    assert!(lines[4]["reward"].as_f64().unwrap() < 0.0);
    assert_eq!(lines[0]["obs"].as_array().unwrap().len(), 8);
    assert_eq!(lines[5]["closed"], true);
}

#[test]
fn bench_and_sample() {
    let v = json_of(&rec_opt(&["bench", "--config", "rec2", "--policies", "rec", "mpc:K=2,alpha=1", "--calls", "3", "--json"]));
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert!(v[0]["mean_seconds"].as_f64().unwrap() >= 0.0);
    let out = rec_opt(&["sample", "--config", "rec2", "--seed", "3"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "M1.consumption,M2.production");
    assert_eq!(text.lines().count(), 1 + 101);
    assert_eq!(text, String::from_utf8(rec_opt(&["sample", "--config", "rec2", "--seed", "3"]).stdout).unwrap());
}
