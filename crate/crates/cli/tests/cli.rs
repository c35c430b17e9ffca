use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_optfuzz");

fn optfuzz(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).current_dir(dir).env_remove("OPTFUZZ_CORPUS_DIR").output().unwrap()
}

fn first_case(dir: &Path) -> String {
    let mut cases: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".graph"))
        .collect();
    cases.sort();
    dir.join(&cases[0]).to_string_lossy().into_owned()
}

#[test]
fn clean_campaign_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = optfuzz(dir.path(), &["fuzz", "--iterations", "50", "--report", "r.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["new_bugs"], 0);
    assert_eq!(report["iterations"], 50);
}

#[test]
fn bad_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(optfuzz(dir.path(), &["fuzz", "--alpha", "2"]).status.code(), Some(2));
    std::fs::write(dir.path().join("c.toml"), "iterations = \"many\"\n").unwrap();
    assert_eq!(optfuzz(dir.path(), &["fuzz", "--config", "c.toml"]).status.code(), Some(2));
    assert_eq!(optfuzz(dir.path(), &["fuzz", "--config", "missing.toml"]).status.code(), Some(2));
}

#[test]
fn seeded_campaign_then_replay_shrink_and_count() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.toml"),
        "iterations = 300\nmaster_seed = 3\ncorpus_dir = \"corp\"\n[case]\nfaults = [\"fold-umod\"]\n",
    )
    .unwrap();
    let out = optfuzz(dir.path(), &["fuzz", "-c", "c.toml"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let corpus = dir.path().join("corp");
    assert!(corpus.join("bugs.jsonl").exists());
    let case = first_case(&corpus);

    let out = optfuzz(dir.path(), &["replay", &case]);
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["oracle"], "O2");

    let out = optfuzz(dir.path(), &["shrink", &case, "--out", "small"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("small.graph").exists());
    assert!(dir.path().join("small.json").exists());
    let out = optfuzz(dir.path(), &["replay", "small.graph"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["oracle"], "O2");

    let out = optfuzz(dir.path(), &["active-nodes", &case]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let (active, total) = text.trim().split_once('/').unwrap();
    assert!(active.parse::<usize>().unwrap() <= total.parse::<usize>().unwrap());
}

#[test]
fn env_var_overrides_corpus_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(BIN)
        .args(["fuzz", "--iterations", "200", "--bug", "vm-negative", "--corpus", "flag-dir"])
        .current_dir(dir.path())
        .env("OPTFUZZ_CORPUS_DIR", dir.path().join("env-dir"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(dir.path().join("env-dir").join("bugs.jsonl").exists());
    assert!(!dir.path().join("flag-dir").exists());
}

#[test]
fn sweep_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = optfuzz(dir.path(), &["sweep", "--iterations", "10", "--out-dir", "sw"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("sw/sweep.json")).unwrap()).unwrap();
    assert_eq!(json["points"].as_array().unwrap().len(), 6);
}

#[test]
fn active_nodes_of_a_bare_graph() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("g.graph"), "0 constant int16 () [4]\n1 operator sqrt 0\n").unwrap();
    let out = optfuzz(dir.path(), &["active-nodes", "g.graph"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "1/2");
}

#[test]
fn adapter_check_reports_agreement_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let adapter = env!("CARGO_BIN_EXE_optfuzz-ref-adapter");
    let out = optfuzz(dir.path(), &["adapter-check", "--cases", "10", adapter, "--mode", "echo"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let out = optfuzz(dir.path(), &["adapter-check", "--cases", "5", adapter, "--mode", "negate"]);
    assert_eq!(out.status.code(), Some(1));
}
