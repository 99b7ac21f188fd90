use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const DEMO: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/scenarios/demo.json");

fn openpub(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_openpub"))
        .args(args)
        .env_remove("OPENPUB_CURVE")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn keygen_writes_one_file_per_validator_plus_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = openpub(&["keygen", "--k", "3", "--n", "4", "--seed", "9", "--out", p(out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let mut names: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["bundle.json", "validator-1.key", "validator-2.key", "validator-3.key", "validator-4.key"]
    );
    for name in &names {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }

    let key = fs::read_to_string(a.join("validator-2.key")).unwrap();
    assert!(key.starts_with("openpub-key v1 curve=bls12-381 role=validator k=3 n=4 id=2\n"));
    for field in ["account_sk=", "msk=", "gsk=", "tsk="] {
        assert!(key.contains(field), "{field}");
    }
    let bundle: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("bundle.json")).unwrap()).unwrap();
    assert_eq!(bundle["gvks"].as_array().unwrap().len(), 4);
    assert!(bundle["mpk"].is_string() && bundle["acc_pub"].is_string());

    let c = dir.path().join("c");
    openpub(&["keygen", "--k", "3", "--n", "4", "--seed", "10", "--out", p(&c)]);
    assert_ne!(fs::read(a.join("bundle.json")).unwrap(), fs::read(c.join("bundle.json")).unwrap());
}

#[test]
fn keygen_from_scenario_uses_its_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = openpub(&["keygen", "--config", DEMO, "--out", p(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 5);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path());
    for args in [
        vec!["keygen", "--k", "5", "--n", "4", "--seed", "1", "--out", out],
        vec!["keygen", "--k", "3", "--n", "4", "--out", out],
        vec!["bench", "--thresholds", "3,5"],
        vec!["bench", "--thresholds", "banana"],
        vec!["run", "--config", "/nonexistent.json", "--out", out],
        vec!["frobnicate"],
    ] {
        let o = openpub(&args);
        assert_eq!(code(&o), 2, "{args:?}: {}", stderr(&o));
    }

    let o = Command::new(env!("CARGO_BIN_EXE_openpub"))
        .args(["keygen", "--k", "3", "--n", "4", "--seed", "1", "--out", out])
        .env("OPENPUB_CURVE", "bn254")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("OPENPUB_CURVE"));
}

#[test]
fn scenario_without_n_f_or_seed_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let demo: serde_json::Value = serde_json::from_str(&fs::read_to_string(DEMO).unwrap()).unwrap();
    for key in ["n", "f", "seed"] {
        let mut cfg = demo.clone();
        cfg.as_object_mut().unwrap().remove(key);
        let path = dir.path().join(format!("no-{key}.json"));
        fs::write(&path, cfg.to_string()).unwrap();
        let o = openpub(&["run", "--config", p(&path), "--out", p(&dir.path().join("out"))]);
        assert_eq!(code(&o), 2, "{key}");
    }
}

#[test]
fn run_is_deterministic_and_inspectable() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = openpub(&["run", "--config", DEMO, "--out", p(&a), "--format", "csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("token_conservation"));
    openpub(&["run", "--config", DEMO, "--out", p(&b)]);
    for f in ["chain.jsonl", "events.jsonl", "metrics.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert!(a.join("metrics.csv").exists() && !b.join("metrics.csv").exists());

    let c = dir.path().join("c");
    openpub(&["run", "--config", DEMO, "--seed", "5", "--out", p(&c)]);
    assert_ne!(fs::read(a.join("chain.jsonl")).unwrap(), fs::read(c.join("chain.jsonl")).unwrap());

    let chain = a.join("chain.jsonl");
    let o = openpub(&["inspect", "--chain", p(&chain), "author-1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    let order = ["submit", "distribute", "review", "open", "reward"];
    let pos: Vec<usize> = order.iter().map(|w| text.find(&format!("] {w}")).expect(w)).collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]), "{text}");

    let submit_hash = text
        .lines()
        .find_map(|l| l.strip_prefix("paper "))
        .unwrap()
        .trim()
        .to_owned();
    let by_hash = openpub(&["inspect", "--chain", p(&chain), &submit_hash, "--format", "json"]);
    assert_eq!(code(&by_hash), 0, "{}", stderr(&by_hash));
    let json: serde_json::Value = serde_json::from_slice(&by_hash.stdout).unwrap();
    assert!(json.to_string().contains(&submit_hash));

    assert_eq!(code(&openpub(&["inspect", "--chain", p(&chain), "height:3"])), 0);
    let missing = openpub(&["inspect", "--chain", p(&chain), "nobody"]);
    assert_eq!(code(&missing), 1);
    assert!(stderr(&missing).contains("not found"));
}

#[test]
fn stalled_run_names_the_violated_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(DEMO).unwrap()).unwrap();
    cfg["step_timeout_us"] = 1.into();
    let path = dir.path().join("stuck.json");
    fs::write(&path, cfg.to_string()).unwrap();
    let o = openpub(&["run", "--config", p(&path), "--out", p(&dir.path().join("out"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("workflow_completed"), "{}", stderr(&o));
}

#[test]
fn bench_emits_eight_rows_per_threshold() {
    let o = openpub(&["bench", "--thresholds", "1,1;3,4", "--iters", "2", "--setup-iters", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().contains("op"));
    assert_eq!(lines.count(), 16);
}

#[test]
fn sweep_reports_every_class() {
    let o = openpub(&["sweep", "--thresholds", "3,4", "--txs", "50"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    for class in ["tx_sig", "tx_tsig", "tx_gsig"] {
        assert!(text.contains(&format!("3,4,{class},50,")), "{text}");
    }
}
