use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn atc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(
        &path,
        "[train]\nepisodes = 3\nmax_aircraft = 4\naircraft_per_episode = 4\ncheckpoint_every = 2\n",
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn selftest_exits_zero() {
    let out = atc(&["selftest"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 6);
    assert!(!text.contains("FAIL"));
}

#[test]
fn eval_without_model_prints_usage() {
    let out = atc(&["eval"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--model"), "{err}");
    assert!(err.to_lowercase().contains("usage"), "{err}");
}

#[test]
fn bad_inputs_fail_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.ckpt");
    let out = atc(&["inspect", "--model", missing.to_str().unwrap()]);
    assert!(!out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stderr).trim().lines().count(), 1);

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[train]\ngamma = 2.0\n").unwrap();
    let out = atc(&["train", "--config", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stderr).trim().lines().count(), 1);

    assert!(!atc(&["train", "--frobnicate"]).status.success());
}

#[test]
fn train_twice_gives_identical_logs_then_eval_inspect_replay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let r = atc(&["train", "--config", &cfg, "--seed", "7", "--out", out.to_str().unwrap()]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    let log_a = fs::read(a.join("train_log.jsonl")).unwrap();
    assert_eq!(log_a, fs::read(b.join("train_log.jsonl")).unwrap());
    assert_eq!(String::from_utf8(log_a).unwrap().lines().count(), 3);
    assert!(a.join("checkpoint_00002.ckpt").exists());

    let model = a.join("final.ckpt");
    let inspect = atc(&["inspect", "--model", model.to_str().unwrap()]);
    assert!(inspect.status.success());
    assert!(String::from_utf8_lossy(&inspect.stdout).contains("actor.head.w"));

    let report = dir.path().join("report.json");
    let events = dir.path().join("events");
    let r = atc(&[
        "eval",
        "--model",
        model.to_str().unwrap(),
        "--baseline",
        "noop",
        "--hours",
        "0.5",
        "--runs",
        "2",
        "--jobs",
        "2",
        "--out",
        report.to_str().unwrap(),
        "--events-dir",
        events.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let controllers = json["controllers"].as_array().unwrap();
    assert_eq!(controllers.len(), 2);
    assert_eq!(controllers[1]["name"], "noop");
    assert_eq!(controllers[1]["aggregate"]["metrics"]["conflicts_solved_pct"]["median"], 0.0);

    let log = fs::read_dir(&events).unwrap().next().unwrap().unwrap().path();
    let r = atc(&["replay", "--events", log.to_str().unwrap()]);
    assert!(r.status.success());
    assert!(String::from_utf8_lossy(&r.stdout).contains("spawned"));
}

#[test]
fn eval_refuses_mismatched_architecture() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    assert!(atc(&["train", "--config", &cfg, "--episodes", "1", "--out", out.to_str().unwrap()])
        .status
        .success());
    let gcn = dir.path().join("gcn.toml");
    fs::write(&gcn, "[train]\ngraph_layer = \"gcn\"\n").unwrap();
    let r = atc(&[
        "eval",
        "--config",
        gcn.to_str().unwrap(),
        "--model",
        out.join("final.ckpt").to_str().unwrap(),
        "--hours",
        "0.1",
    ]);
    assert!(!r.status.success());
    assert_eq!(String::from_utf8_lossy(&r.stderr).trim().lines().count(), 1);
}
