use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

const CONFIG: &str = r#"{
  "seed": 5,
  "out_dir": "out",
  "generate": [
    {"name": "train", "spec": {"count": 4, "seed": 1, "push": {"setup": "position_control", "duration": 0.25}}},
    {"name": "test", "spec": {"count": 2, "seed": 2, "push": {"setup": "position_control", "duration": 0.25}}}
  ],
  "train_dataset": "out/train.jsonl",
  "train": {"iterations": 3, "batch_size": 2, "rollout_length": 20, "eval_every": 0},
  "test_datasets": [{"name": "test", "path": "out/test.jsonl"}],
  "models": [{"name": "in", "path": "out/in.ckpt"}, {"name": "sain", "path": "out/sain.ckpt"}],
  "horizon": 20,
  "planner": {"max_episode_actions": 1},
  "control": {"n_easy": 1, "n_hard": 1}
}"#;

fn sain(dir: &Path, args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_sain"))
        .args(args)
        .args(["--config", "run.json"])
        .current_dir(dir)
        .output()
        .unwrap();
    out
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.join("out")];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let key = p.strip_prefix(dir).unwrap().display().to_string();
                files.insert(key, std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

fn pipeline(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::write(dir.join("run.json"), CONFIG).unwrap();
    for cmd in ["gen-data", "train", "eval-pred", "eval-control", "report"] {
        let out = sain(dir, &[cmd]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    snapshot(dir)
}

#[test]
fn pipeline_is_byte_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = pipeline(a.path());
    let fb = pipeline(b.path());
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (k, v) in &fa {
        assert!(v == &fb[k], "{k} differs between runs");
    }
    for name in [
        "out/train.jsonl",
        "out/in.ckpt",
        "out/sain.ckpt",
        "out/metrics_test.csv",
        "out/control.csv",
        "out/report.json",
        "out/episodes/sain/episode_0_easy.svg",
        "out/episodes/sain/episode_1_hard.svg",
    ] {
        assert!(fa.contains_key(name), "missing {name}: {:?}", fa.keys().collect::<Vec<_>>());
    }
    let csv = String::from_utf8(fa["out/metrics_test.csv"].clone()).unwrap();
    assert!(csv.starts_with("model,object,trans_pct,pos_mm,rot_deg\n"));
    assert_eq!(csv.lines().count(), 1 + 3 * 2);
    let report: serde_json::Value = serde_json::from_slice(&fa["out/report.json"]).unwrap();
    assert_eq!(report["config"]["seed"], 5);
    assert!(report["inputs"].as_object().unwrap().keys().any(|k| k.ends_with("sain.ckpt")));
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.json"), CONFIG).unwrap();
    let out = sain(dir.path(), &["gen-data", "--out", "elsewhere", "--seed", "9", "--threads", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("elsewhere/train.jsonl").exists());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn training_rejects_threads() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.json"), CONFIG).unwrap();
    let out = sain(dir.path(), &["train", "--threads", "2"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("threads"), "{err}");
}

#[test]
fn missing_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = sain(dir.path(), &["eval-pred"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.json"));
}
