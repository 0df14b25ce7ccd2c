//! End-to-end runs of the `taco` binary.

use std::path::Path;
use std::process::{Command, Output};

fn taco(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taco"))
        .args(args)
        .env("TACO_OUTPUT_ROOT", root)
        .output()
        .expect("spawn taco")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).trim().to_string()
}

const TINY: [&str; 10] = [
    "--set",
    "t_max=200",
    "--set",
    "eval_interval=100",
    "--set",
    "eval_episodes=4",
    "--set",
    "batch_size=4",
    "--set",
    "buffer_size=50",
];

#[test]
fn train_then_eval_probe_and_export() {
    let root = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "--algo", "taco_qmix", "--env", "relay", "--seed", "0"];
    args.extend(TINY);
    let out = taco(&args, root.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = root.path().join("taco_qmix_relay_s0");
    assert_eq!(stdout(&out), run.display().to_string());
    for f in ["config", "metrics.csv", "model.ckpt"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }

    let run_s = run.to_str().unwrap();
    let out = taco(&["eval", run_s, "--episodes", "6", "--alpha", "1"], root.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("eval_alpha1.json")).unwrap()).unwrap();
    assert_eq!(json["episodes"], 6);
    assert_eq!(json["algo"], "taco_qmix");

    let out = taco(&["probe-rec", run_s, "--episodes", "10"], root.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let probe = std::fs::read_to_string(run.join("probe.csv")).unwrap();
    assert_eq!(probe.lines().count(), 4);

    let out = taco(&["export-emb", run_s, "--episodes", "3"], root.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run.join("embeddings.csv").is_file());
}

#[test]
fn bad_configuration_exits_2_and_writes_nothing() {
    let root = tempfile::tempdir().unwrap();
    for args in [
        vec!["train", "--algo", "qmax"],
        vec!["train", "--seed", "abc"],
        vec!["train", "--set", "env.relay.width=4"],
        vec!["train", "--set", "no.such.key=1"],
        vec!["train", "--set", "lr=-1"],
    ] {
        let out = taco(&args, root.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(std::fs::read_dir(root.path()).unwrap().count(), 0);
}

#[test]
fn missing_run_is_an_error() {
    let root = tempfile::tempdir().unwrap();
    let missing = root.path().join("nope");
    for cmd in ["eval", "probe-rec", "export-emb"] {
        let out = taco(&[cmd, missing.to_str().unwrap()], root.path());
        assert!(!out.status.success(), "{cmd}");
    }
}

#[test]
fn export_needs_a_taco_run() {
    let root = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "--algo", "qmix"];
    args.extend(TINY);
    assert!(taco(&args, root.path()).status.success());
    let run = root.path().join("qmix_relay_s0");
    let out = taco(&["export-emb", run.to_str().unwrap()], root.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(!run.join("embeddings.csv").exists());
}

#[test]
fn sweep_writes_summary() {
    let root = tempfile::tempdir().unwrap();
    let spec = root.path().join("tiny.sweep");
    std::fs::write(
        &spec,
        "t_max=100\neval_interval=100\neval_episodes=2\nbatch_size=2\nsweep.seeds=0,1\nsweep.axis.algo=vdn,qmix\n",
    )
    .unwrap();
    let out = taco(&["sweep", spec.to_str().unwrap()], root.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = root.path().join("sweep_tiny");
    assert_eq!(stdout(&out), dir.join("sweep.csv").display().to_string());
    let runs = std::fs::read_to_string(dir.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 5);
}
