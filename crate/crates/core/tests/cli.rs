use std::fs;
use std::path::Path;
use std::process::Command;

use approxviol::harness::{aggregate_dir, Report};

fn run(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_approxviol")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn read(p: impl AsRef<Path>) -> String {
    fs::read_to_string(p).unwrap()
}

#[test]
fn train_eval_verify_compare_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("train");
    let d = dir.to_str().unwrap();
    run(&[
        "train", "--task", "Fixed_obs_NT", "--penalty", "violation", "--seeds", "0..1", "--steps", "600",
        "--samples", "50", "--log-every", "200", "--out", d, "--plots",
    ]);
    for f in ["manifest.json", "config.toml", "report.json", "report.csv", "cost_1k.svg"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    for s in ["seed_0", "seed_1"] {
        for f in ["metrics.csv", "actor.json", "value.json", "properties.json", "summary.json", "violation_1k.svg"] {
            assert!(dir.join(s).join(f).exists(), "{s}/{f}");
        }
    }
    let manifest: serde_json::Value = serde_json::from_str(&read(dir.join("manifest.json"))).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["args"]["seeds"], serde_json::json!([0, 1]));

    // The aggregate is a pure function of the per-seed CSVs.
    let report: Report = serde_json::from_str(&read(dir.join("report.json"))).unwrap();
    let again = aggregate_dir(&dir, &report.label, &[0, 1]).unwrap();
    assert_eq!(report, again);

    // Same config reproduces the same metrics.
    let dir2 = tmp.path().join("train2");
    run(&["train", "--config", dir.join("config.toml").to_str().unwrap(), "--out", dir2.to_str().unwrap()]);
    assert_eq!(read(dir.join("seed_1/metrics.csv")), read(dir2.join("seed_1/metrics.csv")));

    let actor = dir.join("seed_0/actor.json");
    let a = actor.to_str().unwrap();
    let props = dir.join("seed_0/properties.json");

    let ev = tmp.path().join("eval");
    run(&["eval", "--checkpoint", a, "--episodes", "2", "--samples", "20", "--out", ev.to_str().unwrap()]);
    let table = read(ev.join("eval.csv"));
    assert_eq!(table.lines().count(), 2);
    let ev2 = tmp.path().join("eval2");
    run(&["eval", "--checkpoint", a, "--episodes", "2", "--samples", "20", "--out", ev2.to_str().unwrap()]);
    assert_eq!(table, read(ev2.join("eval.csv")));

    let ve = tmp.path().join("verify");
    run(&["verify", "--checkpoint", a, "--gap", "0.5", "--max-boxes", "2000", "--out", ve.to_str().unwrap()]);
    let rows = read(ve.join("verify.csv"));
    assert_eq!(rows.lines().count(), 4, "{rows}");

    let co = tmp.path().join("compare");
    run(&[
        "compare", "--checkpoint", a, "--properties", props.to_str().unwrap(), "--m", "10,100", "--gap", "0.5",
        "--max-boxes", "500", "--out", co.to_str().unwrap(),
    ]);
    assert!(read(co.join("compare.csv")).lines().count() >= 4);
    assert!(co.join("compare_summary.csv").exists());
}

#[test]
fn env_demo_writes_trace() {
    let out = run(&["env-demo", "--task", "Dynamic_obs_T", "--policy", "forward", "--steps", "30", "--seed", "4"]);
    let lines: Vec<&str> = out.lines().collect();
    assert!(lines.len() >= 2 && lines.len() <= 31);
    assert!(lines[0].contains("reward"));
}

#[test]
fn bad_arguments_fail_cleanly() {
    for args in [
        vec!["train", "--task", "Nowhere_T"],
        vec!["train", "--task", "Fixed_obs_T", "--agent", "lppo", "--penalty", "cost", "--steps", "10"],
        vec!["verify", "--checkpoint", "/nonexistent/actor.json"],
    ] {
        let out = Command::new(env!("CARGO_BIN_EXE_approxviol")).args(&args).output().unwrap();
        assert!(!out.status.success(), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}
