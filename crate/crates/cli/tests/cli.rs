use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use skelfilter::io::read_stream;

fn skelfilter(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skelfilter"))
        .args(args)
        .current_dir(dir)
        .env_remove("SKELFILTER_PIPELINE_FILTER")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = skelfilter(args, dir);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn sim(dir: &Path, out: &str, seed: &str) {
    ok(
        &["sim", "--task", "t0", "--duration", "4", "--seed", seed, "--out", out],
        dir,
    );
}

#[test]
fn sim_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    sim(dir.path(), "a", "1");
    sim(dir.path(), "b", "1");
    sim(dir.path(), "c", "2");
    for name in ["truth.jsonl", "measurements.jsonl"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, fs::read(dir.path().join("b").join(name)).unwrap(), "{name}");
    }
    assert_ne!(
        fs::read(dir.path().join("a/measurements.jsonl")).unwrap(),
        fs::read(dir.path().join("c/measurements.jsonl")).unwrap()
    );
}

#[test]
fn run_none_passes_confident_keypoints_through() {
    let dir = tempfile::tempdir().unwrap();
    sim(dir.path(), "sim", "3");
    ok(
        &[
            "run",
            "--input",
            "sim/measurements.jsonl",
            "--filter",
            "none",
            "--out",
            "none",
        ],
        dir.path(),
    );
    let measured = read_stream(dir.path().join("sim/measurements.jsonl")).unwrap();
    let refined = read_stream(dir.path().join("none/refined.jsonl")).unwrap();
    assert_eq!(measured.len(), refined.len());
    let mut checked = 0;
    for (m, r) in measured.iter().zip(&refined) {
        assert_eq!(m.timestamp, r.timestamp);
        for s in &r.skeletons {
            for (joint, kp) in &s.keypoints {
                let Some(source) = m
                    .skeletons
                    .iter()
                    .find_map(|ms| ms.keypoints.get(joint).filter(|k| k.position == kp.position))
                else {
                    // synthesized joints have no measured counterpart
                    assert!(
                        matches!(joint, skelfilter::Joint::Root | skelfilter::Joint::Neck),
                        "{joint:?}"
                    );
                    continue;
                };
                if source.confidence >= 0.4 {
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 1000, "{checked}");
}

#[test]
fn full_chain_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let chain = |tag: &str| {
        sim(dir.path(), &format!("{tag}/sim"), "5");
        for f in ["none", "kf1", "kf2", "perm"] {
            ok(
                &[
                    "run",
                    "--input",
                    &format!("{tag}/sim/measurements.jsonl"),
                    "--filter",
                    f,
                    "--seed",
                    "9",
                    "--out",
                    &format!("{tag}/{f}"),
                ],
                dir.path(),
            );
        }
        let preds: Vec<String> = ["none", "perm"]
            .iter()
            .map(|f| format!("{tag}/{f}/wrist.jsonl"))
            .collect();
        let ees: Vec<String> = ["none", "perm"].iter().map(|f| format!("{tag}/{f}/ee.jsonl")).collect();
        let truth = format!("{tag}/sim/truth.jsonl");
        let mut args = vec!["eval", "--truth", &truth, "--pred"];
        args.extend(preds.iter().map(String::as_str));
        args.push("--ee");
        args.extend(ees.iter().map(String::as_str));
        let report = format!("{tag}/report.json");
        args.extend(["--report", &report]);
        ok(&args, dir.path()).stdout
    };
    let table_a = chain("a");
    let table_b = chain("b");
    assert_eq!(table_a, table_b);
    for file in [
        "perm/refined.jsonl",
        "perm/ee.jsonl",
        "kf2/target.jsonl",
        "report.json",
        "report.csv",
    ] {
        assert_eq!(
            fs::read(dir.path().join("a").join(file)).unwrap(),
            fs::read(dir.path().join("b").join(file)).unwrap(),
            "{file}"
        );
    }
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("a/report.json")).unwrap()).unwrap();
    let labels: Vec<&str> = report
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["label"].as_str().unwrap())
        .collect();
    assert_eq!(labels, ["none", "perm"]);
    assert!(report[0]["safety_std_mm"].is_number());
}

#[test]
fn config_file_and_env_override() {
    let dir = tempfile::tempdir().unwrap();
    sim(dir.path(), "sim", "4");
    fs::write(dir.path().join("cfg.toml"), "[pipeline]\nfilter = \"none\"\n").unwrap();
    ok(
        &[
            "run",
            "--input",
            "sim/measurements.jsonl",
            "--config",
            "cfg.toml",
            "--out",
            "file",
        ],
        dir.path(),
    );
    ok(
        &[
            "run",
            "--input",
            "sim/measurements.jsonl",
            "--filter",
            "none",
            "--out",
            "flag",
        ],
        dir.path(),
    );
    assert_eq!(
        fs::read(dir.path().join("file/refined.jsonl")).unwrap(),
        fs::read(dir.path().join("flag/refined.jsonl")).unwrap()
    );
    let out = Command::new(env!("CARGO_BIN_EXE_skelfilter"))
        .args(["run", "--input", "sim/measurements.jsonl", "--out", "env"])
        .env("SKELFILTER_PIPELINE_FOLLOWER_GAIN", "-1")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn errors_exit_nonzero_with_message() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bad.jsonl"),
        "{\"t\":0,\"skeletons\":[]}\n{\"t\":0,\"skeletons\":[]}\n",
    )
    .unwrap();
    for args in [
        vec!["run", "--input", "missing.jsonl", "--out", "o"],
        vec!["run", "--input", "bad.jsonl", "--out", "o"],
        vec!["sim", "--task", "t1", "--persons", "1", "--out", "o"],
        vec!["sim", "--task", "t9", "--out", "o"],
        vec!["run", "--input", "bad.jsonl", "--filter", "ukf", "--out", "o"],
    ] {
        let out = skelfilter(&args, dir.path());
        assert!(!out.status.success(), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    let out = skelfilter(&["run", "--input", "bad.jsonl", "--out", "o"], dir.path());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn eval_rejects_mismatched_end_effectors() {
    let dir = tempfile::tempdir().unwrap();
    sim(dir.path(), "sim", "6");
    ok(
        &["run", "--input", "sim/measurements.jsonl", "--out", "perm"],
        dir.path(),
    );
    let out = skelfilter(
        &[
            "eval",
            "--truth",
            "sim/truth.jsonl",
            "--pred",
            "perm/wrist.jsonl",
            "perm/wrist.jsonl",
            "--ee",
            "perm/ee.jsonl",
            "--report",
            "r.json",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
}
