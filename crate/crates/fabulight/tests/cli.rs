use std::path::Path;
use std::process::{Command, Output};

fn fabulight(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fabulight")).args(args).output().expect("binary runs")
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
fn analyze_reports_counts() {
    let o = fabulight(&["analyze", "--mode", "lightasd"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("1,021,378"), "{}", stdout(&o));

    let o = fabulight(&["analyze", "--mode", "fabulight", "--body", "whole"]);
    let out = stdout(&o);
    assert!(out.contains("1,306,880"), "{out}");
    assert!(out.contains("vs lightasd"), "{out}");

    let o = fabulight(&["analyze", "--body", "upper", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["total_params"], 1_302_812);
    assert_eq!(v["config"], "fabulight-upper");
}

#[test]
fn exit_codes() {
    let o = fabulight(&["analyze", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    let o = fabulight(&["eval", "--scores", "/definitely/not/here.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/definitely/not/here.csv"), "{}", stderr(&o));
    let o = fabulight(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn eval_of_perfect_scores() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let mut text = String::from("video_id,entity_id,timestamp,probability,label,category\n");
    for i in 0..20 {
        let label = i % 3 == 0;
        let prob = if label { 0.9 } else { 0.1 };
        text.push_str(&format!("v,e,{},{prob},{},{}\n", f64::from(i) * 0.04, u8::from(label), if i < 10 { "OC" } else { "SS" }));
    }
    std::fs::write(&path, text).unwrap();
    let o = fabulight(&["eval", "--scores", p(&path), "--by-category"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("mAP 1.0000"), "{out}");
    assert!(out.contains("OC") && out.contains("SS"), "{out}");
}

#[test]
fn inspect_graph_prints_partitions() {
    let o = fabulight(&["inspect-graph", "--body", "whole"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("17 joints"), "{out}");
    assert!(out.contains("left_wrist"), "{out}");
}

#[test]
fn synth_train_infer_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    let o = fabulight(&["synth", "--out-dir", p(&data), "--entities", "3", "--seed", "4", "--min-frames", "8", "--max-frames", "12"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = data.join("manifest.csv");
    let o = fabulight(&[
        "train",
        "--manifest",
        p(&manifest),
        "--media-root",
        p(&data),
        "--body",
        "upper",
        "--seed",
        "1",
        "--out-dir",
        p(&run),
        "--epochs",
        "2",
        "--face-size",
        "32",
        "--val-manifest",
        p(&manifest),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["epoch_01.fblw", "epoch_02.fblw", "final.fblw", "best.fblw", "metrics.jsonl"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let log = std::fs::read_to_string(run.join("metrics.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1]["epoch"], 2);
    assert!(lines[0]["heads"]["body"].is_number());
    assert!(lines[0]["val_map"].is_number());

    let scores = dir.path().join("scores.csv");
    let o = fabulight(&[
        "infer",
        "--weights",
        p(&run.join("final.fblw")),
        "--manifest",
        p(&manifest),
        "--media-root",
        p(&data),
        "--out",
        p(&scores),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = std::fs::read_to_string(&scores).unwrap();
    let manifest_rows = std::fs::read_to_string(&manifest).unwrap();
    assert_eq!(rows.lines().count(), manifest_rows.lines().count());

    let o = fabulight(&["eval", "--scores", p(&scores)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("mAP "), "{}", stdout(&o));

    // anything that is not a weight file is refused up front
    let o = fabulight(&["infer", "--weights", p(&manifest), "--manifest", p(&manifest), "--media-root", p(&data), "--out", p(&scores)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("magic"), "{}", stderr(&o));
}
