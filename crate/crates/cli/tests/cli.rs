use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use volaug_core::{pseudo_label, vvol, ClipVolume, FrameData};

fn volaug(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_volaug"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write_clip(dir: &Path, id: &str, frames: usize, fill: u8) {
    let data = (0..frames * 4 * 8 * 3).map(|i| fill.wrapping_add(i as u8)).collect();
    let clip = ClipVolume::new(id, frames, 4, 8, 3, FrameData::U8(data)).unwrap();
    vvol::write_file(dir.join(format!("{id}.vvol")), &clip).unwrap();
    vvol::write_labels(
        dir.join(format!("{id}.labels.json")),
        &pseudo_label(frames, fill as usize % 3, 3).unwrap(),
    )
    .unwrap();
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn mixup_mask_json() {
    let v = stdout_json(&volaug(&["mask", "mixup", "--n1", "8", "--n2", "6", "--r", "4"]));
    assert_eq!(v["values"], json!([1.0, 1.0, 1.0, 1.0, 1.0, 0.75, 0.5, 0.25, 0.0, 0.0]));
    assert_eq!(v["scenario"], json!(1));
    let v = stdout_json(&volaug(&["mask", "mixup", "--n1", "8", "--n2", "4", "--r", "2"]));
    assert_eq!(v["values"], json!([1.0, 1.0, 1.0, 0.5, 0.0, 0.5, 1.0, 1.0]));
    assert_eq!(v["scenario"], json!(2));
    let v = stdout_json(&volaug(&[
        "mask",
        "mixup",
        "--n1",
        "8",
        "--n2",
        "6",
        "--r",
        "4",
        "--out-res",
        "5",
    ]));
    assert_eq!(v["values"], json!([1.0, 1.0, 0.875, 0.3125, 0.0]));
}

#[test]
fn cutmix_mask_json() {
    let v = stdout_json(&volaug(&["mask", "cutmix", "--w", "8", "--wt", "4", "--delta", "1"]));
    assert_eq!(v["row"], json!([1.0, 1.0, 1.0, 1.0, 0.5, 0.0, 0.0, 0.0]));
    assert_eq!(v["area"], json!(0.5625));
}

#[test]
fn bad_mask_parameters_exit_1() {
    let out = volaug(&["mask", "mixup", "--n1", "4", "--n2", "4", "--r", "4"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn inspect_prints_header() {
    let tmp = tempfile::tempdir().unwrap();
    write_clip(tmp.path(), "c", 5, 0);
    let v = stdout_json(&volaug(&["inspect", path(&tmp.path().join("c.vvol"))]));
    assert_eq!(v["frames"], json!(5));
    assert_eq!(v["height"], json!(4));
    assert_eq!(v["width"], json!(8));
    assert_eq!(v["channels"], json!(3));
}

#[test]
fn single_augmentation_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write_clip(d, "a", 6, 1);
    write_clip(d, "b", 6, 2);
    let out_dir = d.join("out");
    let pair = |cmd: &str| {
        vec![
            cmd.to_string(),
            "--a".into(),
            path(&d.join("a.vvol")).into(),
            "--b".into(),
            path(&d.join("b.vvol")).into(),
            "--labels-a".into(),
            path(&d.join("a.labels.json")).into(),
            "--labels-b".into(),
            path(&d.join("b.labels.json")).into(),
            "--seed".into(),
            "9".into(),
            "--out-dir".into(),
            path(&out_dir).into(),
        ]
    };
    let run = |args: Vec<String>| {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = volaug(&refs);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap().trim().to_string()
    };

    let frozen = run(vec![
        "freeze".into(),
        "--in".into(),
        path(&d.join("a.vvol")).into(),
        "--labels".into(),
        path(&d.join("a.labels.json")).into(),
        "--seed".into(),
        "9".into(),
        "--out-dir".into(),
        path(&out_dir).into(),
    ]);
    assert!(frozen.ends_with("a__freeze__0000000000000009.vvol"), "{frozen}");

    let mixed = run(pair("mixup"));
    assert!(mixed.ends_with("a__mixup__0000000000000009.vvol"), "{mixed}");
    let mut view = pair("cutmix");
    view.extend(["--mode".into(), "view".into()]);
    let cut = run(view);
    assert!(cut.ends_with("a__cutmix-view__0000000000000009.vvol"), "{cut}");

    let record: Value =
        serde_json::from_slice(&fs::read(out_dir.join("a__mixup__0000000000000009.record.json")).unwrap()).unwrap();
    assert_eq!(record["kind"], json!("mixup"));
    assert_eq!(record["sources"], json!(["a", "b"]));
    assert_eq!(record["seed"], json!(9));

    // same seed, same bytes
    let first = fs::read(&mixed).unwrap();
    run(pair("mixup"));
    assert_eq!(fs::read(&mixed).unwrap(), first);
}

fn write_manifest(dir: &Path, ids: &[&str]) -> String {
    let text: String = ids
        .iter()
        .enumerate()
        .map(|(i, id)| format!("{{\"id\":\"{id}\",\"class\":{}}}\n", i % 3))
        .collect();
    let p = dir.join("manifest.jsonl");
    fs::write(&p, text).unwrap();
    path(&p).to_string()
}

#[test]
fn pipeline_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    for (i, id) in ["p0", "p1", "p2", "p3"].iter().enumerate() {
        write_clip(d, id, 10, i as u8);
    }
    let manifest = write_manifest(d, &["p0", "p1", "p2", "p3"]);
    let common = ["--window", "4", "--stride", "2", "--num-classes", "3", "--seed", "5"];

    let out1 = d.join("out1");
    let mut args = vec!["pipeline", "--manifest", &manifest, "--out", path(&out1)];
    args.extend(common);
    let out = volaug(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let log: Value = serde_json::from_slice(&fs::read(out1.join("run_log.json")).unwrap()).unwrap();
    assert_eq!(log["num_samples"], json!(4));
    assert_eq!(log["seed"], json!(5));

    let out2 = d.join("out2");
    let mut args = vec![
        "pipeline",
        "--manifest",
        &manifest,
        "--out",
        path(&out2),
        "--workers",
        "4",
    ];
    args.extend(common);
    assert_eq!(volaug(&args).status.code(), Some(0));
    let log2: Value = serde_json::from_slice(&fs::read(out2.join("run_log.json")).unwrap()).unwrap();
    assert_eq!(log["samples"], log2["samples"]);
    assert_eq!(log["config_hash"], log2["config_hash"]);

    fs::write(d.join("p2.vvol"), b"not a volume").unwrap();
    let out3 = d.join("out3");
    let mut args = vec!["pipeline", "--manifest", &manifest, "--out", path(&out3)];
    args.extend(common);
    assert_eq!(volaug(&args).status.code(), Some(2));

    let cfg = d.join("cfg.json");
    fs::write(&cfg, r#"{"seed": 1, "mode": "view", "window": 4, "stride": 2}"#).unwrap();
    let out = volaug(&[
        "pipeline",
        "--manifest",
        &manifest,
        "--out",
        path(&d.join("out4")),
        "--config",
        path(&cfg),
    ]);
    assert_eq!(out.status.code(), Some(1));

    fs::write(&cfg, r#"{"seed": 1, "unknown": true}"#).unwrap();
    let out = volaug(&[
        "pipeline",
        "--manifest",
        &manifest,
        "--out",
        path(&d.join("out5")),
        "--config",
        path(&cfg),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ensemble_averages_tracks() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("a.json"), r#"{"scores": [[0.2, 0.8], [0.0, 1.0]]}"#).unwrap();
    fs::write(d.join("b.json"), r#"{"scores": [[0.6, 0.4], [1.0, 0.0]]}"#).unwrap();
    let out = volaug(&[
        "ensemble",
        "--in",
        path(&d.join("a.json")),
        path(&d.join("b.json")),
        "--out",
        path(&d.join("mean.json")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&fs::read(d.join("mean.json")).unwrap()).unwrap();
    assert_eq!(v["scores"], json!([[0.4, 0.6000000000000001], [0.5, 0.5]]));
}

#[test]
fn eval_reports_map() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let (preds, truth) = (d.join("preds"), d.join("truth"));
    fs::create_dir_all(&preds).unwrap();
    fs::create_dir_all(&truth).unwrap();
    let rows: Vec<[f64; 2]> = (0..30)
        .map(|t| {
            if t < 10 {
                [1.0, 0.0]
            } else if t < 20 {
                [1.0, 1.0]
            } else {
                [0.0, 1.0]
            }
        })
        .collect();
    fs::write(
        truth.join("v1.json"),
        json!({"num_classes": 2, "weights": rows}).to_string(),
    )
    .unwrap();
    fs::write(preds.join("v1.json"), json!({"scores": rows}).to_string()).unwrap();

    let report = d.join("report.json");
    let out = volaug(&[
        "eval",
        "--preds",
        path(&preds),
        "--truth",
        path(&truth),
        "--report",
        path(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(v["map"], json!(100.0));
    assert_eq!(v["split_maps"]["multi_action"], json!(100.0));

    let out = volaug(&[
        "eval",
        "--preds",
        path(&preds),
        "--truth",
        path(&truth),
        "--protocol",
        "charades25",
        "--report",
        path(&report),
    ]);
    assert_eq!(out.status.code(), Some(1), "weights are required");

    fs::write(d.join("w.json"), "[1.0, 2.0]").unwrap();
    let out = volaug(&[
        "eval",
        "--preds",
        path(&preds),
        "--truth",
        path(&truth),
        "--protocol",
        "charades25",
        "--weights",
        path(&d.join("w.json")),
        "--report",
        path(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    fs::remove_file(preds.join("v1.json")).unwrap();
    let out = volaug(&[
        "eval",
        "--preds",
        path(&preds),
        "--truth",
        path(&truth),
        "--report",
        path(&report),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("v1"));
}
