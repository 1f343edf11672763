use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_azclip");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Runs a failing command and returns (exit code, parsed stderr line).
fn fails(args: &[&str]) -> (i32, Value) {
    let out = run(args);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "stderr: {stderr}");
    (
        out.status.code().unwrap(),
        serde_json::from_str(stderr.trim()).unwrap(),
    )
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        Workspace { _dir: dir, root }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn p(&self, rel: &str) -> String {
        s(&self.path(rel)).to_string()
    }
}

fn synth_and_train(ws: &Workspace, synth: &[&str], train: &[&str]) {
    let data = ws.p("data");
    let mut a = vec!["synth", "--out", &data];
    a.extend_from_slice(synth);
    ok(&a);
    let run_dir = ws.p("run");
    let mut a = vec!["train", "--data", &data, "--out", &run_dir];
    a.extend_from_slice(train);
    ok(&a);
    ok(&[
        "index",
        "--checkpoint",
        &ws.p("run/model.azck"),
        "--images",
        &ws.p("data/images.azeb"),
        "--out",
        &ws.p("run/index.azix"),
    ]);
}

fn eval(ws: &Workspace, split: &str, out: &str) -> Value {
    ok(&[
        "eval",
        "--index",
        &ws.p("run/index.azix"),
        "--checkpoint",
        &ws.p("run/model.azck"),
        "--texts",
        &ws.p("data/texts.azeb"),
        "--judgments",
        &ws.p(&format!("data/judgments-{split}.jsonl")),
        "--out",
        &ws.p(out),
    ]);
    serde_json::from_str(&fs::read_to_string(ws.path(out)).unwrap()).unwrap()
}

#[test]
fn help_defaults_match_config_defaults() {
    let defaults: Value = serde_json::from_str(&ok(&["print-config"])).unwrap();
    let lookup = |key: &str| -> Option<Value> {
        if let Some(v) = defaults.get(key) {
            return Some(v.clone());
        }
        defaults
            .as_object()?
            .values()
            .find_map(|section| section.get(key).cloned())
    };
    let mut checked = 0;
    for cmd in ["synth", "ingest", "train", "query", "eval", "print-config"] {
        let help = ok(&[cmd, "--help"]);
        // one entry per flag, continuation lines folded in
        let mut entries: Vec<String> = Vec::new();
        for line in help.lines() {
            let t = line.trim_start();
            if t.starts_with("--") || (t.starts_with('-') && t.contains(", --")) {
                entries.push(t.to_string());
            } else if let Some(last) = entries.last_mut() {
                last.push(' ');
                last.push_str(t);
            }
        }
        for entry in entries {
            let flag = entry
                .split_whitespace()
                .find(|w| w.starts_with("--"))
                .unwrap()
                .trim_start_matches("--")
                .trim_end_matches(',');
            let Some(expected) = lookup(&flag.replace('-', "_")).filter(|v| !v.is_object()) else {
                continue;
            };
            let shown = entry
                .split("[default: ")
                .nth(1)
                .and_then(|rest| rest.split(']').next())
                .unwrap_or_else(|| panic!("{cmd} --{flag} does not state its default"));
            let agrees = match &expected {
                Value::Null => shown == "none",
                Value::String(v) => shown == v,
                Value::Bool(b) => shown == b.to_string(),
                Value::Number(n) => shown.parse::<f64>().ok() == n.as_f64(),
                other => panic!("unexpected default {other}"),
            };
            assert!(
                agrees,
                "{cmd} --{flag}: help says {shown}, config default is {expected}"
            );
            checked += 1;
        }
    }
    assert!(checked >= 30, "only {checked} flags checked");
}

#[test]
fn help_and_version_exit_zero() {
    for args in [&["--help"][..], &["--version"], &["train", "--help"]] {
        let out = run(args);
        assert_eq!(out.status.code(), Some(0));
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn query_clamps_k_to_index_size() {
    let ws = Workspace::new();
    synth_and_train(
        &ws,
        &[
            "--n-images",
            "2",
            "--captions-per-image",
            "1",
            "--val-fraction",
            "0",
            "--test-fraction",
            "0",
        ],
        &["--epochs", "1", "--batch-size", "2"],
    );
    let out: Value = serde_json::from_str(&ok(&[
        "query",
        "--index",
        &ws.p("run/index.azix"),
        "--checkpoint",
        &ws.p("run/model.azck"),
        "--texts",
        &ws.p("data/texts.azeb"),
        "--row",
        "0",
        "--k",
        "3",
    ]))
    .unwrap();
    assert_eq!(out["k"], 3);
    assert_eq!(out["hits"].as_array().unwrap().len(), 2);
    assert_eq!(out["query"], "txt000000");

    let vector = format!("[{}]", vec!["0.25"; 48].join(","));
    let out: Value = serde_json::from_str(&ok(&[
        "query",
        "--index",
        &ws.p("run/index.azix"),
        "--checkpoint",
        &ws.p("run/model.azck"),
        "--vector",
        &vector,
    ]))
    .unwrap();
    assert_eq!(out["hits"].as_array().unwrap().len(), 2);
}

#[test]
fn zero_learning_rate_returns_initial_parameters() {
    let ws = Workspace::new();
    synth_and_train(
        &ws,
        &["--n-images", "40", "--seed", "5"],
        &[
            "--epochs",
            "3",
            "--batch-size",
            "16",
            "--lr-max",
            "0",
            "--seed",
            "5",
        ],
    );
    let trained = azclip::load_checkpoint(ws.path("run/model.azck")).unwrap();
    let init = azclip::init_model(64, 48, 32, 5).unwrap();
    assert_eq!(trained.param_blocks(), init.param_blocks());
    let report: Value =
        serde_json::from_str(&fs::read_to_string(ws.path("run/train_report.json")).unwrap())
            .unwrap();
    let losses: Vec<f64> = report["epochs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["train_loss"].as_f64().unwrap())
        .collect();
    assert_eq!(losses.len(), 3);
    assert!(losses.windows(2).all(|w| w[0] == w[1]), "{losses:?}");
    assert_eq!(report["config"]["train"]["lr_max"], 0.0);
}

#[test]
fn desk_scale_pipeline_learns() {
    let ws = Workspace::new();
    synth_and_train(&ws, &[], &[]);
    let train = eval(&ws, "train", "run/eval-train.json");
    let test = eval(&ws, "test", "run/eval-test.json");
    let top1 = train["metrics"]["top1"].as_f64().unwrap();
    assert!(top1 >= 0.9, "train top1 {top1}");
    assert!(test["metrics"]["top1"].as_f64().unwrap() >= 0.5);
    assert_eq!(train["config"]["train"]["epochs"], 30);
    let log = fs::read_to_string(ws.path("run/train_log.jsonl")).unwrap();
    assert!(log
        .lines()
        .all(|l| serde_json::from_str::<Value>(l).is_ok()));
}

#[test]
fn reruns_are_byte_identical() {
    let a = Workspace::new();
    let b = Workspace::new();
    for ws in [&a, &b] {
        synth_and_train(
            ws,
            &["--n-images", "40", "--seed", "9"],
            &["--epochs", "4", "--batch-size", "16", "--seed", "9"],
        );
        eval(ws, "test", "run/eval.json");
    }
    for f in [
        "data/images.azeb",
        "data/texts.azeb",
        "data/manifest.jsonl",
        "data/judgments-test.jsonl",
        "data/config.json",
        "run/model.azck",
        "run/index.azix",
        "run/train_log.jsonl",
        "run/eval.json",
    ] {
        assert_eq!(
            fs::read(a.path(f)).unwrap(),
            fs::read(b.path(f)).unwrap(),
            "{f} differs"
        );
    }
    let strip = |ws: &Workspace| {
        let mut v: Value =
            serde_json::from_str(&fs::read_to_string(ws.path("run/train_report.json")).unwrap())
                .unwrap();
        v.as_object_mut().unwrap().remove("header");
        v
    };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn flags_override_config_file() {
    let ws = Workspace::new();
    fs::write(
        ws.path("cfg.json"),
        r#"{"seed": 4, "train": {"epochs": 7, "batch_size": 8}, "loss": {"margin": 0.3}}"#,
    )
    .unwrap();
    let cfg: Value = serde_json::from_str(&ok(&[
        "print-config",
        "--config",
        &ws.p("cfg.json"),
        "--epochs",
        "2",
    ]))
    .unwrap();
    assert_eq!(cfg["seed"], 4);
    assert_eq!(cfg["train"]["epochs"], 2);
    assert_eq!(cfg["train"]["batch_size"], 8);
    assert_eq!(cfg["loss"]["margin"], 0.3);
}

#[test]
fn exit_codes() {
    let ws = Workspace::new();
    fs::write(ws.path("bad.json"), r#"{"train": {"epoch": 3}}"#).unwrap();
    let (code, err) = fails(&["print-config", "--config", &ws.p("bad.json")]);
    assert_eq!(code, 1);
    assert_eq!(err["exit_code"], 1);

    assert_eq!(fails(&["train"]).0, 1);
    assert_eq!(
        fails(&["train", "--data", &ws.p("missing"), "--out", &ws.p("o")]).0,
        2
    );

    synth_and_train(
        &ws,
        &["--n-images", "20"],
        &["--epochs", "1", "--batch-size", "8"],
    );
    assert_eq!(
        fails(&[
            "train",
            "--data",
            &ws.p("data"),
            "--out",
            &ws.p("x"),
            "--batch-size",
            "1"
        ])
        .0,
        1
    );

    fs::write(ws.path("garbage.azix"), b"NOPE0000000000000000000000000000").unwrap();
    let (code, err) = fails(&[
        "query",
        "--index",
        &ws.p("garbage.azix"),
        "--checkpoint",
        &ws.p("run/model.azck"),
        "--vector",
        "[1]",
    ]);
    assert_eq!((code, err["error"].as_str().unwrap()), (2, "bad_magic"));

    ok(&[
        "train",
        "--data",
        &ws.p("data"),
        "--out",
        &ws.p("other"),
        "--epochs",
        "1",
        "--batch-size",
        "8",
        "--seed",
        "1",
    ]);
    let (code, err) = fails(&[
        "query",
        "--index",
        &ws.p("run/index.azix"),
        "--checkpoint",
        &ws.p("other/model.azck"),
        "--texts",
        &ws.p("data/texts.azeb"),
        "--text-id",
        "txt000003",
    ]);
    assert_eq!(
        (code, err["error"].as_str().unwrap()),
        (4, "fingerprint_mismatch")
    );

    let (code, err) = fails(&[
        "train",
        "--data",
        &ws.p("data"),
        "--out",
        &ws.p("diverged"),
        "--batch-size",
        "8",
        "--lr-max",
        "1e308",
        "--warmup-steps",
        "0",
    ]);
    assert_eq!((code, err["error"].as_str().unwrap()), (3, "divergence"));
}

#[test]
fn ingest_enforces_caption_count() {
    let ws = Workspace::new();
    ok(&["synth", "--out", &ws.p("data"), "--n-images", "10"]);
    let manifest = ws.p("data/manifest.jsonl");
    let ingest = |manifest: &str, texts: &str, extra: &[&str]| {
        let images = ws.p("data/images.azeb");
        let out = ws.p("ingested");
        let mut a = vec![
            "ingest",
            "--manifest",
            manifest,
            "--images",
            &images,
            "--texts",
            texts,
            "--out",
            &out,
        ];
        a.extend_from_slice(extra);
        run(&a)
    };
    let out = ingest(&manifest, &ws.p("data/texts.azeb"), &[]);
    assert!(out.status.success());
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(ws.path("ingested/dataset.json")).unwrap())
            .unwrap();
    assert_eq!(summary["captions"], 50);
    assert!(ws.path("ingested/judgments-val.jsonl").exists());

    // drop the last caption line and its text row: one image now has 4 captions
    let text = fs::read_to_string(&manifest).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    fs::write(ws.path("ragged.jsonl"), lines[..lines.len() - 1].join("\n")).unwrap();
    let texts = azclip::data::load_embeddings(ws.path("data/texts.azeb")).unwrap();
    let keep: Vec<usize> = (0..texts.len() - 1).collect();
    azclip::data::save_embeddings(&texts.subset(&keep).unwrap(), ws.path("ragged.azeb")).unwrap();

    let out = ingest(s(&ws.path("ragged.jsonl")), s(&ws.path("ragged.azeb")), &[]);
    assert_eq!(out.status.code(), Some(2));
    let out = ingest(
        s(&ws.path("ragged.jsonl")),
        s(&ws.path("ragged.azeb")),
        &["--allow-ragged"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
