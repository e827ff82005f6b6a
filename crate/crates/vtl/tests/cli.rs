use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn vtl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vtl")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = vtl(args);
    assert!(out.status.success(), "vtl {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    vtl(args).status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TINY_CONFIG: &str = r#"{"train": {"learning_rate": 1e-3, "warmup_steps": 5, "batch_size": 2,
    "curriculum": [{"resolution": 32, "epochs": 1}]},
  "model": {"d_model": 16, "heads": 2, "head_dim": 8, "ffn_dim": 32, "enc_layers": 1, "dec_layers": 1, "vis_dec_layers": 1}}"#;

#[test]
fn help_exits_zero_everywhere() {
    for sub in ["ingest", "synth", "build-tasks", "train", "eval", "generate", "reconstruct", "inspect"] {
        let out = vtl(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"), "{sub}");
    }
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&[]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["synth", "--count", "2", "--out", "x"]), 1, "missing --seed");
    assert_eq!(code(&["synth", "--count", "two", "--seed", "1", "--out", "x"]), 1);
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--count", "2", "--seed", "1", "--out", p(dir.path())]);
    let out = dir.path().join("e");
    assert_eq!(code(&["build-tasks", "--data", p(dir.path()), "--task", "nope", "--seed", "0", "--out", p(&out)]), 1);
}

#[test]
fn synth_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["synth", "--count", "16", "--seed", "7", "--out", p(&a)]);
    ok(&["synth", "--count", "16", "--seed", "7", "--out", p(&b)]);
    for f in ["documents.shard", "vocab.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert!(!a.join(".vtl.lock").exists());
}

fn worked_example_json() -> String {
    let words = [
        ("Ship", [100, 350, 108, 372]),
        ("Date", [110, 350, 118, 372]),
        ("to", [120, 350, 124, 372]),
        ("Retail:", [126, 350, 140, 372]),
        ("Week", [60, 370, 98, 382]),
        ("of", [100, 370, 118, 382]),
        ("March", [120, 370, 140, 382]),
        ("14,", [142, 370, 150, 382]),
        ("1994", [152, 370, 170, 382]),
    ];
    let words: Vec<Value> = words
        .iter()
        .map(|(t, b)| serde_json::json!({"text": t, "bbox": b.iter().map(|&v| v as f64 / 500.0).collect::<Vec<_>>()}))
        .collect();
    serde_json::json!({"id": "worked", "image": {"width": 32, "height": 32}, "words": words}).to_string()
}

#[test]
fn build_tasks_reproduces_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let ocr = dir.path().join("worked.json");
    std::fs::write(&ocr, worked_example_json()).unwrap();
    let corpus = dir.path().join("corpus");
    ok(&["ingest", "--input", p(&ocr), "--out", p(&corpus)]);
    let expected = [
        (
            "joint_text_layout",
            "Joint Text-Layout Reconstruction. <text_layout_0> to Retail: Week <text_layout_1> March 14, 1994",
            "<text_layout_0> Ship Date <100><350><118><372> <text_layout_1> of <100><370><118><382>",
        ),
        (
            "layout_modeling",
            "Layout Modeling. <layout_0> Ship Date </layout_0> to Retail: Week <layout_1> of </layout_1> March 14, 1994",
            "<layout_0> <100><350><118><372> <layout_1> <100><370><118><382>",
        ),
        (
            "visual_text_recognition",
            "Visual Text Recognition. <text_0> <100><350><118><372> </text_0> to Retail: Week <text_1> <100><370><118><382> </text_1> March 14, 1994",
            "<text_0> Ship Date <text_1> of",
        ),
    ];
    for (task, input, target) in expected {
        let out = dir.path().join(task);
        let stdout = ok(&[
            "build-tasks", "--json", "--print", "--data", p(&corpus), "--task", task, "--seed", "0", "--spans", "0..2,5..6",
            "--out", p(&out),
        ]);
        let record: Value = serde_json::from_str(stdout.lines().next().unwrap()).unwrap();
        assert_eq!(record["input"], input, "{task}");
        assert_eq!(record["target"], target, "{task}");
        let shown = ok(&["inspect", p(&out.join("examples.shard"))]);
        assert!(shown.contains(target), "{shown}");
    }
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    ok(&["synth", "--count", "2", "--seed", "1", "--height", "32", "--width", "32", "--out", p(&corpus)]);
    let shard = corpus.join("documents.shard");
    let bytes = std::fs::read(&shard).unwrap();
    std::fs::write(&shard, &bytes[..bytes.len() - 10]).unwrap();
    let out = dir.path().join("e");
    assert_eq!(code(&["build-tasks", "--data", p(&corpus), "--task", "masked_image", "--seed", "0", "--out", p(&out)]), 2);
    assert_eq!(code(&["inspect", p(&dir.path().join("missing"))]), 2);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"id": "x", "image": {"width": 8, "height": 8}, "words": [{"text": "a", "bbox": [0.5, 0, 0.1, 1]}]}"#)
        .unwrap();
    let out = vtl(&["ingest", "--input", p(&bad), "--out", p(&dir.path().join("i"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("word 0"));
}

#[test]
fn locked_output_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(".vtl.lock"), "1").unwrap();
    assert_eq!(code(&["synth", "--count", "1", "--seed", "1", "--out", p(dir.path())]), 2);
    assert!(!dir.path().join("documents.shard").exists());
}

#[test]
fn divergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    ok(&["synth", "--count", "2", "--seed", "1", "--height", "32", "--width", "32", "--out", p(&corpus)]);
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, TINY_CONFIG.replace("1e-3", "1e300").replace("\"warmup_steps\": 5", "\"warmup_steps\": 0")).unwrap();
    let run = dir.path().join("run");
    let out = vtl(&["train", "--config", p(&cfg), "--data", p(&corpus), "--seed", "1", "--max-steps", "20", "--out", p(&run)]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run.join("ckpt-initial.ckpt").exists());
    assert!(run.join("steplog.jsonl").exists());
}

#[test]
fn train_eval_generate_reconstruct() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    let tasks = dir.path().join("t");
    let run = dir.path().join("run");
    ok(&["synth", "--count", "3", "--seed", "2", "--height", "32", "--width", "32", "--out", p(&corpus)]);
    ok(&["build-tasks", "--data", p(&corpus), "--task", "layout_modeling,masked_image", "--seed", "2", "--out", p(&tasks)]);
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, TINY_CONFIG).unwrap();
    let summary: Value =
        serde_json::from_str(&ok(&["train", "--json", "--config", p(&cfg), "--data", p(&tasks), "--seed", "3", "--out", p(&run)]))
            .unwrap();
    assert_eq!(summary["steps"], 3);
    for f in ["ckpt-initial.ckpt", "ckpt-stage-0.ckpt", "final.ckpt", "steplog.jsonl", "vocab.json", "config.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let ckpt = run.join("final.ckpt");
    let reports: Vec<Value> = ok(&["eval", "--json", "--checkpoint", p(&ckpt), "--data", p(&tasks)])
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0]["metric"], "exact_match");
    assert_eq!(reports[1]["metric"], "masked_mse");
    let gen = ok(&["generate", "--json", "--checkpoint", p(&ckpt), "--data", p(&corpus), "--task", "layout_modeling", "--seed", "1", "--limit", "1"]);
    let g: Value = serde_json::from_str(gen.lines().next().unwrap()).unwrap();
    assert!(g["input"].as_str().unwrap().starts_with("Layout Modeling."));
    let rec = dir.path().join("rec");
    ok(&["reconstruct", "--checkpoint", p(&ckpt), "--data", p(&corpus), "--seed", "1", "--out", p(&rec), "--doc", "synth-00001"]);
    let pgm = std::fs::read(rec.join("synth-00001.recon.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n32 32\n255\n"));
    assert_eq!(pgm.len(), 13 + 32 * 32);
    let steps = ok(&["inspect", p(&run.join("steplog.jsonl"))]);
    assert!(steps.starts_with("step log: 3 steps"), "{steps}");
    assert_eq!(code(&["generate", "--checkpoint", p(&ckpt), "--data", p(&corpus), "--task", "masked_image", "--seed", "1"]), 1);
}
