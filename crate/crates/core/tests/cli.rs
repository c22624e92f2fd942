use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn apjfnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apjfnn"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = apjfnn(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path) -> std::path::PathBuf {
    let out = dir.join("synth");
    ok(&[
        "synth",
        "--seed",
        "3",
        "--out",
        p(&out),
        "--postings",
        "8",
        "--apps-per-posting",
        "12",
    ]);
    out.join("corpus.jsonl")
}

const SMALL: [&str; 12] = [
    "--embed-dim",
    "6",
    "--hidden",
    "4",
    "--word-attention-dim",
    "4",
    "--match-attention-dim",
    "6",
    "--fit-dim",
    "4",
    "--epochs",
    "2",
];

fn train(corpus: &Path, out: &Path, model: &str) {
    let mut args = vec![
        "train",
        "--model",
        model,
        "--corpus",
        p(corpus),
        "--seed",
        "7",
        "--out",
        p(out),
    ];
    args.extend(SMALL);
    ok(&args);
}

#[test]
fn synth_writes_corpus_truth_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path());
    let lines = fs::read_to_string(&corpus).unwrap().lines().count();
    assert_eq!(lines, 96);
    let truth: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("synth/truth.json")).unwrap())
            .unwrap();
    assert_eq!(truth["applications"].as_array().unwrap().len(), 96);
    let m: Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("synth/run-manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(m["command"], "synth");
    assert_eq!(m["seed"], 3);
    assert!(m["args"]
        .as_array()
        .unwrap()
        .iter()
        .any(|a| a == "--postings"));
}

#[test]
fn missing_corpus_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let missing = dir.path().join("nope.jsonl");
    let r = apjfnn(&[
        "train",
        "--model",
        "apjfnn",
        "--corpus",
        p(&missing),
        "--seed",
        "1",
        "--out",
        p(&out),
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn randomized_commands_require_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let r = apjfnn(&["synth", "--out", p(dir.path())]);
    assert_eq!(r.status.code(), Some(2));
    let r = apjfnn(&["bias-inject", "--corpus", "x", "--out", p(dir.path())]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn train_eval_predict_explain_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path());
    let run = dir.path().join("run");
    train(&corpus, &run, "apjfnn");
    for f in [
        "checkpoint/manifest.txt",
        "checkpoint/params.bin",
        "checkpoint/vocab.txt",
        "history.jsonl",
        "summary.json",
        "run-manifest.json",
        "splits/test.jsonl",
    ] {
        assert!(run.join(f).exists(), "{f}");
    }
    assert_eq!(
        fs::read_to_string(run.join("history.jsonl"))
            .unwrap()
            .lines()
            .count(),
        2
    );

    let ckpt = run.join("checkpoint");
    let test = run.join("splits/test.jsonl");
    let ev = dir.path().join("eval");
    ok(&[
        "eval",
        "--checkpoint",
        p(&ckpt),
        "--corpus",
        p(&test),
        "--out",
        p(&ev),
    ]);
    let m: Value =
        serde_json::from_str(&fs::read_to_string(ev.join("metrics.json")).unwrap()).unwrap();
    for k in ["accuracy", "precision", "recall", "f1", "auc"] {
        assert!(m.get(k).is_some(), "{k}");
    }

    let one = dir.path().join("one.jsonl");
    let first = fs::read_to_string(&test)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    let mut rec: Value = serde_json::from_str(&first).unwrap();
    rec.as_object_mut().unwrap().remove("label");
    fs::write(&one, rec.to_string()).unwrap();
    let stdout = ok(&["predict", "--checkpoint", p(&ckpt), "--corpus", p(&one)]);
    let probs: Vec<f64> = stdout.lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(probs.len(), 1);
    assert!((0.0..=1.0).contains(&probs[0]));

    let report: Value = serde_json::from_str(&ok(&[
        "explain",
        "--checkpoint",
        p(&ckpt),
        "--corpus",
        p(&one),
    ]))
    .unwrap();
    assert!((report["y_hat"].as_f64().unwrap() - probs[0]).abs() < 1e-6);
    let sums = |v: &Value| {
        v.as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .sum::<f64>()
    };
    let trace = &report["trace"];
    assert!((sums(&trace["beta"]) - 1.0).abs() < 1e-6);
    assert!((sums(&trace["delta"]) - 1.0).abs() < 1e-6);
    for a in trace["alpha"].as_array().unwrap() {
        assert!((sums(a) - 1.0).abs() < 1e-6);
    }
    for per_exp in trace["gamma"].as_array().unwrap() {
        for g in per_exp.as_array().unwrap() {
            assert!((sums(g) - 1.0).abs() < 1e-6);
        }
    }
    let pretty = ok(&[
        "explain",
        "--checkpoint",
        p(&ckpt),
        "--corpus",
        p(&one),
        "--pretty",
    ]);
    assert!(pretty.contains("beta") && pretty.contains("delta") && pretty.contains('█'));
}

#[test]
fn single_requirement_explains_with_full_beta() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path());
    let run = dir.path().join("run");
    train(&corpus, &run, "apjfnn");
    let one = dir.path().join("one.jsonl");
    let vocab = fs::read_to_string(run.join("checkpoint/vocab.txt")).unwrap();
    let word = vocab.lines().nth(2).unwrap();
    fs::write(
        &one,
        format!(r#"{{"job_id":"j","resume_id":"r","requirements":["{word} {word}"],"experiences":["{word}"]}}"#),
    )
    .unwrap();
    let report: Value = serde_json::from_str(&ok(&[
        "explain",
        "--checkpoint",
        p(&run.join("checkpoint")),
        "--corpus",
        p(&one),
    ]))
    .unwrap();
    assert_eq!(report["trace"]["beta"], serde_json::json!([1.0]));
}

#[test]
fn explain_rejects_foreign_vocabulary_and_flat_models() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path());
    let run = dir.path().join("run");
    train(&corpus, &run, "apjfnn");
    let foreign = dir.path().join("foreign.jsonl");
    fs::write(
        &foreign,
        r#"{"job_id":"j","resume_id":"r","requirements":["zzz qqq"],"experiences":["xxx"]}"#,
    )
    .unwrap();
    let r = apjfnn(&[
        "explain",
        "--checkpoint",
        p(&run.join("checkpoint")),
        "--corpus",
        p(&foreign),
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("vocabulary mismatch"));

    let flat = dir.path().join("flat");
    train(&corpus, &flat, "bpjfnn");
    let r = apjfnn(&[
        "explain",
        "--checkpoint",
        p(&flat.join("checkpoint")),
        "--corpus",
        p(&corpus),
    ]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn bias_inject_flips_half_of_each_group() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("g.jsonl");
    let mut text = String::new();
    for i in 0..40 {
        let (side, label) = match i % 4 {
            0 => ("female", 1),
            1 => ("female", 0),
            2 => ("male", 1),
            _ => ("male", 0),
        };
        text.push_str(&format!(
            r#"{{"job_id":"j{i}","resume_id":"r{i}","requirements":["a b"],"experiences":["c"],"label":{label},"side":"{side}"}}"#
        ));
        text.push('\n');
    }
    fs::write(&corpus, text).unwrap();
    let out = dir.path().join("biased");
    let stdout = ok(&[
        "bias-inject",
        "--corpus",
        p(&corpus),
        "--rate",
        "0.5",
        "--seed",
        "2",
        "--out",
        p(&out),
    ]);
    assert!(stdout.contains("10 flips"), "{stdout}");
    let m: Value =
        serde_json::from_str(&fs::read_to_string(out.join("flips.json")).unwrap()).unwrap();
    let flips = m["flips"].as_array().unwrap();
    assert_eq!(
        flips
            .iter()
            .filter(|f| f["side"] == "female" && f["to"] == 0)
            .count(),
        5
    );
    assert_eq!(
        flips
            .iter()
            .filter(|f| f["side"] == "male" && f["to"] == 1)
            .count(),
        5
    );

    let plain = dir.path().join("plain.jsonl");
    fs::write(
        &plain,
        r#"{"job_id":"j","resume_id":"r","requirements":["a"],"experiences":["c"],"label":1}"#,
    )
    .unwrap();
    let r = apjfnn(&[
        "bias-inject",
        "--corpus",
        p(&plain),
        "--seed",
        "2",
        "--out",
        p(&dir.path().join("x")),
    ]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn preprocess_writes_disjoint_splits() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path());
    let out = dir.path().join("pre");
    ok(&[
        "preprocess",
        "--corpus",
        p(&corpus),
        "--split",
        "0.8,0.1,0.1",
        "--seed",
        "4",
        "--out",
        p(&out),
    ]);
    let read = |n: &str| {
        fs::read_to_string(out.join(n))
            .unwrap()
            .lines()
            .map(str::to_owned)
            .collect::<Vec<_>>()
    };
    let (tr, va, te) = (read("train.jsonl"), read("val.jsonl"), read("test.jsonl"));
    let total = tr.len() + va.len() + te.len();
    let mut all: Vec<_> = tr.into_iter().chain(va).chain(te).collect();
    all.sort();
    all.dedup();
    assert_eq!(all.len(), total);
    assert!(read("vocab.txt")[..2] == ["<pad>".to_string(), "<unk>".to_string()]);
}

#[test]
fn side_model_trains_on_presplit_files() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path());
    let pre = dir.path().join("pre");
    ok(&[
        "preprocess",
        "--corpus",
        p(&corpus),
        "--seed",
        "4",
        "--out",
        p(&pre),
    ]);
    let run = dir.path().join("run");
    let (tr, va) = (pre.join("train.jsonl"), pre.join("val.jsonl"));
    let mut args = vec![
        "train",
        "--model",
        "apjfnn-side",
        "--train",
        p(&tr),
        "--val",
        p(&va),
        "--seed",
        "7",
        "--out",
        p(&run),
    ];
    args.extend(SMALL);
    ok(&args);
    assert!(run.join("checkpoint/params.bin").exists());
    assert!(!run.join("splits").exists());
}
