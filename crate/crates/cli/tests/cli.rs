use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dualreport"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = run(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn error_line(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("an error line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{line}: {e}"))
}

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["--seed", "5", "synth", "--out", "a"], d);
    ok(&["--seed", "5", "synth", "--out", "b"], d);
    ok(&["--seed", "6", "synth", "--out", "c"], d);
    let reports = |name: &str| fs::read(d.join(name).join("reports.jsonl")).unwrap();
    assert_eq!(reports("a"), reports("b"));
    assert_ne!(reports("a"), reports("c"));
    let stats = fs::read_to_string(d.join("a/stats.txt")).unwrap();
    assert!(stats.contains("rank"));
}

#[test]
fn references_scored_against_themselves_are_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["--set", "synth.records=20", "synth", "--out", "corpus"], d);
    let table = ok(
        &[
            "evaluate",
            "--hypotheses",
            "corpus/reports.jsonl",
            "--references",
            "corpus",
            "--out",
            "eval",
        ],
        d,
    );
    assert!(table.contains("generated"));
    let metrics: serde_json::Value = serde_json::from_slice(&fs::read(d.join("eval/metrics.json")).unwrap()).unwrap();
    for key in ["bleu1", "bleu4", "rouge_l"] {
        let v = metrics[key].as_f64().unwrap_or_else(|| panic!("{key} in {metrics}"));
        assert!((v - 1.0).abs() < 1e-12, "{key} = {v}");
    }
}

#[test]
fn exit_codes_and_error_lines() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let out = run(&["synth", "--bogus"], d);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "usage");

    let out = run(&["train", "--corpus", "missing", "--out", "run"], d);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_line(&out)["exit"], 3);

    let out = run(&["--config", "nope.txt", "synth", "--out", "x"], d);
    assert_eq!(out.status.code(), Some(3));

    fs::write(d.join("bad.txt"), "model.hidden = lots\n").unwrap();
    let out = run(&["--config", "bad.txt", "synth", "--out", "x"], d);
    assert_eq!(out.status.code(), Some(4));
    let line = error_line(&out);
    assert_eq!(line["error"], "config");
    assert!(line["message"].as_str().unwrap().contains("model.hidden"));

    let out = run(&["--set", "data.split=0.5,0.5,0.5", "synth", "--out", "x"], d);
    assert_eq!(out.status.code(), Some(4));

    let out = run(&["gradcheck", "--coords", "2", "--tolerance", "0"], d);
    assert_eq!(out.status.code(), Some(6));

    assert!(run(&["--help"], d).status.success());
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let small = [
        "--set",
        "synth.records=40",
        "--set",
        "train.max_epochs=1",
        "--set",
        "data.split=0.6,0.2,0.2",
    ];
    let with = |rest: &[&'static str]| small.iter().copied().chain(rest.iter().copied()).collect::<Vec<_>>();
    ok(&with(&["synth", "--out", "corpus"]), d);
    ok(&with(&["train", "--corpus", "corpus", "--out", "run"]), d);
    for f in ["config.txt", "vocab.txt", "labels.txt", "split.json", "history.jsonl", "train_log.jsonl"] {
        assert!(d.join("run").join(f).is_file(), "{f}");
    }
    let mut ckpts: Vec<_> = fs::read_dir(d.join("run/checkpoints"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    ckpts.sort();
    assert_eq!(ckpts.len(), 2, "two evaluations per epoch");
    let ckpt = ckpts.last().unwrap().to_str().unwrap().to_string();

    ok(&["generate", "--run", "run", "--checkpoint", &ckpt, "--corpus", "corpus", "--split", "val"], d);
    let generated = fs::read_to_string(d.join("run/generated-val.jsonl")).unwrap();
    assert_eq!(generated.lines().count(), 8);
    ok(
        &[
            "evaluate",
            "--hypotheses",
            "run/generated-val.jsonl",
            "--references",
            "corpus",
            "--out",
            "eval",
        ],
        d,
    );
    assert!(d.join("eval/metrics.txt").is_file());
    ok(&["analyze", "--history", "run/history.jsonl", "--out", "analysis.jsonl"], d);
    assert_eq!(fs::read_to_string(d.join("analysis.jsonl")).unwrap().lines().count(), 2);
    ok(&["select", "--history", "run/history.jsonl", "--out", "sel.json", "--min-distinct", "1"], d);
    let sel: serde_json::Value = serde_json::from_slice(&fs::read(d.join("sel.json")).unwrap()).unwrap();
    assert!(sel["iteration"].is_u64(), "{sel}");

    // A checkpoint that does not fit the configured model is rejected.
    let out = run(
        &["--set", "model.hidden=8", "generate", "--run", "run", "--checkpoint", &ckpt, "--corpus", "corpus"],
        d,
    );
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}
