use std::path::Path;
use std::process::{Command, Output};

fn replybank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_replybank"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth(dir: &Path) -> std::path::PathBuf {
    let corpus = dir.join("corpus.jsonl");
    let o = replybank(&["synth", "gen", "--classes", "5", "--conversations", "200", "--seed", "3", "--out", path(&corpus)]);
    assert!(o.status.success(), "{}", stderr(&o));
    corpus
}

#[test]
fn pipeline_runs_then_skips_everything() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path());
    assert!(dir.path().join("corpus.jsonl.truth.json").exists());
    let work = dir.path().join("work");
    let o = replybank(&["pipeline", "run", "--corpus", path(&corpus), "--workdir", path(&work)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stderr(&o).matches(" ran").count(), 9);
    let eval: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(eval["accuracy"].as_f64().unwrap() > 0.8);

    let o = replybank(&["pipeline", "run", "--corpus", path(&corpus), "--workdir", path(&work)]);
    assert!(o.status.success());
    assert_eq!(stderr(&o).matches(" fresh").count(), 9);

    // a changed training setting reruns only training and evaluation
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "[train]\nepochs = 5\n").unwrap();
    let o = replybank(&["pipeline", "run", "--corpus", path(&corpus), "--config", path(&cfg), "--workdir", path(&work)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let err = stderr(&o);
    assert_eq!(err.matches(" fresh").count(), 7, "{err}");
    assert!(err.contains("train      ran") && err.contains("eval       ran"), "{err}");
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path());
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "[cluster]\nthreshold = 2.0\n").unwrap();
    let work = dir.path().join("work");
    let o = replybank(&["pipeline", "run", "--corpus", path(&corpus), "--config", path(&cfg), "--workdir", path(&work)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    std::fs::write(&cfg, "[clusterr]\n").unwrap();
    let o = replybank(&["pipeline", "run", "--corpus", path(&corpus), "--config", path(&cfg), "--workdir", path(&work)]);
    assert_eq!(o.status.code(), Some(2));
    let o = replybank(&["pipeline", "run", "--corpus", path(&corpus)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stage_failure_exits_3_and_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("bad.jsonl");
    std::fs::write(&corpus, "{\"id\": \"a\", \"messages\": [}\n").unwrap();
    let o = replybank(&["pipeline", "run", "--corpus", path(&corpus), "--workdir", path(&dir.path().join("w"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("stage ingest failed"), "{}", stderr(&o));
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));
}

#[test]
fn stepwise_commands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = synth(d);
    let f = |n: &str| d.join(n);
    let steps: Vec<Vec<String>> = vec![
        vec!["ingest".into(), "--corpus".into(), path(&corpus).into(), "--out".into(), path(&f("responses.tsv")).into()],
        vec!["candidates".into(), "--responses".into(), path(&f("responses.tsv")).into(), "--encoders".into(), "tfidf".into(), "--k".into(), "10".into(), "--out".into(), path(&f("p.tsv")).into()],
        vec!["cluster".into(), "--pairs".into(), path(&f("p.tsv")).into(), "--threshold".into(), "0.25".into(), "--out".into(), path(&f("c.json")).into()],
        vec!["bank".into(), "auto".into(), "--clusters".into(), path(&f("c.json")).into(), "--out".into(), path(&f("b.json")).into()],
        vec!["bank".into(), "extract".into(), "--corpus".into(), path(&corpus).into(), "--bank".into(), path(&f("b.json")).into(), "--turns".into(), "6".into(), "--tokens".into(), "304".into(), "--out".into(), path(&f("e.bin")).into()],
        vec!["train".into(), "--examples".into(), path(&f("e.bin")).into(), "--bank".into(), path(&f("b.json")).into(), "--epochs".into(), "10".into(), "--out".into(), path(&f("m.ckpt")).into()],
        vec!["eval".into(), "--model".into(), path(&f("m.ckpt")).into(), "--examples".into(), path(&f("e.bin")).into(), "--optout-curve".into(), path(&f("curve.csv")).into()],
    ];
    for s in &steps {
        let args: Vec<&str> = s.iter().map(String::as_str).collect();
        let o = replybank(&args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    }
    let curve = std::fs::read_to_string(f("curve.csv")).unwrap();
    assert_eq!(curve.lines().next(), Some("threshold,coverage,retained_accuracy"));
    assert_eq!(curve.lines().count(), 22);
    let o = replybank(&[
        "metrics",
        "cluster-f1",
        "--clusters",
        path(&f("c.json")),
        "--responses",
        path(&f("responses.tsv")),
        "--truth",
        path(&d.join("corpus.jsonl.truth.json")),
    ]);
    let scores: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(scores["f1"].as_f64().unwrap() >= 0.9);

    let o = replybank(&["candidates", "--responses", path(&f("responses.tsv")), "--k", "0", "--out", path(&f("x.tsv"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unique_per_100_of_identical_lines_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s.txt");
    std::fs::write(&s, "take care\n".repeat(150)).unwrap();
    let o = replybank(&["metrics", "unique-per-100", "--suggestions", path(&s), "--seed", "1"]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "1");
    std::fs::write(&s, "one\n").unwrap();
    let o = replybank(&["metrics", "unique-per-100", "--suggestions", path(&s)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(replybank(&["ingest"]).status.code(), Some(2));
    assert_eq!(replybank(&["nonsense"]).status.code(), Some(2));
    assert_eq!(replybank(&["--help"]).status.code(), Some(0));
}
