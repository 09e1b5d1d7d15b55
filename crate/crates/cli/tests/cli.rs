use std::path::Path;
use std::process::{Command, Output};

fn pqgdr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pqgdr"))
        .args(args)
        .env("PQGDR_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn bad_arguments_exit_with_usage_status() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let o = pqgdr(&["generate", "--out", s(&out), "--per-class", "0"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!out.join("manifest.json").exists());

    let o = pqgdr(&["generate", "--out", s(&out), "--snr", "loud"]);
    assert_eq!(o.status.code(), Some(2));

    let o = pqgdr(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_model_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("nowhere").join("model.json");
    let o = pqgdr(&[
        "evaluate",
        "--out",
        s(&dir.path().join("e")),
        "--model",
        s(&model),
        "--per-class",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(s(&model)), "{}", stderr(&o));
}

#[test]
fn same_seed_gives_identical_manifests_and_config_replays() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for d in [&a, &b] {
        let o = pqgdr(&["generate", "--out", s(d), "--per-class", "2", "--seed", "11", "--snr", "mixed:34:50"]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(d.join("run.json").exists());
    }
    let manifest = |d: &Path| std::fs::read(d.join("manifest.json")).unwrap();
    assert_eq!(manifest(&a), manifest(&b));

    let o = pqgdr(&["generate", "--out", s(&c), "--config", s(&a.join("run.json"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(manifest(&a), manifest(&c));

    let o = pqgdr(&["train", "--out", s(&dir.path().join("t")), "--config", s(&a.join("run.json"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn analyze_reports_each_file_and_dumps_itd() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = pqgdr(&["generate", "--out", s(&data), "--per-class", "1", "--seed", "3", "--snr", "clean"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let out = dir.path().join("an");
    let missing = dir.path().join("absent.csv");
    let o = pqgdr(&["analyze", "--out", s(&out), "--dump-itd", s(&data), s(&missing)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("analysis.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("file,f_est,k1,k2"));
    assert_eq!(lines.len(), 1 + 10 + 1);
    assert!(lines.iter().any(|l| l.contains("absent.csv") && !l.ends_with(',')));
    let dumps = std::fs::read_dir(out.join("itd")).unwrap().count();
    assert_eq!(dumps, 10);
    assert!(out.join("analysis.json").exists());
    assert!(out.join("run.json").exists());
}

#[test]
fn train_evaluate_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t");
    let o = pqgdr(&["train", "--out", s(&t), "--per-class", "4", "--seed", "5", "--snr", "clean", "--no-grid"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let model = t.join("model.json");
    assert!(model.exists());

    let e = dir.path().join("e");
    let o = pqgdr(&["evaluate", "--out", s(&e), "--model", s(&model), "--per-class", "2", "--seed", "6"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let conf = std::fs::read_to_string(e.join("confusion.csv")).unwrap();
    assert_eq!(conf.lines().count(), 1 + 10 + 1);

    let w = dir.path().join("w");
    let o = pqgdr(&["sweep", "--out", s(&w), "--model", s(&model), "--per-class", "1", "--seed", "7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let sweep = std::fs::read_to_string(w.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 11);
}
