use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_simpleconv"));
    c.env_remove("SIMPLECONV_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth(dir: &Path, extra: &[&str]) -> String {
    let out = dir.to_str().unwrap();
    let mut args = vec!["synth", "--subjects", "3", "--sessions", "2", "--trials", "16", "--channels", "4", "--duration", "1", "--out", out];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    dir.join("synth.esc1").to_str().unwrap().to_string()
}

#[test]
fn synth_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pa = synth(a.path(), &["--seed", "4"]);
    let pb = synth(b.path(), &["--seed", "4"]);
    assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
    assert!(a.path().join("synth.esc1.manifest").exists());
    assert!(a.path().join("synth.snapshot").exists());
}

#[test]
fn seed_from_environment() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pa = synth(a.path(), &["--seed", "9"]);
    let o = bin()
        .env("SIMPLECONV_SEED", "9")
        .args(["synth", "--subjects", "3", "--sessions", "2", "--trials", "16", "--channels", "4", "--duration", "1", "--out"])
        .arg(b.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(b.path().join("synth.esc1")).unwrap());
}

#[test]
fn params_prints_a_count() {
    let o = run(&["params", "--preset", "within"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let n: usize = text.trim().parse().unwrap();
    assert!(n > 0);
    let bigger = run(&["params", "--preset", "within", "--W", "208"]);
    let m: usize = String::from_utf8(bigger.stdout).unwrap().trim().parse().unwrap();
    assert!(m > n);
}

#[test]
fn exit_codes() {
    let o = run(&["params", "--bogus"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error code=usage"));

    let o = run(&["eval", "--data", "/nonexistent/x.esc1"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("code=io"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "nonsense-key=1\n").unwrap();
    let o = run(&["params", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("code=config"));

    let data = synth(dir.path(), &[]);
    let o = run(&["eval", "--data", &data, "--paradigm", "cross", "--online", "--runs", "1"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));

    let junk = dir.path().join("junk.esc1");
    std::fs::write(&junk, b"NOPE0000").unwrap();
    let o = run(&["eval", "--data", junk.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
}

#[test]
fn config_file_with_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("p.cfg");
    std::fs::write(&cfg, "# a comment\ncommand=params\npreset=within\nW=8\n").unwrap();
    let from_file = run(&["params", "--config", cfg.to_str().unwrap()]);
    assert!(from_file.status.success(), "{}", stderr(&from_file));
    let direct = run(&["params", "--preset", "within", "--W", "8"]);
    assert_eq!(from_file.stdout, direct.stdout);
    let overridden = run(&["params", "--config", cfg.to_str().unwrap(), "--W", "16"]);
    let want = run(&["params", "--preset", "within", "--W", "16"]);
    assert_eq!(overridden.stdout, want.stdout);
    assert_ne!(overridden.stdout, from_file.stdout);

    std::fs::write(&cfg, "command=eval\n").unwrap();
    let o = run(&["params", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn eval_writes_report_and_replays_from_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let out = dir.path().join("run");
    let o = run(&[
        "eval", "--data", &data, "--paradigm", "cross-ft", "--runs", "2", "--W", "4", "--K", "1", "--S", "3", "--epochs", "2",
        "--finetune-epochs", "2", "--batch", "16", "--seed", "3", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("offline"), "{stdout}");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["results"].as_array().unwrap().len(), 2 * 3);
    assert!(out.join("report.csv").exists());
    let snapshot = out.join("eval.snapshot");
    let text = std::fs::read_to_string(&snapshot).unwrap();
    assert!(text.starts_with("command=eval\n") && text.contains("seed=3"), "{text}");

    let again = dir.path().join("again");
    let o = run(&["eval", "--config", snapshot.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let second: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(again.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["results"], second["results"]);
}

#[test]
fn train_then_embed() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let out = dir.path().join("t");
    let o = run(&[
        "train", "--data", &data, "--preset", "cross", "--W", "4", "--K", "1", "--S", "3", "--epochs", "1", "--batch", "16", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ckpt = out.join("model.escm");
    assert!(ckpt.exists() && out.join("train_history.json").exists());
    let o = run(&["embed", "--data", &data, "--checkpoint", ckpt.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("embeddings.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 2 * 16);
    assert!(csv.starts_with("trial,subject,session,label,f0"));
}

#[test]
fn bench_writes_latency() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "bench", "--preset", "within", "--W", "4", "--trials", "4", "--repeats", "2", "--warmup", "1", "--channels", "4", "--duration", "1",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("latency.json")).unwrap()).unwrap();
    assert_eq!(v["n_passes"], 8);
    assert!(v["params"].as_u64().unwrap() > 0);
    assert!(v["p95_s"].as_f64().unwrap() >= v["median_s"].as_f64().unwrap());
}
