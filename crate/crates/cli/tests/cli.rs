use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 3

[corpus]
train = 40
dev = 10
test = 10
mono = 60

[model]
hidden = 16
heads = 2
ffn = 32

[train]
max_steps = 20
eval_every = 10
warmup_steps = 10

[mixture]
bt_amounts = [0, 30]
"#;

fn dub(args: &[&str], outdir: &Path, config: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dub"));
    cmd.args(args).arg("--outdir").arg(outdir);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().unwrap()
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn setup() -> (tempfile::TempDir, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("out");
    (dir, cfg, out)
}

#[test]
fn evaluate_identical_files_prints_100() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("x.txt");
    std::fs::write(&f, "the cat sat\non the mat today\n").unwrap();
    let f = f.to_str().unwrap();
    let text = ok(dub(&["evaluate", "--hyp", f, "--ref", f], dir.path(), None));
    assert!(text.starts_with("BLEU = 100.00"), "{text}");

    let u = dir.path().join("u.txt");
    std::fs::write(&u, "1 2 3\n").unwrap();
    let r = dir.path().join("r.txt");
    std::fs::write(&r, "1 3\n").unwrap();
    let text = ok(dub(
        &["evaluate", "--metric", "uer", "--hyp", u.to_str().unwrap(), "--ref", r.to_str().unwrap()],
        dir.path(),
        None,
    ));
    assert_eq!(text.trim(), "UER = 50.00");
}

#[test]
fn staged_pipeline_writes_provenance_checked_artifacts() {
    let (_dir, cfg, out) = setup();
    let c = Some(cfg.as_path());
    ok(dub(&["gen-world"], &out, c));
    let world = std::fs::read(out.join("world.json")).unwrap();
    ok(dub(&["gen-world"], &out, c));
    assert_eq!(world, std::fs::read(out.join("world.json")).unwrap(), "gen-world is idempotent");

    ok(dub(&["extract-units"], &out, c));
    ok(dub(&["learn-vocab"], &out, c));
    ok(dub(&["train-t2ut"], &out, c));
    ok(dub(&["generate-bt", "--method", "topk", "--k", "10", "--amount", "30"], &out, c));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("corpus/bt.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["data"]["method"], "topk");
    assert_eq!(manifest["data"]["k"], 10);
    assert!(manifest["provenance"]["config_hash"].is_string());

    ok(dub(&["train-u2tt"], &out, c));
    ok(dub(&["train-u2tt", "--with-bt", "--amount", "30"], &out, c));
    assert!(out.join("ckpt/baseline.bin").exists() && out.join("ckpt/dub.bin").exists());
    let eval = ok(dub(&["evaluate", "--checkpoint", out.join("ckpt/dub.bin").to_str().unwrap()], &out, c));
    let report: serde_json::Value = serde_json::from_str(&eval).unwrap();
    assert!(report["bleu"]["bleu"].as_f64().unwrap() >= 0.0);

    // a different seed changes the configuration hash, so stale artifacts are rejected
    let stale = dub(&["extract-units", "--seed", "99"], &out, c);
    assert_eq!(stale.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&stale.stderr).contains("provenance"));
}

#[test]
fn dub_run_writes_the_report_set() {
    let (_dir, cfg, out) = setup();
    let text = ok(dub(&["dub-run", "--steps", "10"], &out, Some(&cfg)));
    assert!(text.contains("Delta BLEU"));
    for f in ["report.json", "report.md", "curve.csv", "world.json", "codebook.json", "vocab.json", "ckpt/dub.bin"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let csv = std::fs::read_to_string(out.join("curve.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    std::fs::remove_file(out.join("report.md")).unwrap();
    let stale = dub(&["report"], &out, Some(&cfg));
    assert_eq!(stale.status.code(), Some(1), "report under a different step count is rejected");
    ok(dub(&["report", "--steps", "10"], &out, Some(&cfg)));
    assert!(out.join("report.md").exists());
    std::fs::remove_file(out.join("curve.csv")).unwrap();
    ok(dub(&["report"], &out, None));
    assert!(out.join("curve.csv").exists());
}

#[test]
fn exit_codes_classify_failures() {
    let (dir, cfg, out) = setup();
    let missing = dub(&["extract-units"], &out, Some(&cfg));
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("world.json"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[model]\nhiden = 3\n").unwrap();
    let invalid = dub(&["gen-world"], &out, Some(&bad));
    assert_eq!(invalid.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&invalid.stderr).contains("hiden"));

    let usage = dub(&["no-such-command"], &out, None);
    assert_eq!(usage.status.code(), Some(1));
}
