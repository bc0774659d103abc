use std::path::Path;
use std::process::Command;

fn ellm(args: &[&str], cwd: &Path) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_ellm"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "ellm {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn pretrain_analyze_plot_cache_eval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let stdout = ellm(
        &[
            "pretrain", "--method", "ellm", "--steps", "1500", "--seeds", "0,1", "--out", "run", "--llm-cache",
            "cache.jsonl",
        ],
        d,
    );
    assert!(stdout.contains("seed 1:"), "{stdout}");
    for f in ["config.toml", "episodes.csv", "events.jsonl", "transcript.jsonl", "summary.json", "chart.svg"] {
        assert!(d.join("run").join(f).exists(), "missing {f}");
    }

    let table = ellm(&["analyze", "run/transcript.jsonl"], d);
    assert!(table.contains("common_sense_insensitive"), "{table}");
    let json: serde_json::Value = serde_json::from_str(&ellm(&["analyze", "--json", "run/transcript.jsonl"], d)).unwrap();
    assert!(json["suggested"]["counts"].is_object());

    ellm(&["plot", "run", "--metric", "intrinsic_return", "--out", "c.svg"], d);
    assert!(std::fs::read_to_string(d.join("c.svg")).unwrap().starts_with("<svg"));

    let stats: serde_json::Value = serde_json::from_str(&ellm(&["cache", "stats", "cache.jsonl"], d)).unwrap();
    assert!(stats["entries"].as_u64().unwrap() > 0);
    let merged = ellm(&["cache", "merge", "--output", "all.jsonl", "cache.jsonl", "cache.jsonl"], d);
    assert!(merged.starts_with("merged"), "{merged}");

    let again = ellm(
        &["pretrain", "--config", "run/config.toml", "--out", "replayed", "--replay"],
        d,
    );
    assert!(again.contains("0 model calls"), "{again}");
    assert_eq!(
        std::fs::read(d.join("run/episodes.csv")).unwrap(),
        std::fs::read(d.join("replayed/episodes.csv")).unwrap()
    );

    let summary: serde_json::Value = serde_json::from_str(&ellm(
        &[
            "eval", "--checkpoint", "run/seed_0/checkpoint.bin", "--episodes", "2", "--trials", "2",
        ],
        d,
    ))
    .unwrap();
    assert_eq!(summary["per_trial"].as_array().unwrap().len(), 2);
}

#[test]
fn rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ellm"))
        .args(["pretrain", "--method", "telepathy"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
}
