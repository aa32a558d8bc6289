//! End-to-end tests against the compiled binary: exit codes, help output,
//! artifact layout, and rerun determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn clinex(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clinex"))
        .current_dir(dir)
        .env_remove("CLINEX_BACKEND_URL")
        .env_remove("CLINEX_BACKEND_TOKEN")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("exit code")
}

struct Workspace {
    _keep: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn seeded() -> Self {
        let keep = tempfile::tempdir().unwrap();
        let root = keep.path().to_path_buf();
        let out = clinex(&root, &["--seed-fixtures", "fixtures"]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        Workspace { _keep: keep, root }
    }

    fn run_args<'a>(&self, extra: &[&'a str]) -> Vec<String> {
        let mut args = vec![
            "run".to_string(),
            "--corpus".into(),
            "fixtures/corpus.jsonl".into(),
            "--truth".into(),
            "fixtures/truth.csv".into(),
            "--mock-script".into(),
            "fixtures/mock_script.json".into(),
            "--variant".into(),
            "translated_english".into(),
            "--variant".into(),
            "direct_persian".into(),
            "--out-dir".into(),
            "out".into(),
        ];
        args.extend(extra.iter().map(|s| s.to_string()));
        args
    }
}

#[test]
fn help_documents_every_shared_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = clinex(dir.path(), &["run", "--help"]);
    assert_eq!(code(&out), 0);
    let help = String::from_utf8_lossy(&out.stdout);
    for flag in [
        "--corpus",
        "--corpus-format",
        "--truth",
        "--schema",
        "--exemplars",
        "--variant",
        "--model-id",
        "--translation-model-id",
        "--backend-url",
        "--mock-script",
        "--parallelism",
        "--cache-dir",
        "--out-dir",
        "--config",
        "--retry-backoff-ms",
    ] {
        assert!(help.contains(flag), "help lacks {flag}");
    }

    let top = clinex(dir.path(), &["--help"]);
    assert_eq!(code(&top), 0);
    let top_help = String::from_utf8_lossy(&top.stdout);
    for subcommand in ["translate", "extract", "evaluate", "report", "run"] {
        assert!(top_help.contains(subcommand), "help lacks {subcommand}");
    }
    assert!(top_help.contains("--seed-fixtures"));
}

#[test]
fn unknown_flag_exits_64() {
    let dir = tempfile::tempdir().unwrap();
    let out = clinex(dir.path(), &["run", "--definitely-not-a-flag"]);
    assert_eq!(code(&out), 64);
}

#[test]
fn missing_subcommand_exits_64() {
    let dir = tempfile::tempdir().unwrap();
    let out = clinex(dir.path(), &[]);
    assert_eq!(code(&out), 64);
}

#[test]
fn both_mock_and_endpoint_exit_64() {
    let ws = Workspace::seeded();
    let out = clinex(
        &ws.root,
        &[
            "translate",
            "--corpus",
            "fixtures/corpus.jsonl",
            "--mock-script",
            "fixtures/mock_script.json",
            "--backend-url",
            "http://127.0.0.1:1",
            "--out-dir",
            "out",
        ],
    );
    assert_eq!(code(&out), 64, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn neither_mock_nor_endpoint_exits_64() {
    let ws = Workspace::seeded();
    let out = clinex(
        &ws.root,
        &[
            "translate",
            "--corpus",
            "fixtures/corpus.jsonl",
            "--out-dir",
            "out",
        ],
    );
    assert_eq!(code(&out), 64);
}

#[test]
fn unknown_variant_exits_64() {
    let ws = Workspace::seeded();
    let args = ws.run_args(&["--variant", "klingon"]);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = clinex(&ws.root, &args);
    assert_eq!(code(&out), 64);
}

#[test]
fn translate_happy_path_preserves_line_count() {
    let ws = Workspace::seeded();
    let out = clinex(
        &ws.root,
        &[
            "translate",
            "--corpus",
            "fixtures/corpus.jsonl",
            "--mock-script",
            "fixtures/mock_script.json",
            "--out-dir",
            "out",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let input = fs::read_to_string(ws.root.join("fixtures/corpus.jsonl")).unwrap();
    let output = fs::read_to_string(ws.root.join("out/translation.jsonl")).unwrap();
    assert_eq!(input.lines().count(), output.lines().count());
    assert!(output.contains("\"language\":\"english\""));
}

#[test]
fn translate_against_dead_endpoint_exits_2_with_partial_output() {
    let ws = Workspace::seeded();
    // two-record corpus keeps the retry loop short
    let small = ws.root.join("small.jsonl");
    fs::write(
        &small,
        concat!(
            "{\"id\":\"a\",\"language\":\"persian\",\"text\":\"متن اول\"}\n",
            "{\"id\":\"b\",\"language\":\"persian\",\"text\":\"متن دوم\"}\n",
        ),
    )
    .unwrap();
    let out = clinex(
        &ws.root,
        &[
            "translate",
            "--corpus",
            "small.jsonl",
            "--backend-url",
            "http://127.0.0.1:9",
            "--model-id",
            "m",
            "--retry-backoff-ms",
            "0",
            "--out-dir",
            "out",
        ],
    );
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("translation failed: a"));
    assert!(stderr.contains("translation failed: b"));
    let written = fs::read_to_string(ws.root.join("out/translation.jsonl")).unwrap();
    assert_eq!(written.lines().count(), 2, "partial output still written");
    assert!(written.contains("translation failed"));
}

#[test]
fn evaluate_without_snapshot_exits_66() {
    let ws = Workspace::seeded();
    let out = clinex(
        &ws.root,
        &[
            "evaluate",
            "--truth",
            "fixtures/truth.csv",
            "--variant",
            "direct_persian",
            "--out-dir",
            "out",
        ],
    );
    assert_eq!(code(&out), 66, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn report_without_metrics_exits_66() {
    let ws = Workspace::seeded();
    // produce a snapshot but skip evaluate, so the metrics json is absent
    let out = clinex(
        &ws.root,
        &[
            "extract",
            "--corpus",
            "fixtures/corpus.jsonl",
            "--mock-script",
            "fixtures/mock_script.json",
            "--variant",
            "direct_persian",
            "--out-dir",
            "out",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let out = clinex(
        &ws.root,
        &[
            "report",
            "--variant",
            "direct_persian",
            "--out-dir",
            "out",
        ],
    );
    assert_eq!(code(&out), 66, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn extract_then_evaluate_then_report_chains() {
    let ws = Workspace::seeded();
    let out = clinex(
        &ws.root,
        &[
            "extract",
            "--corpus",
            "fixtures/corpus.jsonl",
            "--mock-script",
            "fixtures/mock_script.json",
            "--variant",
            "direct_persian",
            "--out-dir",
            "out",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(ws.root.join("out/extraction_direct_persian.jsonl").exists());
    assert!(ws.root.join("out/completions/direct_persian.jsonl").exists());
    assert!(ws.root.join("out/run.json").exists());

    let out = clinex(
        &ws.root,
        &[
            "evaluate",
            "--truth",
            "fixtures/truth.csv",
            "--variant",
            "direct_persian",
            "--out-dir",
            "out",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let metrics_csv = ws.root.join("out/metrics_mock_persian.csv");
    assert!(metrics_csv.exists());

    // evaluate rerun on unchanged snapshots is byte-identical
    let first = fs::read(&metrics_csv).unwrap();
    let out = clinex(
        &ws.root,
        &[
            "evaluate",
            "--truth",
            "fixtures/truth.csv",
            "--variant",
            "direct_persian",
            "--out-dir",
            "out",
        ],
    );
    assert_eq!(code(&out), 0);
    assert_eq!(first, fs::read(&metrics_csv).unwrap());

    let out = clinex(
        &ws.root,
        &[
            "report",
            "--variant",
            "direct_persian",
            "--out-dir",
            "out",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(ws.root.join("out/table1.csv").exists());
    assert!(ws.root.join("out/table1.md").exists());
    assert!(ws.root.join("out/fig3_mock_persian.csv").exists());
    assert!(ws.root.join("out/missing.csv").exists());
}

#[test]
fn run_emits_full_bundle_and_config_file_works() {
    let ws = Workspace::seeded();
    fs::write(
        ws.root.join("run.toml"),
        concat!(
            "corpus = \"fixtures/corpus.jsonl\"\n",
            "truth = \"fixtures/truth.csv\"\n",
            "mock_script = \"fixtures/mock_script.json\"\n",
            "variants = [\"translated_english\", \"direct_persian\"]\n",
            "out_dir = \"out\"\n",
            "cache_dir = \"cache\"\n",
            "parallelism = 2\n",
        ),
    )
    .unwrap();
    let out = clinex(&ws.root, &["run", "--config", "run.toml"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for artifact in [
        "out/run.json",
        "out/translation.jsonl",
        "out/extraction_translated_english.jsonl",
        "out/extraction_direct_persian.jsonl",
        "out/completions/translated_english.jsonl",
        "out/completions/direct_persian.jsonl",
        "out/table1.md",
        "out/table1.csv",
        "out/metrics_mock_english.csv",
        "out/metrics_mock_persian.csv",
        "out/fig3_mock_english.csv",
        "out/fig3_mock_persian.csv",
        "out/missing.csv",
        "out/comparison.csv",
    ] {
        assert!(ws.root.join(artifact).exists(), "{artifact} missing");
    }
    let comparison = fs::read_to_string(ws.root.join("out/comparison.csv")).unwrap();
    assert_eq!(comparison.lines().count(), 14, "13 delta rows plus header");

    let manifest = fs::read_to_string(ws.root.join("out/run.json")).unwrap();
    assert!(manifest.contains("translated_english"));
    assert!(manifest.contains("direct_persian"));
}

#[test]
fn seed_fixtures_writes_usable_demo_bundle() {
    let ws = Workspace::seeded();
    for file in [
        "fixtures/corpus.jsonl",
        "fixtures/truth.csv",
        "fixtures/mock_script.json",
        "fixtures/schema.json",
        "fixtures/exemplars.json",
    ] {
        assert!(ws.root.join(file).exists(), "{file} missing");
    }
    // the seeded schema and exemplars round-trip through the flags
    let args = ws.run_args(&[
        "--schema",
        "fixtures/schema.json",
        "--exemplars",
        "fixtures/exemplars.json",
    ]);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = clinex(&ws.root, &args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}
