use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rfc_core::metrics::{summarize, Direction};
use rfc_sim::config::{DatasetSource, RunConfig};
use rfc_sim::{export, presets};

fn sim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfc-sim"))
        .args(args)
        .current_dir(dir)
        .env("RFC_SIM_THREADS", "2")
        .output()
        .unwrap()
}

fn small() -> RunConfig {
    let mut cfg = presets::preset("one_pool_backdoor", presets::desk()).unwrap();
    cfg.federation.rounds = 4;
    cfg.federation.difficulty = 4;
    cfg.dataset = DatasetSource::Synthetic {
        num_classes: 3,
        height: 8,
        width: 8,
        per_class: 100,
        noise_sigma: 0.3,
        seed: 1,
    };
    cfg
}

fn run_small(dir: &Path) -> std::path::PathBuf {
    let cfg_path = dir.join("run.toml");
    fs::write(&cfg_path, small().to_toml()).unwrap();
    let out = dir.join("out");
    let res = sim(
        &[
            "run",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        dir,
    );
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    out
}

#[test]
fn run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_small(dir.path());
    for f in [
        export::RECORDS_FILE,
        export::CHAIN_FILE,
        export::SUMMARY_FILE,
        export::CONFIG_FILE,
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let records = export::read_records(&out.join(export::RECORDS_FILE)).unwrap();
    assert_eq!(records.len(), 4);
    let chain = export::validate_chain_file(&out.join(export::CHAIN_FILE)).unwrap();
    assert_eq!(chain.len(), 5);
    let models = fs::read_dir(out.join(export::MODELS_DIR)).unwrap().count();
    assert!((1..=5).contains(&models));
    let saved = RunConfig::load(&out.join(export::CONFIG_FILE)).unwrap();
    assert_eq!(saved.federation, small().federation);
}

#[test]
fn validate_chain_accepts_clean_and_names_tampered_block() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_small(dir.path());
    let chain_path = out.join(export::CHAIN_FILE);
    let ok = sim(
        &["validate-chain", chain_path.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("5 blocks"));

    let text = fs::read_to_string(&chain_path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let mut line: serde_json::Value = serde_json::from_str(&lines[2]).unwrap();
    let value = line["metric_value"].as_f64().unwrap();
    line["metric_value"] = serde_json::json!(value + 0.5);
    lines[2] = line.to_string();
    let tampered = dir.path().join("tampered.jsonl");
    fs::write(&tampered, lines.join("\n") + "\n").unwrap();
    let bad = sim(&["validate-chain", tampered.to_str().unwrap()], dir.path());
    assert_eq!(bad.status.code(), Some(3));
    let err = String::from_utf8_lossy(&bad.stderr);
    assert!(err.contains("block 2"), "{err}");
}

#[test]
fn summarize_matches_library_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_small(dir.path());
    let records_path = out.join(export::RECORDS_FILE);
    let res = sim(&["summarize", records_path.to_str().unwrap()], dir.path());
    assert!(res.status.success());
    let stdout = String::from_utf8_lossy(&res.stdout);
    let records = export::read_records(&records_path).unwrap();
    let acc: Vec<f64> = records.iter().map(|r| r.test_accuracy).collect();
    let s = summarize(&acc, Direction::Maximize).unwrap();
    let row = stdout
        .lines()
        .find(|l| l.starts_with("test_accuracy"))
        .unwrap();
    let cols: Vec<f64> = row
        .split_whitespace()
        .skip(1)
        .take(3)
        .map(|c| c.parse().unwrap())
        .collect();
    for (got, want) in cols.iter().zip([s.final_value, s.best, s.avg_last_10]) {
        assert!((got - want).abs() <= 5e-4, "{row}");
    }
}

#[test]
fn gen_data_feeds_a_csv_run() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    let res = sim(
        &[
            "gen-data",
            "--out",
            csv.to_str().unwrap(),
            "--per-class",
            "60",
        ],
        dir.path(),
    );
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let mut cfg = small();
    cfg.dataset = DatasetSource::Csv {
        path: csv,
        height: 8,
        width: 8,
        num_classes: 3,
    };
    cfg.federation.rounds = 2;
    let cfg_path = dir.path().join("csv.toml");
    fs::write(&cfg_path, cfg.to_toml()).unwrap();
    let res = sim(
        &["run", "--config", cfg_path.to_str().unwrap(), "--out", "o"],
        dir.path(),
    );
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    assert_eq!(
        export::read_records(&dir.path().join("o").join(export::RECORDS_FILE))
            .unwrap()
            .len(),
        2
    );
}

#[test]
fn bad_config_exits_one_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = small()
        .to_toml()
        .replacen("rounds = 4", "rounds = 4\nround_count = 9", 1);
    let cfg_path = dir.path().join("bad.toml");
    fs::write(&cfg_path, &text).unwrap();
    let res = sim(&["run", "--config", cfg_path.to_str().unwrap()], dir.path());
    assert_eq!(res.status.code(), Some(1));
    let line = rfc_sim::config::key_line(&text, "round_count").unwrap();
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains(&format!("bad.toml:{line}:")), "{err}");
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sim(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(
        sim(&["run", "--preset", "two_pools"], dir.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(sim(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn missing_dataset_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.dataset = DatasetSource::Csv {
        path: dir.path().join("absent.csv"),
        height: 8,
        width: 8,
        num_classes: 3,
    };
    let cfg_path = dir.path().join("c.toml");
    fs::write(&cfg_path, cfg.to_toml()).unwrap();
    let res = sim(&["run", "--config", cfg_path.to_str().unwrap()], dir.path());
    assert_eq!(
        res.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
}

#[test]
fn seed_override_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.toml");
    fs::write(&cfg_path, small().to_toml()).unwrap();
    let mut records = Vec::new();
    for (seed, out) in [("0", "a"), ("0", "b"), ("5", "c")] {
        let res = sim(
            &[
                "run",
                "--config",
                cfg_path.to_str().unwrap(),
                "--seed",
                seed,
                "--out",
                out,
            ],
            dir.path(),
        );
        assert!(res.status.success());
        records.push(fs::read(dir.path().join(out).join(export::RECORDS_FILE)).unwrap());
    }
    assert_eq!(records[0], records[1]);
    assert_ne!(records[0], records[2]);
}
