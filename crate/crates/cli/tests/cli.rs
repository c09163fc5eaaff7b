use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SPEC: &str = r#"{
  "seed": 42,
  "start_block": 5000,
  "blocks": 600,
  "rollups": [
    {"label": "big", "mean_bytes_per_block": 40000, "trigger": {"kind": "fill", "min_blobs": 2}},
    {"label": "small", "mean_bytes_per_block": 900, "trigger": {"kind": "interval", "blocks": 25}}
  ],
  "unlabeled_per_1000_blocks": 700,
  "base_fee": {"kind": "constant", "value": 10000000000},
  "priority_fee": {"kind": "constant", "value": 1000000000},
  "price": {"kind": "constant", "value": "3000"}
}"#;

fn blobshare(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blobshare"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes the spec and generates a trace into `<tmp>/data`.
fn synth_into(tmp: &Path) -> PathBuf {
    let spec = tmp.join("spec.json");
    fs::write(&spec, SPEC).unwrap();
    let data = tmp.join("data");
    let out = blobshare(&["synth", path(&spec), "--out-dir", path(&data)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    data
}

#[test]
fn synth_is_deterministic() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let (da, db) = (synth_into(a.path()), synth_into(b.path()));
    for name in ["submissions.csv", "blocks.csv", "prices.csv"] {
        let left = fs::read(da.join(name)).unwrap();
        assert!(!left.is_empty());
        assert_eq!(left, fs::read(db.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn analyze_simulate_fees_write_outputs() {
    let tmp = TempDir::new().unwrap();
    let data = synth_into(tmp.path());
    let config = data.join("config.json");
    for (cmd, files) in [
        ("analyze", &["table1.csv", "real_fees.csv"][..]),
        (
            "simulate",
            &["table2.csv", "cost_breakdown.csv", "sim_fees.csv"][..],
        ),
        ("fees", &["fee_series.csv", "buckets.csv"][..]),
    ] {
        let out = blobshare(&[cmd, "--config", path(&config)]);
        assert!(
            out.status.success(),
            "{cmd}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let listed = String::from_utf8(out.stdout).unwrap();
        for f in files {
            assert!(
                data.join("out").join(f).is_file(),
                "{cmd} did not write {f}"
            );
            assert!(listed.contains(f), "{cmd} did not report {f}");
        }
    }
    let table2 = fs::read_to_string(data.join("out/table2.csv")).unwrap();
    assert!(table2.starts_with("rollup,real_cost_usd,"));
    assert_eq!(table2.lines().count(), 3);
}

#[test]
fn flags_override_config() {
    let tmp = TempDir::new().unwrap();
    let data = synth_into(tmp.path());
    let out_dir = tmp.path().join("elsewhere");
    let out = blobshare(&[
        "simulate",
        "--config",
        path(&data.join("config.json")),
        "--out-dir",
        path(&out_dir),
        "--event-log",
        "true",
        "--end-block",
        "5299",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(!data.join("out").exists());
    let events = fs::read_to_string(out_dir.join("events.jsonl")).unwrap();
    assert!(events.starts_with("{\"block\":5000,"), "{}", &events[..80]);
    // The window is 300 blocks; any further lines are drain blocks.
    let in_window = events
        .lines()
        .filter(|l| l.contains("\"virtual\":false"))
        .count();
    assert_eq!(in_window, 300);
}

#[test]
fn strip_all_zero_blob_is_empty() {
    let tmp = TempDir::new().unwrap();
    let blob = tmp.path().join("zero.bin");
    fs::write(&blob, vec![0u8; 131_072]).unwrap();
    let out = blobshare(&["strip", path(&blob)]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "0");

    let mut data = vec![0u8; 131_072];
    data[..5].copy_from_slice(&[1, 2, 3, 4, 5]);
    fs::write(&blob, &data).unwrap();
    let out = blobshare(&["strip", path(&blob)]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "5");
}

#[test]
fn missing_input_exits_with_io_code() {
    let tmp = TempDir::new().unwrap();
    let data = synth_into(tmp.path());
    fs::remove_file(data.join("blocks.csv")).unwrap();
    let out = blobshare(&["analyze", "--config", path(&data.join("config.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn invalid_config_exits_with_validation_code() {
    let tmp = TempDir::new().unwrap();
    let data = synth_into(tmp.path());
    let config = data.join("config.json");

    let out = blobshare(&[
        "simulate",
        "--config",
        path(&config),
        "--start-block",
        "9000",
        "--end-block",
        "100",
    ]);
    assert_eq!(out.status.code(), Some(1));

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"start_block": 1, "end_blok": 2}"#).unwrap();
    assert_eq!(
        blobshare(&["analyze", "--config", path(&bad)])
            .status
            .code(),
        Some(1)
    );

    assert_eq!(
        blobshare(&["simulate", "--no-such-flag"]).status.code(),
        Some(1)
    );
}

#[test]
fn window_outside_trace_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let data = synth_into(tmp.path());
    let out = blobshare(&[
        "analyze",
        "--config",
        path(&data.join("config.json")),
        "--end-block",
        "99999",
    ]);
    assert_eq!(out.status.code(), Some(1));
}
