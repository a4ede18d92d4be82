use std::path::Path;

use qcseg::Error;
use qcseg_harness::config::{load_config, parse_config, save_config, AppConfig, DEFAULT_PORT};

#[test]
fn minimal_file_gets_defaults() {
    let cfg = parse_config(r#"{"data_root": "cohorts"}"#, "app.json").unwrap();
    assert_eq!(cfg.data_root, Path::new("cohorts"));
    assert_eq!(cfg.port, DEFAULT_PORT);
    assert_eq!(cfg.runs_root, AppConfig::default().runs_root);
    assert!(cfg.presets.is_empty());
}

#[test]
fn privileged_port_is_rejected_by_name() {
    let err = parse_config(r#"{"data_root": "d", "port": 80}"#, "app.json").unwrap_err();
    assert!(matches!(&err, Error::Invalid { field, .. } if field == "port"), "{err}");
    assert!(err.is_validation());
    assert!(parse_config(r#"{"port": 1024}"#, "a").is_ok());
    assert!(parse_config(r#"{"port": 65535}"#, "a").is_ok());
}

#[test]
fn unknown_fields_are_rejected() {
    assert!(parse_config(r#"{"data_root": "d", "colour": "blue"}"#, "a").is_err());
}

#[test]
fn syntax_errors_report_the_line() {
    let text = "{\n  \"data_root\": \"d\",\n  \"port\": ,\n}";
    let msg = parse_config(text, "app.json").unwrap_err().to_string();
    assert!(msg.contains("app.json") && msg.contains("line 3"), "{msg}");
}

#[test]
fn save_load_round_trip_normalises() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("app.json");
    std::fs::write(&p, r#"{"data_root":"d","seed":5}"#).unwrap();
    let first = load_config(&p).unwrap();
    let q = dir.path().join("again.json");
    save_config(&first, &q).unwrap();
    let second = load_config(&q).unwrap();
    assert_eq!(first, second);
    let text = std::fs::read_to_string(&q).unwrap();
    save_config(&second, &q).unwrap();
    assert_eq!(std::fs::read_to_string(&q).unwrap(), text);
}

#[test]
fn relative_paths_resolve_against_the_file() {
    let cfg = parse_config(r#"{"data_root": "d", "runs_root": "/abs/runs"}"#, "a").unwrap();
    let r = cfg.resolved(Path::new("/etc/qcseg"));
    assert_eq!(r.data_root, Path::new("/etc/qcseg/d"));
    assert_eq!(r.runs_root, Path::new("/abs/runs"));
}

#[test]
fn presets_are_validated() {
    let mut cfg = AppConfig::default();
    let mut bad = qcseg::pipeline::desk_benchmark(qcseg::pipeline::Scenario::Semiqcseg);
    bad.k = 0;
    cfg.presets.insert("broken".into(), bad);
    let err = cfg.validate().unwrap_err();
    assert!(matches!(&err, Error::Invalid { field, .. } if field == "presets.broken"), "{err}");
}
