mod common;

use std::fs;

use qcseg::pipeline::{run_scenario, Scenario};
use qcseg::Error;
use qcseg_harness::runs::{load_run, save_run, verify_manifest, MANIFEST_FILE};

#[test]
fn saved_runs_round_trip_and_detect_tampering() {
    let out = run_scenario(&common::tiny_scenario(Scenario::Semiqcseg)).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let ma = save_run(&out, &a).unwrap();
    let mb = save_run(&out, &b).unwrap();
    assert_eq!(ma, mb);
    assert_eq!(fs::read(a.join(MANIFEST_FILE)).unwrap(), fs::read(b.join(MANIFEST_FILE)).unwrap());
    for f in ["config.json", "census.json", "record.json", "metrics.csv", "log.txt", "model/model.ckpt", "qc_model/model.ckpt"] {
        assert!(ma.files.iter().any(|e| e.path == f), "{f} missing from manifest");
    }

    let back = load_run(&a).unwrap();
    assert_eq!(back.record, out.record);
    assert_eq!(back.model, out.model);
    assert_eq!(back.qc_model, out.qc_model);
    assert_eq!(back.log, out.log);

    let metrics = a.join("metrics.csv");
    let mut text = fs::read_to_string(&metrics).unwrap();
    text.push_str("extra,row,1\n");
    fs::write(&metrics, text).unwrap();
    match load_run(&a) {
        Err(Error::Checksum { path, .. }) => assert!(path.ends_with("metrics.csv")),
        other => panic!("expected a checksum error, got {:?}", other.err()),
    }

    let ckpt = b.join("model/model.ckpt");
    let mut bytes = fs::read(&ckpt).unwrap();
    let n = bytes.len();
    bytes[n - 1] ^= 1;
    fs::write(&ckpt, bytes).unwrap();
    assert!(matches!(verify_manifest(&b), Err(Error::Checksum { .. })));
}

#[test]
fn missing_artifacts_fail_to_load() {
    let out = run_scenario(&common::tiny_scenario(Scenario::Half)).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    save_run(&out, tmp.path()).unwrap();
    fs::remove_file(tmp.path().join("log.txt")).unwrap();
    assert!(matches!(load_run(tmp.path()), Err(Error::Io { .. })));
}
