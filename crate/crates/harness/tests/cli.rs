mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use bsearch::records::{read_json, CandidateRecord, MetaRecord, Status};
use bsearch_core::sut::{BuiltinSut, NetworkWeights};
use bsearch_core::{Classifier, Generator};
use common::*;
use serde_json::Value;

fn cell_dirs(root: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for class in fs::read_dir(root).unwrap() {
        let class = class.unwrap().path();
        if !class.is_dir() {
            continue;
        }
        for rep in fs::read_dir(&class).unwrap() {
            out.push(rep.unwrap().path());
        }
    }
    out.sort();
    out
}

fn keys(path: &Path) -> BTreeSet<String> {
    let v: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    v.as_object().unwrap().keys().cloned().collect()
}

#[test]
fn malformed_config_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{\n  \"budget\": 10,\n  oops\n}");
    let out = run(&["train-sut", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn unknown_field_exits_2_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"populaton": 10}"#);
    let out = run(&["search", "--config", cfg.to_str().unwrap(), "--out", "unused"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("populaton"));
}

#[test]
fn missing_weights_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out_dir = dir.path().join("run");
    let out = run(&["search", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(!out_dir.exists());
}

#[test]
fn empty_run_dir_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["evaluate", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    let out = run(&["usage-report", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 3);
}

#[test]
fn weak_classifier_exits_4_without_weights() {
    let dir = tempfile::tempdir().unwrap();
    let text = TINY.replace("\"train_epochs\": 8", "\"train_epochs\": 0");
    let cfg = write_config(dir.path(), &text);
    let out = run(&["train-sut", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 4);
    assert!(!dir.path().join("sut.bsw").exists());
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("sut.report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
}

#[test]
fn training_is_byte_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    trained(a.path());
    let cfg = write_config(b.path(), TINY);
    let out = run(&["train-sut", "--config", cfg.to_str().unwrap(), "--workers", "1"]);
    assert_eq!(code(&out), 0);
    let wa = fs::read(a.path().join("sut.bsw")).unwrap();
    let wb = fs::read(b.path().join("sut.bsw")).unwrap();
    assert_eq!(wa, wb);
    let report: Value = serde_json::from_str(&fs::read_to_string(a.path().join("sut.report.json")).unwrap()).unwrap();
    assert!(report["holdout_accuracy"].as_f64().unwrap() >= 0.8);
}

#[test]
fn unreachable_adapter_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let text = TINY.replacen('{', r#"{"sut_command": ["/nonexistent/adapter"],"#, 1);
    let cfg = write_config(dir.path(), &text);
    let out = run(&["search", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("run").to_str().unwrap()]);
    assert_eq!(code(&out), 4);
}

#[test]
fn campaign_records_evaluation_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = trained(dir.path());
    let cfg = cfg.to_str().unwrap();
    let root = dir.path().join("run");
    let root_s = root.to_str().unwrap();

    for mode in ["search", "baseline"] {
        let out = run(&[mode, "--config", cfg, "--out", root_s, "--workers", "2", "--trace"]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let search = cell_dirs(&root.join("search"));
    let baseline = cell_dirs(&root.join("baseline"));
    assert_eq!(search.len(), 6);
    assert_eq!(baseline.len(), 6);

    // accounting, schema parity and pairing
    let config = bsearch::Loaded::from_path(Some(Path::new(cfg))).unwrap();
    let gen = Generator::new(config.config.generator_spec()).unwrap();
    let weights = NetworkWeights::load(&config.weights_path()).unwrap();
    let sut = BuiltinSut::new(weights, 16, 16).unwrap();
    for (s, b) in search.iter().zip(&baseline) {
        for cell in [s, b] {
            let meta: MetaRecord = read_json(&cell.join("meta.json")).unwrap();
            assert_eq!(meta.status, Status::Ok);
            assert!(meta.predictions_used <= 120);
            assert_eq!(meta.predictions_used, meta.sut_calls);
            for f in ["candidate.png", "source.png", "target.png", "trace.jsonl"] {
                assert!(cell.join(f).is_file(), "{}", cell.join(f).display());
            }
            // the candidate is reproducible from its record alone
            let rec: CandidateRecord = read_json(&cell.join("candidate.json")).unwrap();
            let image = rec.candidate_image(&gen).unwrap();
            assert_eq!(bsearch::records::image_digest(&image), rec.image_sha256);
            assert_eq!(sut.classify(&[image]).unwrap()[0], rec.probs);
        }
        assert_eq!(keys(&s.join("candidate.json")), keys(&b.join("candidate.json")));
        assert_eq!(keys(&s.join("meta.json")), keys(&b.join("meta.json")));
        let rs: CandidateRecord = read_json(&s.join("candidate.json")).unwrap();
        let rb: CandidateRecord = read_json(&b.join("candidate.json")).unwrap();
        assert_eq!(rs.source_seed_id, rb.source_seed_id);
    }

    // evaluation is pure
    let out = run(&["evaluate", root_s]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let files = ["summary.json", "search/metrics.csv", "baseline/metrics.csv"];
    let first: Vec<Vec<u8>> = files.iter().map(|f| fs::read(root.join(f)).unwrap()).collect();
    assert_eq!(code(&run(&["evaluate", root_s])), 0);
    for (f, bytes) in files.iter().zip(&first) {
        assert_eq!(&fs::read(root.join(f)).unwrap(), bytes, "{f}");
    }
    let csv_s = fs::read_to_string(root.join("search/metrics.csv")).unwrap();
    let csv_b = fs::read_to_string(root.join("baseline/metrics.csv")).unwrap();
    assert_eq!(csv_s.lines().next(), csv_b.lines().next());
    assert_eq!(
        csv_s.lines().next().unwrap(),
        "class,repetition,m1,m2,escape_flag,target_label,predictions_used"
    );
    assert_eq!(csv_s.lines().count(), 7);
    let summary: Value = serde_json::from_slice(&first[0]).unwrap();
    assert_eq!(summary["comparison"]["per_class"].as_array().unwrap().len(), 3);
    assert_eq!(summary["sets"][0]["image_mismatches"], 0);

    assert_eq!(code(&run(&["usage-report", root_s])), 0);
    let usage: Value = serde_json::from_str(&fs::read_to_string(root.join("usage.json")).unwrap()).unwrap();
    assert_eq!(usage.as_array().unwrap().len(), 2);

    // resume: completed cells are left alone
    let meta_before = fs::read(search[0].join("meta.json")).unwrap();
    let out = run(&["search", "--config", cfg, "--out", root_s]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 completed, 0 failed, 6 already present"));
    assert_eq!(fs::read(search[0].join("meta.json")).unwrap(), meta_before);

    // an interrupted cell (no meta.json) is rerun with identical results
    let cand_before = fs::read(search[3].join("candidate.json")).unwrap();
    fs::remove_file(search[3].join("meta.json")).unwrap();
    let out = run(&["search", "--config", cfg, "--out", root_s, "--workers", "1"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("1 completed, 0 failed, 5 already present"));
    assert_eq!(fs::read(search[3].join("candidate.json")).unwrap(), cand_before);
}

#[test]
fn resume_refuses_a_different_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = trained(dir.path());
    let root = dir.path().join("run");
    let text = TINY.replace("\"repetitions\": 2", "\"repetitions\": 1");
    let out = run(&["search", "--config", cfg.to_str().unwrap(), "--out", root.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    fs::write(&cfg, text.replace("\"budget\": 120", "\"budget\": 100")).unwrap();
    let out = run(&["search", "--config", cfg.to_str().unwrap(), "--out", root.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn campaigns_are_deterministic_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = trained(dir.path());
    let cfg = cfg.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&run(&["search", "--config", cfg, "--out", a.to_str().unwrap(), "--workers", "1"])), 0);
    assert_eq!(code(&run(&["search", "--config", cfg, "--out", b.to_str().unwrap(), "--workers", "3"])), 0);
    for (x, y) in cell_dirs(&a.join("search")).iter().zip(cell_dirs(&b.join("search"))) {
        for f in ["candidate.json", "candidate.png"] {
            assert_eq!(fs::read(x.join(f)).unwrap(), fs::read(y.join(f)).unwrap());
        }
    }
}

#[test]
fn external_adapter_runs_a_campaign() {
    let Some(py) = python() else {
        eprintln!("python3 unavailable; skipped");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let script = fixture("linear_sut.py");
    let command = serde_json::to_string(&[py, script.to_str().unwrap(), "3", "16", "16"]).unwrap();
    let text = TINY.replacen(
        '{',
        &format!("{{\"sut_command\": {command}, \"sut_connections\": 2, \"max_seed_retries\": 200,"),
        1,
    );
    let text = text.replace("\"max_seed_retries\": 30", "\"origin_classes\": [0, 2]");
    let cfg = write_config(dir.path(), &text);
    let root = dir.path().join("run");
    let out = run(&["search", "--config", cfg.to_str().unwrap(), "--out", root.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for cell in cell_dirs(&root.join("search")) {
        let meta: MetaRecord = read_json(&cell.join("meta.json")).unwrap();
        assert!(meta.predictions_used <= 120);
        assert_eq!(meta.predictions_used, meta.sut_calls);
    }
}
