//! Config to metrics, end to end.

use std::fs;

use resilient_p2p::simulator::{run, PartitionKind, SUMMARY_HEADER, WORKER_HEADER};
use resilient_p2p::{Error, SimConfig, Simulation};

fn config(json: &str) -> SimConfig {
    SimConfig::from_json(json).unwrap()
}

const SMALL: &str = r#"{
    "seed": 11, "epochs": 10,
    "data": {"source": "blobs", "n_per_class": 60, "classes": 3, "d_x": 3},
    "partition": {"n_workers": 5},
    "model": {"layers": [6]},
    "optimizer": {"lr": 0.1, "batch_size": 8}
}"#;

#[test]
fn csv_subject_partition_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("subject,x1,x2,label\n");
    for s in 0..4 {
        for i in 0..12 {
            let label = i % 2;
            let x = if label == 0 { -1.0 } else { 1.0 } + 0.05 * s as f64;
            text.push_str(&format!("{s},{x},{},{label}\n", 0.1 * i as f64));
        }
    }
    fs::write(dir.path().join("table.csv"), text).unwrap();
    let cfg_path = dir.path().join("cfg.json");
    fs::write(
        &cfg_path,
        r#"{"epochs": 5,
            "data": {"source": "csv", "path": "table.csv", "label_column": 3, "subject_column": 0, "has_header": true},
            "partition": {"kind": "subject", "n_workers": null},
            "model": {"layers": [3]},
            "optimizer": {"batch_size": 4}}"#,
    )
    .unwrap();
    let cfg = SimConfig::from_path(&cfg_path).unwrap();
    assert_eq!(cfg.partition.kind, PartitionKind::Subject);
    let setup = cfg.build().unwrap();
    assert_eq!(setup.workers.len(), 4);
    assert_eq!(setup.dataset.n_features(), 2);
    let log = Simulation::new(setup).unwrap().run().unwrap();
    assert_eq!(log.summaries.len(), 5);
}

#[test]
fn csv_outputs_have_fixed_headers() {
    let log = run(&config(SMALL)).unwrap();
    let mut workers = Vec::new();
    log.write_worker_csv(&mut workers).unwrap();
    let workers = String::from_utf8(workers).unwrap();
    assert_eq!(workers.lines().next().unwrap(), WORKER_HEADER.join(","));
    assert_eq!(workers.lines().count(), 1 + 10 * 5);

    let mut summary = Vec::new();
    log.write_summary_csv(&mut summary).unwrap();
    let summary = String::from_utf8(summary).unwrap();
    assert_eq!(summary.lines().next().unwrap(), SUMMARY_HEADER.join(","));
}

#[test]
fn training_reduces_the_global_objective() {
    let cfg = SMALL.replace("\"epochs\": 10", "\"epochs\": 150").replace("\"d_x\": 3", "\"d_x\": 3, \"spread\": 0.25");
    let log = run(&config(&cfg)).unwrap();
    let first = log.summaries.first().unwrap().global_objective;
    let last = log.last().unwrap().global_objective;
    assert!(last < 0.5 * first, "{first} -> {last}");
    let acc = log.last().unwrap().worst_normal_acc;
    assert!(acc > 0.8, "{acc}");
}

#[test]
fn global_test_set_is_shared() {
    let cfg = config(&SMALL.replace("\"n_workers\": 5", "\"n_workers\": 5, \"test\": \"global\""));
    let setup = cfg.build().unwrap();
    let test = &setup.workers[0].test;
    assert!(!test.is_empty());
    assert!(setup.workers.iter().all(|w| &w.test == test));
    for w in &setup.workers {
        assert!(w.train.iter().all(|i| !test.contains(i)));
    }
}

#[test]
fn seeds_change_results() {
    let a = run(&config(SMALL)).unwrap();
    let b = run(&config(&SMALL.replace("\"seed\": 11", "\"seed\": 12"))).unwrap();
    assert_ne!(a, b);
}

#[test]
fn config_errors_name_their_field() {
    let bad = [
        (r#"{"epochs": 0}"#, "epochs"),
        (r#"{"optimizer": {"batch_size": 0}}"#, "optimizer.batch_size"),
        (r#"{"attack": {"kind": "foe", "adversaries": 10}, "partition": {"n_workers": 10}}"#, "attack"),
    ];
    for (json, field) in bad {
        let err = config(json).validate().and_then(|_| config(json).build().map(|_| ()));
        match err {
            Err(Error::InvalidConfig { field: f, .. }) => assert!(f.starts_with(field), "{f} vs {field}"),
            other => panic!("{json}: {other:?}"),
        }
    }
    assert!(SimConfig::from_json(r#"{"epoch": 3}"#).is_err());
}
