mod common;

use std::fs;

use common::noisyobs;
use prl_core::experiment::{
    read_raw_csv, replication_seed, run, run_methods, summarize, write_raw_csv, ExperimentConfig, Method, CSV_HEADER,
    SUMMARY_HEADER,
};
use prl_core::pomdp::sample_dataset;

fn small_config(dir: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        n_grid: vec![200, 400],
        replications: 3,
        eps_noise: 0.2,
        policy: "hard".into(),
        output_dir: dir.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

#[test]
fn two_replications_of_one_method_give_two_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        n_grid: vec![100],
        replications: 2,
        methods: vec![Method::MeanR],
        output_dir: dir.path().to_path_buf(),
        ..ExperimentConfig::default()
    };
    let (summary, files) = run(&config).unwrap();
    assert_eq!(summary.rows.len(), 2);
    let text = fs::read_to_string(&files.raw_csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("mean_r,none,100,"));
    let seeds: Vec<u64> = summary.rows.iter().map(|r| r.seed).collect();
    assert_eq!(seeds, vec![replication_seed(config.base_seed, 100, 0), replication_seed(config.base_seed, 100, 1)]);
    assert_eq!(fs::read_to_string(&files.summary_csv).unwrap().lines().next(), Some(SUMMARY_HEADER));
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (_, fa) = run(&small_config(a.path())).unwrap();
    let (_, fb) = run(&small_config(b.path())).unwrap();
    assert_eq!(fs::read(&fa.raw_csv).unwrap(), fs::read(&fb.raw_csv).unwrap());
    assert_eq!(fs::read(&fa.summary_csv).unwrap(), fs::read(&fb.summary_csv).unwrap());
}

#[test]
fn summary_is_recomputable_from_the_raw_file() {
    let dir = tempfile::tempdir().unwrap();
    let (summary, files) = run(&small_config(dir.path())).unwrap();
    let rows = read_raw_csv(&fs::read_to_string(&files.raw_csv).unwrap()).unwrap();
    assert_eq!(rows.len(), 2 * 3 * Method::ALL.len());
    for (parsed, original) in rows.iter().zip(&summary.rows) {
        assert_eq!(parsed.method, original.method);
        assert_eq!(parsed.seed, original.seed);
        assert!(parsed.estimate.to_bits() == original.estimate.to_bits() || (parsed.estimate.is_nan() && original.estimate.is_nan()));
    }
    let mut again = Vec::new();
    prl_core::experiment::write_summary_csv(&mut again, &summarize(&rows, summary.truth)).unwrap();
    assert_eq!(again, fs::read(&files.summary_csv).unwrap());
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(&files.manifest).unwrap()).unwrap();
    assert_eq!(manifest["rows"], rows.len());
    assert_eq!(manifest["config"]["policy"], "hard");
}

#[test]
fn failed_estimates_become_nan_rows() {
    let m = noisyobs(0.2);
    let data = sample_dataset(&m.pomdp, &m.behavior, 1, 2, false);
    let config = ExperimentConfig::default();
    let rows = run_methods(&config, &m.easy, &data, 3, 2, 7);
    assert_eq!(rows.len(), Method::ALL.len());
    for r in &rows {
        if r.method.score_kind().is_some() {
            assert!(r.estimate.is_nan() && r.error.is_some(), "{r:?}");
        } else {
            assert!(r.error.is_none() || r.estimate.is_nan());
        }
    }
    let mut out = Vec::new();
    write_raw_csv(&mut out, &rows).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("dr,dr,2,7,NaN,"));
    let summary = summarize(&read_raw_csv(&text).unwrap(), 1.0);
    let dr = summary.iter().find(|s| s.method == Method::Dr).unwrap();
    assert_eq!((dr.reps, dr.excluded), (0, 1));
}

#[test]
fn bad_configs_name_the_field() {
    for (json, field) in [
        (r#"{"policy":"greedy"}"#, "policy"),
        (r#"{"n_grid":[]}"#, "n_grid"),
        (r#"{"n_grid":[3]}"#, "n_grid"),
        (r#"{"alpha":-1}"#, "alpha"),
        (r#"{"scheme":"two_views"}"#, "scheme"),
    ] {
        let err = ExperimentConfig::from_json(json).and_then(|c| c.validate()).unwrap_err();
        assert!(err.to_string().contains(field), "{json}: {err}");
    }
    assert!(ExperimentConfig::from_json(r#"{"polcy":"easy"}"#).is_err());
}
