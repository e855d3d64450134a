use std::fs;

use sglde::error::Error;
use sglde::harness::{
    consistency_trace, log_errors, run_complete_experiment, run_experiment,
    run_incomplete_experiment, version, ExperimentConfig,
};
use sglde::io::Format;
use sglde::stats::{mean, SummaryRow};

fn cfg(json: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(json).unwrap()
}

#[test]
fn split_halves_stay_inside_full_run_quantiles() {
    let full = cfg(
        r#"{"kind": "complete", "params": {"alpha": 1, "m": 2, "sigma": 0.05}, "replications": 40, "seed": 21}"#,
    );
    let rep = run_complete_experiment(&full).unwrap();
    assert_eq!(rep.failures, 0);
    let est: Vec<_> = rep
        .replications
        .iter()
        .map(|r| r.estimate.as_ref().unwrap())
        .collect();
    for half in [&est[..20], &est[20..]] {
        let a = mean(&half.iter().map(|e| e.alpha_hat).collect::<Vec<_>>());
        let m = mean(&half.iter().map(|e| e.m_hat).collect::<Vec<_>>());
        let s = mean(&half.iter().map(|e| e.sigma_hat).collect::<Vec<_>>());
        for (x, row) in [(a, &rep.rows[0]), (m, &rep.rows[1]), (s, &rep.rows[2])] {
            assert!(
                row.q_lo <= x && x <= row.q_hi,
                "{} half mean {x} outside [{}, {}]",
                row.parameter,
                row.q_lo,
                row.q_hi
            );
        }
    }
    // Replication r depends only on (seed, r), so a shorter run is a prefix.
    let short = ExperimentConfig {
        replications: 20,
        ..full
    };
    let first = run_complete_experiment(&short).unwrap();
    assert_eq!(first.replications[..], rep.replications[..20]);
}

#[test]
fn too_many_failures_abort() {
    let c = cfg(
        r#"{"kind": "complete", "params": {"alpha": 1, "m": 2, "sigma": 0.05}, "replications": 4,
                   "estimator": {"bracket": [40, 50]}, "seed": 2}"#,
    );
    let err = run_complete_experiment(&c).unwrap_err();
    assert!(
        matches!(
            err,
            Error::TooManyFailures {
                failed: 4,
                total: 4,
                ..
            }
        ),
        "{err}"
    );
    assert!(err.is_numerical());
}

#[test]
fn full_keep_fraction_reproduces_complete_information() {
    let c = cfg(
        r#"{"kind": "incomplete", "params": {"alpha": 0.7, "m": 0.6, "sigma": 0.01},
                   "grid": {"t0": 0, "T": 10, "n": 2000}, "replications": 3, "keep_fractions": [1.0],
                   "em": {"iterations": 2, "n_bridges": 5, "fine_step": 0.005}, "seed": 4}"#,
    );
    let rep = run_incomplete_experiment(&c).unwrap();
    let pick = |rows: &[SummaryRow]| rows.iter().map(|r| (r.pe, r.mse)).collect::<Vec<_>>();
    assert_eq!(pick(&rep.em[0]), pick(&rep.complete));
}

#[test]
fn consistency_final_row_coverage_and_log_error_ordering() {
    let mut covered = 0;
    let mut sigma_smallest = 0;
    for seed in 0..100 {
        let c = cfg(&format!(
            r#"{{"kind": "consistency", "params": {{"alpha": 1, "m": 2, "sigma": 0.05}},
                 "grid": {{"t0": 0, "T": 10, "n": 5000}}, "horizons": [10], "seed": {seed}}}"#
        ));
        let rows = consistency_trace(&c).unwrap();
        let last = rows.last().unwrap();
        let Some((a, m, s)) = last.estimate else {
            continue;
        };
        if (a - 1.0).abs() < 0.1 && (m - 2.0).abs() < 0.5 && (s - 0.05).abs() < 0.005 {
            covered += 1;
        }
        let (la, lm, ls) = log_errors(last, &c.params().unwrap()).unwrap();
        if ls < la && ls < lm {
            sigma_smallest += 1;
        }
    }
    assert!(covered >= 80, "final-row coverage {covered}/100");
    assert!(
        sigma_smallest >= 80,
        "sigma log error smallest in {sigma_smallest}/100"
    );
}

fn header_lines(text: &str) -> Vec<&str> {
    text.lines().take_while(|l| l.starts_with('#')).collect()
}

#[test]
fn artifacts_carry_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        r#"{"kind": "complete", "label": "case3", "params": {"alpha": 1, "m": 2, "sigma": 0.05}, "replications": 3, "seed": 5}"#,
        r#"{"kind": "consistency", "label": "c", "params": {"alpha": 1, "m": 2, "sigma": 0.05}, "grid": {"t0": 0, "T": 10, "n": 2000}, "seed": 5}"#,
        r#"{"kind": "incomplete", "label": "inc", "params": {"alpha": 1, "m": 2, "sigma": 0.05}, "grid": {"t0": 0, "T": 10, "n": 2000}, "replications": 2, "keep_fractions": [0.2, 0.1], "em": {"iterations": 2, "n_bridges": 5}, "seed": 5}"#,
    ];
    let mut names = Vec::new();
    for json in configs {
        let c = cfg(json);
        for file in run_experiment(&c, dir.path(), Format::Csv).unwrap() {
            let text = fs::read_to_string(&file).unwrap();
            let header = header_lines(&text);
            assert!(
                header.contains(&format!("# config_sha256: {}", c.hash()).as_str()),
                "{}",
                file.display()
            );
            assert!(header.contains(&"# seed: 5"));
            assert!(header.contains(&format!("# version: {}", version()).as_str()));
            names.push(file.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    for expected in [
        "table1_case3.csv",
        "estimates_case3.csv",
        "consistency.csv",
        "log_error.csv",
        "table2_inc.csv",
        "em_trace_inc.csv",
        "table3_inc.csv",
        "em_estimates_inc.csv",
    ] {
        assert!(
            names.iter().any(|n| n == expected),
            "missing {expected} in {names:?}"
        );
    }

    let table = fs::read_to_string(dir.path().join("table1_case3.csv")).unwrap();
    let body: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "parameter,truth,pe,q_lo,q_hi,mse,count");
    assert_eq!(body.len(), 4);
    let table3 = fs::read_to_string(dir.path().join("table3_inc.csv")).unwrap();
    let scenarios: Vec<&str> = table3
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(
        scenarios,
        ["CI", "CI", "CI", "20%", "20%", "20%", "10%", "10%", "10%"]
    );
    let consistency = fs::read_to_string(dir.path().join("consistency.csv")).unwrap();
    assert!(consistency
        .lines()
        .any(|l| l == "T,alpha_hat,m_hat,sigma_hat"));
}

#[test]
fn json_format_mirrors_tables() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(
        r#"{"kind": "complete", "label": "j", "params": {"alpha": 1, "m": 2, "sigma": 0.05}, "replications": 2, "seed": 6}"#,
    );
    let files = run_experiment(&c, dir.path(), Format::Json).unwrap();
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&files[0]).unwrap()).unwrap();
    assert_eq!(doc["meta"]["config_sha256"], c.hash());
    assert_eq!(doc["data"]["summary"][1]["parameter"], "m");
    assert_eq!(doc["data"]["replications"].as_array().unwrap().len(), 2);
}

#[test]
fn missing_kind_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(r#"{"params": {"alpha": 1, "m": 2, "sigma": 0.05}}"#);
    let err = run_experiment(&c, dir.path(), Format::Csv).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    assert!(!err.is_numerical());
}
