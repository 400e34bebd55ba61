use std::fs;
use std::path::Path;
use std::process::Command;

use cmcal_cli::report::aggregate;
use serde_json::Value;

fn cmcal(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_cmcal"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = cmcal(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_then_metrics_and_curves() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("preds.csv");
    let truth = dir.path().join("truth.jsonl");
    ok(&[
        "synth", "--k", "4", "--n", "300", "--t0", "0.5", "--seed", "3", "-o", p(&data),
        "--truth-output", p(&truth),
    ]);
    assert!(fs::read_to_string(&data).unwrap().starts_with("format=probs,K=4\n"));

    let metrics: Value = serde_json::from_str(&ok(&["metrics", p(&data)])).unwrap();
    let truth_metrics: Value = serde_json::from_str(&ok(&["metrics", p(&truth)])).unwrap();
    // sharpened predictions are worse in likelihood than the exact posterior
    assert!(metrics["nll"].as_f64().unwrap() > truth_metrics["nll"].as_f64().unwrap());
    assert_eq!(metrics["coverage_intervals"].as_array().unwrap().len(), 2);

    let curve = ok(&["curves", p(&data), "--cmce-bins", "10"]);
    let mut lines = curve.lines();
    assert_eq!(lines.next(), Some("bin_index,mean_mass,coverage,count"));
    let total: usize = lines
        .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, 4 * 300);
}

#[test]
fn run_writes_consistent_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = dir.path().join("exp.toml");
    fs::write(
        &cfg,
        "synthetic_n = 800\nnum_splits = 3\ncalibrators = [\"MassRescale\", \"TempScaleNLL\"]\n\
         score_kinds = [\"MSP\"]\nalphas = [0.1]\n",
    )
    .unwrap();
    ok(&["run", "--config", p(&cfg), "--output-dir", p(&out), "--seed", "5"]);

    let report: Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config_echo"]["seed"], 5);
    assert_eq!(report["config_echo"]["num_splits"], 3);
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3 * 3);
    for r in rows.iter().filter(|r| r["calibrator"] == "MR[MSP,alpha=0.1]") {
        assert_eq!(r["diagnostics"]["mass_check"], true);
    }

    // summary statistics recomputed from the per-split rows
    for (name, metrics) in report["summary"].as_object().unwrap() {
        for (metric, agg) in metrics.as_object().unwrap() {
            let values: Vec<f64> = rows
                .iter()
                .filter(|r| r["calibrator"] == name.as_str())
                .filter_map(|r| r["report"][metric].as_f64())
                .collect();
            if metric.starts_with("coverage") {
                continue;
            }
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            assert!((agg["mean"].as_f64().unwrap() - mean).abs() <= 1e-12, "{name} {metric}");
            assert!((agg["std"].as_f64().unwrap() - var.sqrt()).abs() <= 1e-12, "{name} {metric}");
            assert_eq!(aggregate(&values).n, values.len());
        }
    }

    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.starts_with("calibrator,metric,mean,std,n\n"));
    assert!(summary.contains("\"MR[MSP,alpha=0.1]\",cmce,"));
    for name in ["Base", "MR_MSP_alpha_0.1", "TempScaling"] {
        let curve = fs::read_to_string(out.join("curves").join(format!("{name}.csv"))).unwrap();
        assert!(curve.lines().count() > 1, "{name}");
    }
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "run", "--synthetic-n", "600", "--num-splits", "2", "--grid-points", "30",
            "--output-dir", p(&out),
        ]);
        out
    };
    let (a, b) = (run("a"), run("b"));
    let mut files = vec!["report.json".to_string(), "summary.csv".to_string()];
    for e in fs::read_dir(a.join("curves")).unwrap() {
        files.push(format!("curves/{}", e.unwrap().file_name().to_str().unwrap()));
    }
    assert!(files.len() > 2 + 5);
    for f in files {
        assert_eq!(fs::read(a.join(&f)).unwrap(), fs::read(b.join(&f)).unwrap(), "{f}");
    }
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "format=probs,K=2\n0.5,0.5,0\n0.6,0.3,1\n").unwrap();
    let out = cmcal(&["metrics", p(&bad)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));

    let out = cmcal(&["run", "--split-fraction", "1.5", "--output-dir", p(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("split_fraction"));

    let out = cmcal(&["metrics", p(&dir.path().join("missing.csv"))]);
    assert!(!out.status.success());
}
