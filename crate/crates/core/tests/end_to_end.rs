use std::fs;

use drccbo_core::output::{emit_csv, emit_plot, parse_summary, TRACE_HEADER};
use drccbo_core::{run_experiment, ExperimentConfig, Method, RunStatus};

fn config(setting: &str, out: &std::path::Path) -> ExperimentConfig {
    let text = format!(
        r#"{{
  "problem": "synthetic",
  "setting": "{setting}",
  "methods": ["proposed", "random", "us", "drbo", "drptr", "ccbo"],
  "kernel_f": {{"signal_variance": 1, "length_scale": 3, "noise_variance": 1e-8}},
  "kernel_g": {{"signal_variance": 2500, "length_scale": 4, "noise_variance": 1e-4}},
  "h": 5, "alpha": 0.53, "xi": 1e-12,
  "eta": "zero",
  "beta": {{"fixed": {{"sqrt_beta_f": 3, "sqrt_beta_g": 2}}}},
  "epsilon": {{"fixed": 0.15}},
  "delta": 0.1,
  "iterations": 8,
  "replications": 2,
  "seed": 11,
  "grid_points": 9,
  "baseline": {{"ccbo_mc_samples": 200}},
  "output_dir": "{}"
}}"#,
        out.display()
    );
    ExperimentConfig::from_json(&text).unwrap()
}

#[test]
fn every_method_and_setting_writes_consistent_files() {
    for setting in ["simulator", "fixed", "data-driven"] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(setting, dir.path());
        let result = run_experiment(&cfg).unwrap();
        emit_csv(&result, &cfg.output_dir).unwrap();
        emit_plot(&result, &cfg.output_dir).unwrap();

        let summary = parse_summary(&fs::read_to_string(dir.path().join("summary.csv")).unwrap()).unwrap();
        assert_eq!(summary.len(), Method::ALL.len() * cfg.iterations);
        assert!(summary.iter().all(|r| r.n_reps == 2 && r.setting == setting && r.mean_utility_gap >= 0.0));

        for m in Method::ALL {
            for rep in 0..2 {
                let text = fs::read_to_string(dir.path().join(m.as_str()).join(format!("trace_{rep}.csv"))).unwrap();
                let mut lines = text.lines();
                assert_eq!(lines.next(), Some(TRACE_HEADER));
                let rows: Vec<&str> = lines.collect();
                assert!(!rows.is_empty() && rows.len() <= cfg.iterations);
                let status: RunStatus = rows.last().unwrap().rsplit(',').next().unwrap().parse().unwrap();
                assert!(status.is_terminal());
            }
        }
        let status = fs::read_to_string(dir.path().join("status.csv")).unwrap();
        assert!(status.starts_with("method,status,count\n"));
        let svg = fs::read_to_string(dir.path().join("utility_gap.svg")).unwrap();
        assert_eq!(svg.matches("<polyline").count(), Method::ALL.len());
    }
}

#[test]
fn same_seed_same_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let cfg = config("fixed", dir.path());
        emit_csv(&run_experiment(&cfg).unwrap(), &cfg.output_dir).unwrap();
    }
    for file in ["summary.csv", "status.csv", "ccbo/trace_1.csv", "drptr/trace_0.csv"] {
        assert_eq!(fs::read(a.path().join(file)).unwrap(), fs::read(b.path().join(file)).unwrap(), "{file}");
    }
}
