use std::path::{Path, PathBuf};
use std::process::Command;

use osatcom_cli::{run, validate, ExperimentConfig};

fn examples_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn osatcom(args: &[&str], threads: Option<usize>) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_osatcom"));
    cmd.args(args);
    if let Some(n) = threads {
        cmd.env("OSATCOM_THREADS", n.to_string());
    }
    cmd.output().unwrap()
}

const PULSE: &str = r#"
experiment = "pulse"
output_path = "unused"

[pulse]
bit_period = 1e-10
amplitude = 1.0
papr_th_db = [3.0103, 3.010299956639812]
osnr_tar = 1.0
fiber_norm_sq = 1.0
noise_var = 1e-3
"#;

#[test]
fn shipped_examples_validate_clean() {
    let mut seen = 0;
    for entry in std::fs::read_dir(examples_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            assert_eq!(
                validate(&path).unwrap(),
                Vec::<(String, String)>::new(),
                "{}",
                path.display()
            );
            seen += 1;
        }
    }
    assert!(seen >= 5);
}

#[test]
fn unknown_keys_are_rejected_with_location() {
    let text = PULSE.replace("amplitude = 1.0", "amplitude = 1.0\namplitud = 2.0");
    let err = ExperimentConfig::parse(&text, Path::new("x.toml"))
        .unwrap_err()
        .to_string();
    assert!(err.contains("amplitud"), "{err}");
    assert!(err.contains("line"), "{err}");

    let top = format!("colour = 1\n{PULSE}");
    assert!(ExperimentConfig::parse(&top, Path::new("x.toml")).is_err());
}

#[test]
fn validate_reports_negative_shape() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(examples_dir().join("beamform.toml"))
        .unwrap()
        .replace("m = 0.8", "m = -1.0");
    let path = write_config(dir.path(), "bad.toml", &text);
    let report = validate(&path).unwrap();
    assert!(
        report
            .iter()
            .any(|(name, reason)| name == "beamform.m" && reason.contains("m > 0")),
        "{report:?}"
    );
    let out = osatcom(&["validate", path.to_str().unwrap()], None);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("beamform.m: m > 0"));
}

#[test]
fn validate_flags_infeasible_pulse_before_solving() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(
        dir.path(),
        "p.toml",
        &PULSE.replace("osnr_tar = 1.0", "osnr_tar = 5000.0"),
    );
    let report = validate(&path).unwrap();
    assert!(
        report.iter().any(|(_, reason)| reason.starts_with("infeasible")),
        "{report:?}"
    );
    let mut cfg = ExperimentConfig::load(&path).unwrap();
    cfg.output_path = dir.path().join("out");
    assert!(run(&cfg).is_err());
    assert!(!cfg.output_path.exists());
}

#[test]
fn wrong_or_missing_table_is_invalid() {
    let text = PULSE.replace("experiment = \"pulse\"", "experiment = \"dispersion\"");
    let cfg = ExperimentConfig::parse(&text, Path::new("x.toml")).unwrap();
    let names: Vec<_> = cfg.violations().into_iter().map(|(n, _)| n).collect();
    assert!(names.contains(&"pulse".to_string()) && names.contains(&"dispersion".to_string()));
}

#[test]
fn pulse_run_writes_half_period_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::parse(PULSE, Path::new("p.toml")).unwrap();
    cfg.output_path = dir.path().to_path_buf();
    let report = run(&cfg).unwrap();
    let mut reader = csv::Reader::from_path(&report.csv_path).unwrap();
    assert_eq!(
        reader.headers().unwrap(),
        vec!["papr_th_db", "t1", "kappa", "overlap_prob", "binding"]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    let t1 = |r: &csv::StringRecord| r[1].parse::<f64>().unwrap();
    // 3.0103 dB is 10·log10(2) rounded to four decimals.
    assert!((t1(&rows[0]) / 1e-10 - 0.5).abs() <= 0.5 * (10f64.powf(0.00005 / 10.0) - 1.0));
    assert_eq!(t1(&rows[1]), 0.5e-10);
    assert_eq!(&rows[0][4], "PAPR");

    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(&report.manifest_path).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 0);
    assert_eq!(manifest["rows"], 2);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn single_trial_ber_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(examples_dir().join("ber_sweep.toml"))
        .unwrap()
        .replace("num_cells = [2]", "num_cells = [1]");
    let path = write_config(dir.path(), "ber.toml", &text);
    let out_dir = dir.path().join("out");
    let out = osatcom(
        &[
            "run",
            path.to_str().unwrap(),
            "--trials",
            "1",
            "--out",
            out_dir.to_str().unwrap(),
            "--quiet",
        ],
        None,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_path(out_dir.join("ber.csv")).unwrap();
    assert_eq!(
        reader.headers().unwrap(),
        vec!["snr_db", "num_cells", "xi", "per_cell_ber_0", "network_error"]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 16);
    for row in &rows {
        assert!(row.iter().all(|v| v.parse::<f64>().unwrap().is_finite()));
    }
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = examples_dir().join("ber_crowding.toml");
    let mut outputs = Vec::new();
    for (k, threads) in [1, 4, 4].into_iter().enumerate() {
        let out_dir = dir.path().join(format!("run{k}"));
        let out = osatcom(
            &[
                "run",
                config.to_str().unwrap(),
                "--trials",
                "300",
                "--seed",
                "5",
                "--out",
                out_dir.to_str().unwrap(),
            ],
            Some(threads),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(std::fs::read(out_dir.join("ber.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[1], outputs[2]);
}

#[test]
fn bad_thread_setting_is_rejected() {
    let out = osatcom(&["validate", examples_dir().join("pulse.toml").to_str().unwrap()], None);
    assert!(out.status.success());
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_osatcom"));
    let out = cmd
        .args(["validate", examples_dir().join("pulse.toml").to_str().unwrap()])
        .env("OSATCOM_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn every_experiment_runs_at_small_scale() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["pulse", "dispersion", "beamform", "convergence", "suzuki_beamform"] {
        let mut cfg = ExperimentConfig::load(&examples_dir().join(format!("{name}.toml"))).unwrap();
        cfg.output_path = dir.path().join(name);
        if let Some(c) = cfg.convergence.as_mut() {
            c.runs = 3;
            c.budgets = vec![1, 100];
        }
        let report = run(&cfg).unwrap();
        let mut reader = csv::Reader::from_path(&report.csv_path).unwrap();
        assert!(reader.records().count() > 0, "{name}");
    }
}
