//! Command-level I/O behavior: output schemas, exit codes, cross-command
//! consistency, and thread-count independence.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aif"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("aif_cli_{tag}_{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn small_config(dir: &Path, variant: &str, alphas: &str, t: usize) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(
        &path,
        format!(
            r#"
variant = "{variant}"
alphas = {alphas}
nu = 0.2
oracle = "regression"
seed = 11
output = "{}"

[data]
kind = "synthetic"
n = 40
m = 10
d = 5
q = 0.8

[overrides]
t = {t}
"#,
            dir.join("out").display()
        ),
    )
    .unwrap();
    path
}

fn read_csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    lines.next(); // header
    lines
        .map(|l| l.split(',').map(|f| f.to_string()).collect())
        .collect()
}

#[test]
fn train_writes_expected_files_and_report_roundtrips() {
    let dir = temp_dir("train");
    let config = small_config(&dir, "aif", "[0.05, 0.1]", 60);
    let status = bin().args(["train", "--config"]).arg(&config).status().unwrap();
    assert!(status.success());

    let out = dir.join("out");
    let spread = read_csv_rows(&out.join("spread.csv"));
    assert_eq!(spread.len(), 2 * 40); // |alphas| * n rows

    for alpha in ["0.05", "0.1"] {
        let adir = out.join(format!("alpha_{alpha}"));
        let trajectory = read_csv_rows(&adir.join("trajectory.csv"));
        assert_eq!(trajectory.len(), 60);
        let report: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(adir.join("report.json")).unwrap()).unwrap();
        assert!(adir.join("model.json").exists());

        // Recomputing the max deviation from spread.csv matches report.json.
        let gamma = report["gamma_hat"].as_f64().unwrap();
        let max_dev: f64 = spread
            .iter()
            .filter(|row| row[0] == alpha)
            .map(|row| (row[2].parse::<f64>().unwrap() - gamma).abs())
            .fold(0.0, f64::max);
        let reported = report["fairness"]["max_abs_deviation"].as_f64().unwrap();
        assert!((max_dev - reported).abs() < 1e-9);

        // Every emitted number is finite.
        for row in trajectory {
            for field in &row[1..] {
                assert!(field.parse::<f64>().unwrap().is_finite());
            }
        }
    }
}

#[test]
fn baseline_grid_shape_and_random_row() {
    let dir = temp_dir("baseline");
    let config = dir.join("config.toml");
    fs::write(
        &config,
        format!(
            r#"
variant = "aif"
alphas = [0.1]
nu = 0.2
oracle = "regression"
seed = 11
output = "{}"
omegas = [0.0, 0.5, 1.0]

[data]
kind = "synthetic"
n = 40
m = 10
d = 5
q = 0.8

[overrides]
t = 60
"#,
            dir.join("out").display()
        ),
    )
    .unwrap();
    let status = bin().args(["baseline", "--config"]).arg(&config).status().unwrap();
    assert!(status.success());

    let rows = read_csv_rows(&dir.join("out").join("baseline.csv"));
    assert_eq!(rows.len(), 3 * 40);
    // omega = 1 rows are exactly one half.
    for row in rows.iter().filter(|r| r[0] == "1") {
        assert_eq!(row[2], "0.5");
    }
    // Affine midpoint: rate(0.5) = 0.5 * rate(0) + 0.25 per individual.
    for i in 0..40 {
        let r0: f64 = rows[i][2].parse().unwrap();
        let r5: f64 = rows[40 + i][2].parse().unwrap();
        assert!((r5 - (0.5 * r0 + 0.25)).abs() < 1e-12);
    }
}

#[test]
fn baseline_at_zero_matches_unconstrained_training() {
    // With a slack constraint the trained model stays close to per-task ERM,
    // whose rates are the baseline's omega = 0 row.
    let dir = temp_dir("cross");
    let config = small_config(&dir, "aif", "[0.4]", 120);
    assert!(bin().args(["train", "--config"]).arg(&config).status().unwrap().success());
    assert!(bin().args(["baseline", "--config"]).arg(&config).status().unwrap().success());

    let out = dir.join("out");
    let report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(out.join("alpha_0.4").join("report.json")).unwrap(),
    )
    .unwrap();
    let trained_err = report["fairness"]["overall_error"].as_f64().unwrap();
    let baseline = read_csv_rows(&out.join("baseline.csv"));
    let erm_err: f64 = baseline
        .iter()
        .find(|r| r[0] == "0")
        .unwrap()[3]
        .parse()
        .unwrap();
    assert!(
        (trained_err - erm_err).abs() < 0.02,
        "trained {trained_err} vs erm {erm_err}"
    );
}

#[test]
fn apply_on_training_columns_reproduces_training_rates() {
    let dir = temp_dir("apply");
    let config = small_config(&dir, "aif", "[0.1]", 60);
    assert!(bin().args(["train", "--config"]).arg(&config).status().unwrap().success());

    // Rebuild the training panel (same spec and seed) to recover its label
    // columns, then feed them back through apply.
    let spec = aif_core::data::SyntheticSpec::new(40, 10, 5, 0.8, 11);
    let panel = aif_core::data::generate_synthetic(&spec, 0).unwrap().panel;
    let mut lines: Vec<String> = Vec::new();
    for i in 0..panel.n() {
        let row: Vec<String> = (0..panel.m())
            .map(|j| panel.task_column(j)[i].to_string())
            .collect();
        lines.push(row.join(","));
    }
    let labels_path = dir.join("labels.csv");
    fs::write(&labels_path, lines.join("\n")).unwrap();

    let out = dir.join("out");
    let apply_out = dir.join("apply_out");
    let status = bin()
        .arg("apply")
        .arg(out.join("alpha_0.1").join("model.json"))
        .arg(&labels_path)
        .arg("--output")
        .arg(&apply_out)
        .status()
        .unwrap();
    assert!(status.success());

    let train_report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(out.join("alpha_0.1").join("report.json")).unwrap(),
    )
    .unwrap();
    let apply_report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(apply_out.join("holdout_report.json")).unwrap(),
    )
    .unwrap();
    let trained: Vec<f64> = train_report["fairness"]["individual_rates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let replayed: Vec<f64> = apply_report["fairness"]["individual_rates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(trained.len(), replayed.len());
    for (a, b) in trained.iter().zip(&replayed) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(apply_out.join("holdout_rates.csv").exists());
}

#[test]
fn exit_codes_cover_config_data_and_shape_errors() {
    let dir = temp_dir("exits");

    // Unparseable config: exit 2.
    let bad = dir.join("bad.toml");
    fs::write(&bad, "variant = \"aif\"\nnot_a_field = 3\n").unwrap();
    let status = bin().args(["train", "--config"]).arg(&bad).status().unwrap();
    assert_eq!(status.code(), Some(2));

    // Missing CSV file: exit 3.
    let missing = dir.join("missing_data.toml");
    fs::write(
        &missing,
        format!(
            r#"
variant = "aif"
alphas = [0.1]
nu = 0.2
oracle = "regression"
seed = 1
output = "{}"

[data]
kind = "csv"
path = "/nonexistent/communities.csv"
n = 5
m = 2
d = 1
"#,
            dir.join("out").display()
        ),
    )
    .unwrap();
    let status = bin().args(["train", "--config"]).arg(&missing).status().unwrap();
    assert_eq!(status.code(), Some(3));

    // Train a tiny model for the apply error cases.
    let config = small_config(&dir, "aif", "[0.1]", 10);
    assert!(bin().args(["train", "--config"]).arg(&config).status().unwrap().success());
    let model = dir.join("out").join("alpha_0.1").join("model.json");

    // Malformed label value: exit 3 with a row/column diagnostic.
    let labels = dir.join("bad_labels.csv");
    let mut rows = vec!["0,1".to_string(); 39];
    rows.push("0,2".to_string());
    fs::write(&labels, rows.join("\n")).unwrap();
    let output = bin()
        .arg("apply")
        .arg(&model)
        .arg(&labels)
        .arg("--output")
        .arg(dir.join("apply_out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("row 40"), "diagnostic missing: {stderr}");
    assert!(stderr.contains("column 2"), "diagnostic missing: {stderr}");

    // Wrong individual count: exit 2.
    let short = dir.join("short_labels.csv");
    fs::write(&short, "0,1\n1,0\n").unwrap();
    let status = bin()
        .arg("apply")
        .arg(&model)
        .arg(&short)
        .arg("--output")
        .arg(dir.join("apply_out2"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = temp_dir("threads");
    let config = small_config(&dir, "fpaif", "[0.1]", 40);

    let out1 = dir.join("run1");
    let out2 = dir.join("run2");
    assert!(bin()
        .args(["train", "--config"])
        .arg(&config)
        .args(["--output"])
        .arg(&out1)
        .args(["--threads", "1"])
        .status()
        .unwrap()
        .success());
    assert!(bin()
        .args(["train", "--config"])
        .arg(&config)
        .args(["--output"])
        .arg(&out2)
        .args(["--threads", "4"])
        .status()
        .unwrap()
        .success());

    for file in ["spread.csv", "alpha_0.1/trajectory.csv"] {
        let a = fs::read(out1.join(file)).unwrap();
        let b = fs::read(out2.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs across thread counts");
    }
}
