//! The train / baseline / apply commands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use aif_core::data::{self, CsvOptions, DataManifest, SyntheticSpec};
use aif_core::learn::{apply_psi_hat, train_aif, train_fpaif, TrainEvents, TrainResult};
use aif_core::metrics::{fairness_report, mixture_baseline};
use aif_core::model::{derive_hyperparams, HpOverrides, HyperParams};
use aif_core::oracle::{CscOracle, ExactOracle, RegressionOracle};
use aif_core::{FairnessReport, Panel, PsiHat, Variant};

use crate::config::{Config, DataConfig, OracleKind};
use crate::output::{fmt_f64, write_csv, write_json};
use crate::AppError;

/// Format version of the serialized model file.
const MODEL_FORMAT_VERSION: u32 = 1;

/// Serialized mapping: everything needed to classify new tasks presented as
/// label columns over the training individuals.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub gamma_hat: f64,
    pub psi: PsiHat,
}

/// Everything a run needs to be reproduced bit-exactly with the same build.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub variant: Variant,
    pub oracle: OracleKind,
    pub seed: u64,
    pub hyperparams: HyperParams,
    pub leftover_tasks: usize,
    pub events: TrainEvents,
    pub data: DataDescription,
    pub timing_secs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataDescription {
    pub source: String,
    pub n: usize,
    pub m_trained: usize,
    pub d: usize,
    pub rho_estimation_tasks: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<DataManifest>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AlphaReport {
    pub alpha: f64,
    pub gamma_hat: f64,
    pub fairness: FairnessReport,
    pub manifest: RunManifest,
}

struct PreparedData {
    panel: Panel,
    rho_tilde: Option<Vec<f64>>,
    description: DataDescription,
}

fn build_oracle(kind: OracleKind, panel: &Panel) -> Result<Box<dyn CscOracle>, AppError> {
    match kind {
        OracleKind::Regression => Ok(Box::new(RegressionOracle::for_features(panel.features())?)),
        OracleKind::Exact => Ok(Box::new(ExactOracle::for_features(panel.features())?)),
    }
}

fn derive_for(config: &Config, alpha: f64, n: usize, m: usize, seed: u64) -> Result<HyperParams, AppError> {
    let overrides = HpOverrides {
        seed: Some(seed),
        ..config.overrides.clone()
    };
    Ok(derive_hyperparams(alpha, config.nu, n, m, &overrides)?)
}

/// Builds the panel (and, for the false-positive variant, the zero-label
/// estimates from data held out of training).
fn prepare_data(config: &Config, seed: u64) -> Result<PreparedData, AppError> {
    let needs_rho = config.variant == Variant::Fpaif;
    match &config.data {
        DataConfig::Synthetic {
            n,
            m,
            d,
            q,
            group1_fraction,
            rho_holdout_tasks,
        } => {
            let mut spec = SyntheticSpec::new(*n, *m, *d, *q, seed);
            if let Some(g) = group1_fraction {
                spec.group1_fraction = *g;
            }
            let holdout = if needs_rho {
                match rho_holdout_tasks {
                    Some(k) => *k,
                    // Default: one fresh batch of the first alpha's derived
                    // schedule.
                    None => derive_for(config, config.alphas[0], *n, *m, seed)?.m0.max(1),
                }
            } else {
                0
            };
            let generated = data::generate_synthetic(&spec, holdout)?;
            let rho_tilde = if needs_rho {
                let cols: Vec<&[u8]> = generated
                    .holdout_labels
                    .iter()
                    .map(|c| c.as_slice())
                    .collect();
                Some(aif_core::learn::rho_tilde_from_holdout(&cols, *n)?)
            } else {
                None
            };
            Ok(PreparedData {
                description: DataDescription {
                    source: "synthetic".into(),
                    n: *n,
                    m_trained: *m,
                    d: *d,
                    rho_estimation_tasks: holdout,
                    csv: None,
                },
                panel: generated.panel,
                rho_tilde,
            })
        }
        DataConfig::Csv {
            path,
            n,
            m,
            d,
            skip_leading_columns,
            rho_reserved_tasks,
        } => {
            let options = CsvOptions {
                skip_leading_columns: *skip_leading_columns,
            };
            let loaded = data::load_crime_csv(path, *n, *m, *d, &options)?;
            let (panel, rho_tilde, reserved) = if needs_rho {
                let reserved = match rho_reserved_tasks {
                    Some(k) => *k,
                    None => derive_for(config, config.alphas[0], *n, *m, seed)?
                        .m0
                        .clamp(1, m.saturating_sub(1)),
                };
                if reserved == 0 || reserved >= *m {
                    return Err(AppError::Config(format!(
                        "rho_reserved_tasks must lie in [1, m-1], got {reserved}"
                    )));
                }
                let train_indices: Vec<usize> = (reserved..*m).collect();
                let train_panel = loaded.panel.subset_tasks(&train_indices);
                let reserved_indices: Vec<usize> = (0..reserved).collect();
                let reserved_cols = loaded.panel.task_columns(&reserved_indices);
                let rho = aif_core::learn::rho_tilde_from_holdout(&reserved_cols, *n)?;
                (train_panel, Some(rho), reserved)
            } else {
                (loaded.panel, None, 0)
            };
            Ok(PreparedData {
                description: DataDescription {
                    source: format!("csv:{}", path.display()),
                    n: *n,
                    m_trained: panel.m(),
                    d: *d,
                    rho_estimation_tasks: reserved,
                    csv: Some(loaded.manifest),
                },
                panel,
                rho_tilde,
            })
        }
    }
}

fn alpha_dir(output: &Path, alpha: f64) -> PathBuf {
    output.join(format!("alpha_{alpha}"))
}

fn check_report_finite(report: &FairnessReport) -> Result<(), AppError> {
    let mut values = vec![
        report.gamma_hat,
        report.max_abs_deviation,
        report.spread,
        report.overall_error,
        report.satisfied_at,
    ];
    values.extend_from_slice(&report.individual_rates);
    for v in values {
        if !v.is_finite() {
            return Err(AppError::Numeric("non-finite value in fairness report".into()));
        }
    }
    Ok(())
}

pub fn cmd_train(config: &Config, output: &Path, seed: u64) -> Result<(), AppError> {
    let prepared = prepare_data(config, seed)?;
    let panel = &prepared.panel;
    let oracle = build_oracle(config.oracle, panel)?;
    info!(
        "training {:?} on {} individuals x {} tasks ({} features), seed {seed}",
        config.variant,
        panel.n(),
        panel.m(),
        panel.d()
    );

    let mut spread_rows: Vec<String> = Vec::new();
    for &alpha in &config.alphas {
        let started = Instant::now();
        let hp = derive_for(config, alpha, panel.n(), panel.m(), seed)?;
        let result = match config.variant {
            Variant::Aif => train_aif(panel, &hp, oracle.as_ref())?,
            Variant::Fpaif => {
                let rho = prepared.rho_tilde.as_deref().expect("fpaif data has rho");
                train_fpaif(panel, &hp, oracle.as_ref(), rho)?
            }
        };
        let cols = panel.all_task_columns();
        let report = fairness_report(panel, &result.p_hat, result.gamma_hat, &cols, config.variant)?;
        check_report_finite(&report)?;
        info!(
            "alpha {alpha}: overall error {:.4}, spread {:.4}, gamma_hat {:.4} ({:.1}s)",
            report.overall_error,
            report.spread,
            result.gamma_hat,
            started.elapsed().as_secs_f64()
        );

        let dir = alpha_dir(output, alpha);
        write_trajectory(&dir.join("trajectory.csv"), &result)?;
        for (id, rate) in panel.individual_ids().iter().zip(&report.individual_rates) {
            spread_rows.push(format!(
                "{},{},{},{}",
                fmt_f64(alpha)?,
                id,
                fmt_f64(*rate)?,
                fmt_f64(result.gamma_hat)?
            ));
        }

        let manifest = RunManifest {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            variant: config.variant,
            oracle: config.oracle,
            seed,
            hyperparams: hp,
            leftover_tasks: result.manifest.leftover_tasks,
            events: result.manifest.events.clone(),
            data: prepared.description.clone(),
            timing_secs: started.elapsed().as_secs_f64(),
        };
        write_json(
            &dir.join("report.json"),
            &AlphaReport {
                alpha,
                gamma_hat: result.gamma_hat,
                fairness: report,
                manifest,
            },
        )?;
        write_json(
            &dir.join("model.json"),
            &ModelFile {
                format_version: MODEL_FORMAT_VERSION,
                gamma_hat: result.gamma_hat,
                psi: result.psi_hat,
            },
        )?;
    }

    write_csv(
        &output.join("spread.csv"),
        "alpha,individual_id,individual_error,gamma_hat",
        &spread_rows,
    )?;
    Ok(())
}

fn write_trajectory(path: &Path, result: &TrainResult) -> Result<(), AppError> {
    let mut rows = Vec::with_capacity(result.trajectory.len());
    for rec in &result.trajectory {
        rows.push(format!(
            "{},{},{},{},{}",
            rec.round,
            fmt_f64(rec.overall_error)?,
            fmt_f64(rec.max_violation)?,
            rec.gamma_t,
            fmt_f64(rec.lambda_l1)?
        ));
    }
    write_csv(
        path,
        "round,overall_error,max_violation,gamma_t,lambda_l1",
        &rows,
    )
}

pub fn cmd_baseline(config: &Config, output: &Path, seed: u64) -> Result<(), AppError> {
    let prepared = prepare_data(config, seed)?;
    let panel = &prepared.panel;
    let oracle = build_oracle(config.oracle, panel)?;
    let omegas = config.omega_grid();
    info!("baseline over {} mixture weights, seed {seed}", omegas.len());

    let curve = mixture_baseline(panel, oracle.as_ref(), &omegas)?;
    let mut rows = Vec::with_capacity(omegas.len() * panel.n());
    for (k, &omega) in curve.mixture_weights.iter().enumerate() {
        for (id, rate) in panel.individual_ids().iter().zip(&curve.individual_rates[k]) {
            rows.push(format!(
                "{},{},{},{}",
                fmt_f64(omega)?,
                id,
                fmt_f64(*rate)?,
                fmt_f64(curve.overall_error[k])?
            ));
        }
    }
    write_csv(
        &output.join("baseline.csv"),
        "omega,individual_id,individual_error,overall_error",
        &rows,
    )?;
    Ok(())
}

/// Parses a CSV of task label columns over the training individuals: one
/// row per individual, one column per new task, entries 0 or 1, optional
/// header.
fn load_label_columns(path: &Path, n: usize) -> Result<(Vec<String>, Vec<Vec<u8>>), AppError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::Data(format!("cannot read labels {}: {e}", path.display())))?;
    let mut lines = text.lines().peekable();
    let header: Option<Vec<String>> = match lines.peek() {
        Some(first) if first.split(',').any(|f| f.trim().parse::<f64>().is_err()) => {
            let names = first.split(',').map(|s| s.trim().to_string()).collect();
            lines.next();
            Some(names)
        }
        _ => None,
    };

    let mut rows: Vec<Vec<u8>> = Vec::new();
    for (row_idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (col_idx, field) in line.split(',').enumerate() {
            match field.trim() {
                "0" => row.push(0),
                "1" => row.push(1),
                other => {
                    return Err(AppError::Data(format!(
                        "labels row {} column {}: expected 0 or 1, got {other:?}",
                        row_idx + 1,
                        col_idx + 1
                    )))
                }
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(AppError::Data("labels file has no data rows".into()));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(AppError::Data("ragged labels file".into()));
    }
    if rows.len() != n {
        return Err(AppError::Config(format!(
            "labels file has {} rows but the model was trained on {n} individuals",
            rows.len()
        )));
    }
    let names = match header {
        Some(h) if h.len() == width => h,
        _ => (0..width).map(|j| format!("task{j}")).collect(),
    };
    let columns = (0..width)
        .map(|j| rows.iter().map(|r| r[j]).collect())
        .collect();
    Ok((names, columns))
}

#[derive(Debug, Serialize)]
struct ApplyReport {
    gamma_hat: f64,
    tasks: usize,
    fairness: FairnessReport,
}

pub fn cmd_apply(model_path: &Path, labels_path: &Path, output: &Path) -> Result<(), AppError> {
    let text = std::fs::read_to_string(model_path)
        .map_err(|e| AppError::Data(format!("cannot read model {}: {e}", model_path.display())))?;
    let model: ModelFile = serde_json::from_str(&text)
        .map_err(|e| AppError::Data(format!("invalid model file: {e}")))?;
    if model.format_version != MODEL_FORMAT_VERSION {
        return Err(AppError::Config(format!(
            "unsupported model format version {}",
            model.format_version
        )));
    }
    let n = model.psi.features.n();
    let (task_names, columns) = load_label_columns(labels_path, n)?;
    info!("applying mapping to {} tasks over {n} individuals", columns.len());

    let plays: Vec<_> = columns
        .iter()
        .map(|col| apply_psi_hat(&model.psi, col))
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::with_capacity(columns.len() * n);
    for ((name, col), play) in task_names.iter().zip(&columns).zip(&plays) {
        for (i, &label) in col.iter().enumerate() {
            let err = play.error_prob(model.psi.features.row(i), label);
            rows.push(format!("{name},{i},{}", fmt_f64(err)?));
        }
    }
    write_csv(
        &output.join("holdout_rates.csv"),
        "task,individual_index,individual_error",
        &rows,
    )?;

    // The holdout fairness report covers all supplied columns at once.
    let ids: Vec<String> = (0..n).map(|i| format!("i{i:04}")).collect();
    let panel = Panel::new(
        model.psi.features.clone(),
        columns.clone(),
        ids,
        task_names.clone(),
    )?;
    let cols = panel.all_task_columns();
    let report = fairness_report(&panel, &plays, model.gamma_hat, &cols, model.psi.variant)?;
    check_report_finite(&report)?;
    write_json(
        &output.join("holdout_report.json"),
        &ApplyReport {
            gamma_hat: model.gamma_hat,
            tasks: columns.len(),
            fairness: report,
        },
    )?;
    Ok(())
}
