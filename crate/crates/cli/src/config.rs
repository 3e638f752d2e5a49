//! Run configuration: a TOML file selecting the data source, fairness
//! variant, alpha grid, oracle, and hyperparameter overrides.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use aif_core::model::HpOverrides;
use aif_core::Variant;

use crate::AppError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub variant: Variant,
    pub alphas: Vec<f64>,
    pub nu: f64,
    pub oracle: OracleKind,
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Mixture grid for the baseline command; defaults to 0, 0.1, ..., 1.
    #[serde(default)]
    pub omegas: Option<Vec<f64>>,
    pub data: DataConfig,
    #[serde(default)]
    pub overrides: HpOverrides,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Regression,
    Exact,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Synthetic {
        n: usize,
        m: usize,
        d: usize,
        q: f64,
        #[serde(default)]
        group1_fraction: Option<f64>,
        /// Extra generated tasks for zero-label rate estimation
        /// (false-positive variant); defaults to the derived round batch
        /// size.
        #[serde(default)]
        rho_holdout_tasks: Option<usize>,
    },
    Csv {
        path: PathBuf,
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_m")]
        m: usize,
        #[serde(default = "default_d")]
        d: usize,
        #[serde(default)]
        skip_leading_columns: usize,
        /// Leading task columns reserved for zero-label rate estimation and
        /// excluded from training (false-positive variant).
        #[serde(default)]
        rho_reserved_tasks: Option<usize>,
    },
}

fn default_n() -> usize {
    200
}
fn default_m() -> usize {
    50
}
fn default_d() -> usize {
    20
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config: Config =
            toml::from_str(&text).map_err(|e| AppError::Config(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), AppError> {
        if self.alphas.is_empty() {
            return Err(AppError::Config("alphas must be non-empty".into()));
        }
        for &a in &self.alphas {
            if !(a > 0.0 && a < 1.0) {
                return Err(AppError::Config(format!("alpha {a} outside (0, 1)")));
            }
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(AppError::Config(format!("nu {} outside (0, 1]", self.nu)));
        }
        if let Some(omegas) = &self.omegas {
            if omegas.iter().any(|&w| !(0.0..=1.0).contains(&w)) {
                return Err(AppError::Config("omegas must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }

    pub fn omega_grid(&self) -> Vec<f64> {
        self.omegas
            .clone()
            .unwrap_or_else(|| (0..=10).map(|k| k as f64 / 10.0).collect())
    }
}
