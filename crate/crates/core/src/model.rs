//! Shared domain types: training panels, hypotheses, randomized classifiers,
//! hyperparameters, the learned task-to-classifier mapping, and fairness
//! reports.
//!
//! All types are immutable values after construction; updates build new
//! values. Every accumulation over individuals or tasks in this crate runs
//! left to right so trajectories are bit-reproducible for a fixed seed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::OracleSpec;

/// Row-major dense feature matrix: `n` individuals by `d` features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl FeatureMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidParameter("feature matrix needs n >= 1".into()));
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(Error::InvalidParameter("feature matrix needs d >= 1".into()));
        }
        let n = rows.len();
        let mut data = Vec::with_capacity(n * d);
        for row in &rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    context: "feature row",
                    expected: d,
                    got: row.len(),
                });
            }
            for &v in row {
                if !v.is_finite() {
                    return Err(Error::Data("non-finite feature value".into()));
                }
            }
            data.extend_from_slice(row);
        }
        Ok(Self { data, n, d })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// A deterministic binary classifier.
///
/// Linear-threshold hypotheses carry `d + 1` coefficients (weights followed
/// by an intercept) and predict 1 iff the score is strictly positive; a
/// score of exactly zero predicts 0. The two constant classifiers are always
/// representable so that cost-sensitive solvers have trivial fallbacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hypothesis {
    ConstantZero,
    ConstantOne,
    LinearThreshold { coefficients: Vec<f64> },
}

impl Hypothesis {
    /// Evaluates the hypothesis on one feature vector, returning 0 or 1.
    pub fn evaluate(&self, x: &[f64]) -> u8 {
        match self {
            Hypothesis::ConstantZero => 0,
            Hypothesis::ConstantOne => 1,
            Hypothesis::LinearThreshold { coefficients } => {
                assert_eq!(
                    coefficients.len(),
                    x.len() + 1,
                    "linear threshold expects d+1 coefficients"
                );
                let mut score = coefficients[x.len()];
                for k in 0..x.len() {
                    score += coefficients[k] * x[k];
                }
                u8::from(score > 0.0)
            }
        }
    }
}

/// A finite mixture of hypotheses with nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizedClassifier {
    support: Vec<Hypothesis>,
    weights: Vec<f64>,
}

impl RandomizedClassifier {
    pub const WEIGHT_SUM_TOL: f64 = 1e-12;

    pub fn new(support: Vec<Hypothesis>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidParameter("empty mixture support".into()));
        }
        if support.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                context: "mixture weights",
                expected: support.len(),
                got: weights.len(),
            });
        }
        let mut sum = 0.0;
        for &w in &weights {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidParameter(
                    "mixture weights must be finite and nonnegative".into(),
                ));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > Self::WEIGHT_SUM_TOL {
            return Err(Error::InvalidParameter(format!(
                "mixture weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self { support, weights })
    }

    /// Uniform mixture over the given hypotheses.
    pub fn uniform(support: Vec<Hypothesis>) -> Result<Self> {
        let t = support.len();
        if t == 0 {
            return Err(Error::InvalidParameter("empty mixture support".into()));
        }
        let w = 1.0 / t as f64;
        Ok(Self {
            support,
            weights: vec![w; t],
        })
    }

    /// A single hypothesis played with probability one.
    pub fn pure(h: Hypothesis) -> Self {
        Self {
            support: vec![h],
            weights: vec![1.0],
        }
    }

    pub fn support(&self) -> &[Hypothesis] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Probability mass on predicting 1 for `x`.
    pub fn prob_one(&self, x: &[f64]) -> f64 {
        let mut p = 0.0;
        for (h, &w) in self.support.iter().zip(&self.weights) {
            if h.evaluate(x) == 1 {
                p += w;
            }
        }
        p
    }

    /// Probability of disagreeing with the given label on `x`.
    pub fn error_prob(&self, x: &[f64], label: u8) -> f64 {
        let p1 = self.prob_one(x);
        if label == 1 {
            1.0 - p1
        } else {
            p1
        }
    }
}

/// Training data: `n` individuals with `d` features and an `n x m` binary
/// label matrix, one column per task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Panel {
    features: FeatureMatrix,
    /// Column-major labels: `labels[j][i]` is task j's label for individual i.
    labels: Vec<Vec<u8>>,
    individual_ids: Vec<String>,
    task_ids: Vec<String>,
}

impl Panel {
    pub fn new(
        features: FeatureMatrix,
        labels: Vec<Vec<u8>>,
        individual_ids: Vec<String>,
        task_ids: Vec<String>,
    ) -> Result<Self> {
        let n = features.n();
        if labels.is_empty() {
            return Err(Error::InvalidParameter("panel needs m >= 1 tasks".into()));
        }
        for col in &labels {
            if col.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "label column",
                    expected: n,
                    got: col.len(),
                });
            }
            if col.iter().any(|&b| b > 1) {
                return Err(Error::Data("label entries must be 0 or 1".into()));
            }
        }
        if individual_ids.len() != n {
            return Err(Error::DimensionMismatch {
                context: "individual ids",
                expected: n,
                got: individual_ids.len(),
            });
        }
        if task_ids.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "task ids",
                expected: labels.len(),
                got: task_ids.len(),
            });
        }
        Ok(Self {
            features,
            labels,
            individual_ids,
            task_ids,
        })
    }

    pub fn n(&self) -> usize {
        self.features.n()
    }

    pub fn m(&self) -> usize {
        self.labels.len()
    }

    pub fn d(&self) -> usize {
        self.features.d()
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn task_column(&self, j: usize) -> &[u8] {
        &self.labels[j]
    }

    /// All task columns in order.
    pub fn all_task_columns(&self) -> Vec<&[u8]> {
        self.labels.iter().map(|c| c.as_slice()).collect()
    }

    /// The selected task columns in the given index order.
    pub fn task_columns(&self, indices: &[usize]) -> Vec<&[u8]> {
        indices.iter().map(|&j| self.labels[j].as_slice()).collect()
    }

    pub fn individual_ids(&self) -> &[String] {
        &self.individual_ids
    }

    pub fn task_ids(&self) -> &[String] {
        &self.task_ids
    }

    /// A panel over the same individuals restricted to the given tasks.
    pub fn subset_tasks(&self, indices: &[usize]) -> Panel {
        Panel {
            features: self.features.clone(),
            labels: indices.iter().map(|&j| self.labels[j].clone()).collect(),
            individual_ids: self.individual_ids.clone(),
            task_ids: indices.iter().map(|&j| self.task_ids[j].clone()).collect(),
        }
    }
}

/// Which per-individual rate the fairness constraint equalizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Aif,
    Fpaif,
}

/// Whether each round's dual update sees a disjoint fresh batch of tasks or
/// the full task set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    FreshPartition,
    FullBatch,
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub alpha: f64,
    pub nu: f64,
    pub b: f64,
    pub t: usize,
    pub eta: f64,
    pub m0: usize,
    pub batch_mode: BatchMode,
    pub seed: u64,
}

/// Explicit hyperparameter overrides; any field left `None` is derived.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HpOverrides {
    pub b: Option<f64>,
    pub t: Option<usize>,
    pub eta: Option<f64>,
    pub m0: Option<usize>,
    pub batch_mode: Option<BatchMode>,
    pub seed: Option<u64>,
}

/// Derives the dual bound, iteration count, learning rate and per-round
/// batch size from the fairness slack `alpha` and approximation target `nu`:
///
/// ```text
/// B  = (1 + 2 nu) / alpha
/// T  = ceil( 16 B^2 (1 + 2 alpha)^2 ln(2n + 1) / nu^2 )
/// eta = nu / ( 4 (1 + 2 alpha)^2 B )
/// m0 = floor(m / T)
/// ```
///
/// When `floor(m / T) = 0` and no override picks a batch mode, the run
/// falls back to full-batch dual updates with `m0 = m`.
pub fn derive_hyperparams(
    alpha: f64,
    nu: f64,
    n: usize,
    m: usize,
    overrides: &HpOverrides,
) -> Result<HyperParams> {
    if !alpha.is_finite() || alpha <= 0.0 || alpha >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if !nu.is_finite() || nu <= 0.0 || nu > 1.0 {
        return Err(Error::InvalidParameter(format!(
            "nu must lie in (0, 1], got {nu}"
        )));
    }
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameter("need n >= 1 and m >= 1".into()));
    }

    let b = overrides.b.unwrap_or((1.0 + 2.0 * nu) / alpha);
    if !b.is_finite() || b <= 0.0 {
        return Err(Error::InvalidParameter("B must be positive".into()));
    }
    let one_plus_2a_sq = (1.0 + 2.0 * alpha).powi(2);
    let t = match overrides.t {
        Some(t) if t >= 1 => t,
        Some(_) => return Err(Error::InvalidParameter("T must be >= 1".into())),
        None => {
            let raw = 16.0 * b * b * one_plus_2a_sq * ((2 * n + 1) as f64).ln() / (nu * nu);
            raw.ceil() as usize
        }
    };
    let eta = overrides.eta.unwrap_or(nu / (4.0 * one_plus_2a_sq * b));
    if !eta.is_finite() || eta <= 0.0 {
        return Err(Error::InvalidParameter("eta must be positive".into()));
    }

    let derived_m0 = m / t;
    let batch_mode = match overrides.batch_mode {
        Some(mode) => mode,
        None if derived_m0 == 0 => BatchMode::FullBatch,
        None => BatchMode::FreshPartition,
    };
    let m0 = match overrides.m0 {
        Some(m0) => m0,
        None => match batch_mode {
            BatchMode::FullBatch => m,
            BatchMode::FreshPartition => derived_m0,
        },
    };
    if batch_mode == BatchMode::FreshPartition {
        if m0 == 0 {
            return Err(Error::InvalidParameter(format!(
                "fresh_partition requires m0 >= 1 (m = {m}, T = {t})"
            )));
        }
        if m0 * t > m {
            return Err(Error::InvalidParameter(format!(
                "fresh_partition requires m0*T <= m ({m0}*{t} > {m})"
            )));
        }
    }

    Ok(HyperParams {
        alpha,
        nu,
        b,
        t,
        eta,
        m0,
        batch_mode,
        seed: overrides.seed.unwrap_or(0),
    })
}

/// The learned task-to-classifier mapping: the training features plus the
/// archive of per-round dual weight vectors. Applying it to a new task's
/// label column replays the T cost-sensitive solves and returns the uniform
/// mixture of the solutions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PsiHat {
    pub features: FeatureMatrix,
    /// One weight vector over individuals per training round.
    pub weight_archive: Vec<Vec<f64>>,
    pub oracle_spec: OracleSpec,
    pub variant: Variant,
    /// Held-out zero-label rate estimates; present only for the
    /// false-positive variant.
    pub rho_tilde: Option<Vec<f64>>,
}

/// Per-individual rates of a play together with the deviation statistics of
/// the fairness constraint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FairnessReport {
    /// Error rates for `Variant::Aif`, false-positive rates for
    /// `Variant::Fpaif` (individuals with no zero-labeled task report 0).
    pub individual_rates: Vec<f64>,
    pub gamma_hat: f64,
    pub max_abs_deviation: f64,
    /// max rate minus min rate.
    pub spread: f64,
    /// Mean per-individual error rate, regardless of variant.
    pub overall_error: f64,
    /// Smallest s with max_abs_deviation <= s.
    pub satisfied_at: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn overrides_t(t: usize) -> HpOverrides {
        HpOverrides {
            t: Some(t),
            ..HpOverrides::default()
        }
    }

    #[test]
    fn derive_matches_experiment_scale_settings() {
        let hp = derive_hyperparams(0.1, 0.2, 200, 50, &overrides_t(1000)).unwrap();
        assert!((hp.b - 14.0).abs() < 1e-12);
        assert!((hp.eta - 0.2 / (4.0 * 1.44 * 14.0)).abs() < 1e-15);
        assert!((hp.eta - 2.480e-3).abs() < 1e-5);
        assert_eq!(hp.t, 1000);
        // floor(50/1000) = 0 and no explicit batch mode: full batch.
        assert_eq!(hp.batch_mode, BatchMode::FullBatch);
        assert_eq!(hp.m0, 50);
    }

    #[test]
    fn derive_exact_small_case() {
        let hp = derive_hyperparams(0.5, 1.0, 1, 1, &HpOverrides::default()).unwrap();
        assert_eq!(hp.b, 6.0);
        assert_eq!(hp.eta, 1.0 / 96.0);
        // T = ceil(16 * 36 * 4 * ln 3) with nu = 1.
        let expected_t = (16.0 * 36.0 * 4.0 * 3.0_f64.ln()).ceil() as usize;
        assert_eq!(hp.t, expected_t);
        assert_eq!(hp.batch_mode, BatchMode::FullBatch);
    }

    #[test]
    fn derive_falls_back_to_full_batch_when_t_exceeds_m() {
        let hp = derive_hyperparams(0.05, 0.1, 200, 50, &HpOverrides::default()).unwrap();
        // Independent evaluation of the T formula.
        let b = (1.0 + 0.2) / 0.05;
        let t = (16.0 * b * b * 1.1_f64.powi(2) * 401.0_f64.ln() / 0.01).ceil() as usize;
        assert_eq!(hp.t, t);
        assert!(hp.t > 50);
        assert_eq!(hp.batch_mode, BatchMode::FullBatch);
        assert_eq!(hp.m0, 50);
    }

    #[test]
    fn derive_rejects_bad_parameters() {
        assert!(derive_hyperparams(0.0, 0.2, 3, 3, &HpOverrides::default()).is_err());
        assert!(derive_hyperparams(1.0, 0.2, 3, 3, &HpOverrides::default()).is_err());
        assert!(derive_hyperparams(0.1, 0.0, 3, 3, &HpOverrides::default()).is_err());
        assert!(derive_hyperparams(0.1, 1.5, 3, 3, &HpOverrides::default()).is_err());
    }

    #[test]
    fn fresh_partition_needs_nonzero_batches() {
        let ov = HpOverrides {
            t: Some(1000),
            batch_mode: Some(BatchMode::FreshPartition),
            ..HpOverrides::default()
        };
        assert!(derive_hyperparams(0.1, 0.2, 200, 50, &ov).is_err());
    }

    #[test]
    fn constant_hypotheses_ignore_input() {
        let x = vec![3.0, -1.0];
        assert_eq!(Hypothesis::ConstantOne.evaluate(&x), 1);
        assert_eq!(Hypothesis::ConstantZero.evaluate(&x), 0);
    }

    #[test]
    fn linear_threshold_tie_predicts_zero() {
        let h = Hypothesis::LinearThreshold {
            coefficients: vec![0.0, 0.0, 0.0],
        };
        assert_eq!(h.evaluate(&[5.0, -2.0]), 0);
    }

    #[test]
    fn linear_threshold_strict_inequality() {
        // e1 with intercept -0.5 on the unit vector: 1 - 0.5 > 0.
        let h = Hypothesis::LinearThreshold {
            coefficients: vec![1.0, 0.0, 0.0, -0.5],
        };
        assert_eq!(h.evaluate(&[1.0, 0.0, 0.0]), 1);
    }

    #[test]
    fn mixture_weights_must_sum_to_one() {
        let support = vec![Hypothesis::ConstantZero, Hypothesis::ConstantOne];
        assert!(RandomizedClassifier::new(support.clone(), vec![0.5, 0.5]).is_ok());
        assert!(RandomizedClassifier::new(support.clone(), vec![0.6, 0.5]).is_err());
        assert!(RandomizedClassifier::new(support, vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn evaluation_is_deterministic() {
        let h = Hypothesis::LinearThreshold {
            coefficients: vec![0.3, -0.7, 0.1],
        };
        let x = vec![0.123456789, 0.987654321];
        let a = h.evaluate(&x);
        for _ in 0..10 {
            assert_eq!(h.evaluate(&x), a);
        }
    }

    #[test]
    fn panel_rejects_nonbinary_labels() {
        let f = FeatureMatrix::from_rows(vec![vec![1.0], vec![2.0]]).unwrap();
        let err = Panel::new(
            f,
            vec![vec![0, 2]],
            vec!["a".into(), "b".into()],
            vec!["t".into()],
        );
        assert!(err.is_err());
    }
}
