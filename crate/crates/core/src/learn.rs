//! Full training drivers for both fairness variants, round-batch
//! scheduling, average-play assembly, and application of the learned
//! task-to-classifier mapping.
//!
//! A run plays T rounds of the zero-sum game: the Auditor's dual state
//! induces per-individual weights, the Learner best-responds with one
//! hypothesis per task plus a gamma bit, and the Auditor takes an
//! exponentiated-gradient step on the fairness violations of that play
//! (measured on a fresh task batch or on the full task set). The averages
//! of the round plays form the output, and the archive of weight vectors
//! defines the mapping for unseen tasks.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    aif_csc_instance, auditor_update, best_response_aif, best_response_fp, fp_csc_instance,
    rho_hat, DualState, ViolationVector,
};
use crate::error::{Error, Result};
use crate::model::{
    BatchMode, FeatureMatrix, HyperParams, Hypothesis, Panel, PsiHat, RandomizedClassifier,
    Variant,
};
use crate::oracle::CscOracle;

/// Per-round trajectory record.
///
/// `overall_error` and `max_violation` describe the running-average play
/// (the uniform mixture of the first t round hypotheses, i.e. the model the
/// run would output if stopped at round t) over all m tasks regardless of
/// batch mode; `max_violation` is the spread (max minus min) of the
/// variant's per-individual rates. `gamma_t` and `lambda_l1` are the
/// round's own plays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub overall_error: f64,
    pub max_violation: f64,
    pub gamma_t: u8,
    pub lambda_l1: f64,
}

/// Counters for events a run survives but should disclose.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainEvents {
    /// (round, individual) pairs whose dual-update slice had no zero-labeled
    /// task, so the false-positive rate was treated as 0.
    pub zero_rho_skips: usize,
    /// Oracle solutions that came back as a constant classifier.
    pub constant_hypotheses: usize,
}

/// Reproducibility record for one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainManifest {
    pub hyperparams: HyperParams,
    pub oracle: crate::oracle::OracleSpec,
    pub variant: Variant,
    /// Tasks trained every round but excluded from dual updates in
    /// fresh-partition mode.
    pub leftover_tasks: usize,
    pub events: TrainEvents,
}

/// Output of a training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainResult {
    /// One uniform mixture of the T round hypotheses per training task.
    pub p_hat: Vec<RandomizedClassifier>,
    pub gamma_hat: f64,
    pub lambda_hat: Vec<f64>,
    pub psi_hat: PsiHat,
    pub trajectory: Vec<RoundRecord>,
    pub manifest: TrainManifest,
}

/// Splits `m` task indices into `t` disjoint batches of size `m0` by a
/// seeded uniform shuffle. Task indices beyond `m0 * t` are left out of
/// every batch (they are still trained, just never used for dual updates).
pub fn partition_problems(
    m: usize,
    t: usize,
    m0: usize,
    rng: &mut ChaCha20Rng,
) -> Result<Vec<Vec<usize>>> {
    if m0 == 0 {
        return Err(Error::InvalidParameter(
            "fresh_partition requires m0 >= 1".into(),
        ));
    }
    if m0 * t > m {
        return Err(Error::InvalidParameter(format!(
            "cannot draw {t} disjoint batches of size {m0} from {m} tasks"
        )));
    }
    let mut indices: Vec<usize> = (0..m).collect();
    indices.shuffle(rng);
    Ok(indices[..m0 * t].chunks(m0).map(|c| c.to_vec()).collect())
}

/// Predictions of one pure hypothesis per task on every individual:
/// `preds[j][i]`.
fn predictions(features: &FeatureMatrix, hypotheses: &[Hypothesis]) -> Vec<Vec<u8>> {
    hypotheses
        .iter()
        .map(|h| (0..features.n()).map(|i| h.evaluate(features.row(i))).collect())
        .collect()
}

/// Per-individual error rates of a pure play restricted to the given tasks.
fn pure_error_rates(preds: &[Vec<u8>], cols: &[&[u8]], tasks: &[usize], n: usize) -> Vec<f64> {
    let m = tasks.len() as f64;
    (0..n)
        .map(|i| {
            let mut wrong = 0usize;
            for &j in tasks {
                if preds[j][i] != cols[j][i] {
                    wrong += 1;
                }
            }
            wrong as f64 / m
        })
        .collect()
}

/// Per-individual false-positive rates of a pure play restricted to the
/// given tasks, with the slice's own zero-label fractions. Returns the
/// rates and the number of individuals with no zero-labeled task.
fn pure_fp_rates(
    preds: &[Vec<u8>],
    cols: &[&[u8]],
    tasks: &[usize],
    n: usize,
) -> (Vec<f64>, usize) {
    let mut zero_rho = 0usize;
    let rates = (0..n)
        .map(|i| {
            let mut zeros = 0usize;
            let mut fps = 0usize;
            for &j in tasks {
                if cols[j][i] == 0 {
                    zeros += 1;
                    if preds[j][i] == 1 {
                        fps += 1;
                    }
                }
            }
            if zeros == 0 {
                zero_rho += 1;
                0.0
            } else {
                fps as f64 / zeros as f64
            }
        })
        .collect();
    (rates, zero_rho)
}

fn spread(rates: &[f64]) -> f64 {
    let max = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = rates.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}

fn validate_hp(hp: &HyperParams, panel: &Panel) -> Result<()> {
    if !hp.alpha.is_finite() || hp.alpha <= 0.0 || hp.alpha >= 1.0 {
        return Err(Error::InvalidParameter("alpha out of (0,1)".into()));
    }
    let b_ok = hp.b.is_finite() && hp.b > 0.0;
    let eta_ok = hp.eta.is_finite() && hp.eta > 0.0;
    if !b_ok || !eta_ok || hp.t == 0 {
        return Err(Error::InvalidParameter(
            "hyperparameters need B > 0, eta > 0, T >= 1".into(),
        ));
    }
    if hp.batch_mode == BatchMode::FreshPartition && hp.m0 * hp.t > panel.m() {
        return Err(Error::InvalidParameter(
            "fresh_partition schedule exceeds available tasks".into(),
        ));
    }
    Ok(())
}

/// Trains subject to equalized individual error rates.
pub fn train_aif(panel: &Panel, hp: &HyperParams, oracle: &dyn CscOracle) -> Result<TrainResult> {
    train_inner(panel, hp, oracle, Variant::Aif, None)
}

/// Trains subject to equalized individual false-positive rates, using the
/// held-out zero-label estimates `rho_tilde` in the Learner's costs.
pub fn train_fpaif(
    panel: &Panel,
    hp: &HyperParams,
    oracle: &dyn CscOracle,
    rho_tilde: &[f64],
) -> Result<TrainResult> {
    if rho_tilde.len() != panel.n() {
        return Err(Error::DimensionMismatch {
            context: "rho_tilde",
            expected: panel.n(),
            got: rho_tilde.len(),
        });
    }
    if rho_tilde.iter().any(|&r| !r.is_finite() || r <= 0.0 || r > 1.0) {
        return Err(Error::InvalidParameter(
            "rho_tilde entries must lie in (0, 1]".into(),
        ));
    }
    train_inner(panel, hp, oracle, Variant::Fpaif, Some(rho_tilde))
}

fn train_inner(
    panel: &Panel,
    hp: &HyperParams,
    oracle: &dyn CscOracle,
    variant: Variant,
    rho_tilde: Option<&[f64]>,
) -> Result<TrainResult> {
    validate_hp(hp, panel)?;
    let n = panel.n();
    let m = panel.m();
    let cols = panel.all_task_columns();
    let all_tasks: Vec<usize> = (0..m).collect();

    let batches = match hp.batch_mode {
        BatchMode::FullBatch => None,
        BatchMode::FreshPartition => {
            let mut rng = ChaCha20Rng::seed_from_u64(hp.seed);
            Some(partition_problems(m, hp.t, hp.m0, &mut rng)?)
        }
    };
    let leftover_tasks = match &batches {
        Some(b) => m - b.len() * hp.m0,
        None => 0,
    };

    let mut dual = DualState::initial(n, hp.b);
    dual.check_domain()?;

    let mut supports: Vec<Vec<Hypothesis>> = vec![Vec::with_capacity(hp.t); m];
    let mut weight_archive: Vec<Vec<f64>> = Vec::with_capacity(hp.t);
    let mut trajectory: Vec<RoundRecord> = Vec::with_capacity(hp.t);
    let mut lambda_acc = vec![0.0; 2 * n];
    let mut gamma_acc = 0.0;
    let mut events = TrainEvents::default();

    // Running tallies of the averaged play: disagreements and false
    // positives of h_1..h_t per (individual, task), so each round's
    // trajectory statistics cost O(n m).
    let mut err_counts = vec![0u32; n * m];
    let mut fp_counts = vec![0u32; n * m];
    let zero_label_tasks: Vec<usize> = (0..n)
        .map(|i| cols.iter().filter(|col| col[i] == 0).count())
        .collect();

    for t in 1..=hp.t {
        let w = dual.w().to_vec();
        let (hypotheses, gamma_t) = match variant {
            Variant::Aif => best_response_aif(&w, panel, oracle)?,
            Variant::Fpaif => best_response_fp(&w, rho_tilde.unwrap(), panel, oracle)?,
        };
        events.constant_hypotheses += hypotheses
            .iter()
            .filter(|h| matches!(h, Hypothesis::ConstantZero | Hypothesis::ConstantOne))
            .count();

        let preds = predictions(panel.features(), &hypotheses);
        for j in 0..m {
            for i in 0..n {
                if preds[j][i] != cols[j][i] {
                    err_counts[i * m + j] += 1;
                }
                if preds[j][i] == 1 && cols[j][i] == 0 {
                    fp_counts[i * m + j] += 1;
                }
            }
        }
        let denom = (t * m) as f64;
        let avg_errors: Vec<f64> = (0..n)
            .map(|i| {
                err_counts[i * m..(i + 1) * m]
                    .iter()
                    .map(|&c| c as f64)
                    .sum::<f64>()
                    / denom
            })
            .collect();
        let overall_error = avg_errors.iter().sum::<f64>() / n as f64;
        let stat_rates = match variant {
            Variant::Aif => avg_errors,
            Variant::Fpaif => (0..n)
                .map(|i| {
                    if zero_label_tasks[i] == 0 {
                        0.0
                    } else {
                        fp_counts[i * m..(i + 1) * m]
                            .iter()
                            .map(|&c| c as f64)
                            .sum::<f64>()
                            / (t * zero_label_tasks[i]) as f64
                    }
                })
                .collect(),
        };

        let update_tasks: &[usize] = match &batches {
            Some(b) => &b[t - 1],
            None => &all_tasks,
        };
        let slice_rates = match variant {
            Variant::Aif => pure_error_rates(&preds, &cols, update_tasks, n),
            Variant::Fpaif => {
                let (rates, skipped) = pure_fp_rates(&preds, &cols, update_tasks, n);
                events.zero_rho_skips += skipped;
                rates
            }
        };
        let r = ViolationVector::from_rates(&slice_rates, gamma_t as f64, hp.alpha, variant);

        let lambda_l1 = dual.lambda_l1();
        trajectory.push(RoundRecord {
            round: t,
            overall_error,
            max_violation: spread(&stat_rates),
            gamma_t,
            lambda_l1,
        });
        for (acc, &l) in lambda_acc.iter_mut().zip(dual.lambda()) {
            *acc += l;
        }
        gamma_acc += gamma_t as f64;
        weight_archive.push(w);
        for (j, h) in hypotheses.into_iter().enumerate() {
            supports[j].push(h);
        }

        dual = auditor_update(&dual, &r, hp.eta)?;
        dual.check_domain()?;
    }

    let t_f = hp.t as f64;
    let p_hat: Vec<RandomizedClassifier> = supports
        .into_iter()
        .map(RandomizedClassifier::uniform)
        .collect::<Result<_>>()?;
    let lambda_hat: Vec<f64> = lambda_acc.iter().map(|&a| a / t_f).collect();
    let gamma_hat = gamma_acc / t_f;
    if !gamma_hat.is_finite() || !lambda_hat.iter().all(|l| l.is_finite()) {
        return Err(Error::Numeric("non-finite average play".into()));
    }

    let psi_hat = PsiHat {
        features: panel.features().clone(),
        weight_archive,
        oracle_spec: oracle.spec(),
        variant,
        rho_tilde: rho_tilde.map(|r| r.to_vec()),
    };

    Ok(TrainResult {
        p_hat,
        gamma_hat,
        lambda_hat,
        psi_hat,
        trajectory,
        manifest: TrainManifest {
            hyperparams: hp.clone(),
            oracle: oracle.spec(),
            variant,
            leftover_tasks,
            events,
        },
    })
}

/// Applies the learned mapping to a new task, presented as its labels on
/// the training individuals: replays the T cost-sensitive solves against
/// the archived weight vectors and returns their uniform mixture.
///
/// Restricted to a training column this reproduces the trained mixture for
/// that task exactly.
pub fn apply_psi_hat(psi: &PsiHat, new_task_labels: &[u8]) -> Result<RandomizedClassifier> {
    let n = psi.features.n();
    if new_task_labels.len() != n {
        return Err(Error::DimensionMismatch {
            context: "new task labels",
            expected: n,
            got: new_task_labels.len(),
        });
    }
    if new_task_labels.iter().any(|&b| b > 1) {
        return Err(Error::Data("task labels must be 0 or 1".into()));
    }
    let oracle = psi.oracle_spec.build(&psi.features)?;
    let mut support = Vec::with_capacity(psi.weight_archive.len());
    for w in &psi.weight_archive {
        let inst = match psi.variant {
            Variant::Aif => aif_csc_instance(&psi.features, w, new_task_labels),
            Variant::Fpaif => {
                let rho = psi.rho_tilde.as_deref().ok_or_else(|| {
                    Error::InvalidParameter("false-positive mapping without rho_tilde".into())
                })?;
                fp_csc_instance(&psi.features, w, rho, new_task_labels)
            }
        };
        support.push(oracle.solve(&inst));
    }
    RandomizedClassifier::uniform(support)
}

/// Zero-label fractions from a set of held-out label columns, clamped to
/// [1/(2 m0), 1] so the false-positive costs stay bounded.
pub fn rho_tilde_from_holdout(holdout_cols: &[&[u8]], n: usize) -> Result<Vec<f64>> {
    if holdout_cols.is_empty() {
        return Err(Error::InvalidParameter(
            "need at least one held-out task to estimate rho".into(),
        ));
    }
    let m0 = holdout_cols.len() as f64;
    let floor = 1.0 / (2.0 * m0);
    Ok(rho_hat(holdout_cols, n)
        .into_iter()
        .map(|r| r.clamp(floor, 1.0))
        .collect())
}
