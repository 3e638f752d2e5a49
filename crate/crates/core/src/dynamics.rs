//! One-round game mechanics: fairness-violation vectors, the Lagrangian,
//! the Learner's best responses, and the Auditor's exponentiated-gradient
//! update.
//!
//! The Auditor keeps 2n log-potentials theta (a +/- pair per individual) and
//! plays the dual vector
//!
//! ```text
//! lambda_k = B exp(theta_k) / (1 + sum_k' exp(theta_k'))
//! ```
//!
//! so the l1 norm stays strictly below B. The Learner, handed the induced
//! per-individual weights w_i = lambda_i_plus - lambda_i_minus, decouples
//! into one gamma choice and m independent cost-sensitive solves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FeatureMatrix, Panel, RandomizedClassifier, Variant};
use crate::model::Hypothesis;
use crate::oracle::{CscInstance, CscOracle};

/// The Auditor's state: log-potentials, the dual vector they induce, and
/// the derived per-individual weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualState {
    theta: Vec<f64>,
    lambda: Vec<f64>,
    w: Vec<f64>,
    bound: f64,
}

impl DualState {
    /// Round-one state: theta = 0, so every dual coordinate is B/(2n+1).
    pub fn initial(n: usize, bound: f64) -> Self {
        Self::from_theta(vec![0.0; 2 * n], bound)
    }

    /// Applies the softmax map to the given log-potentials. The shift by
    /// max(0, max theta_k) is an exact algebraic rewrite that keeps the
    /// exponentials bounded; the lone +1 in the denominator becomes
    /// exp(-shift).
    pub fn from_theta(theta: Vec<f64>, bound: f64) -> Self {
        let shift = theta.iter().cloned().fold(0.0_f64, f64::max);
        let mut denom = (-shift).exp();
        for &t in &theta {
            denom += (t - shift).exp();
        }
        let lambda: Vec<f64> = theta.iter().map(|&t| bound * (t - shift).exp() / denom).collect();
        let w: Vec<f64> = lambda.chunks_exact(2).map(|pair| pair[0] - pair[1]).collect();
        Self {
            theta,
            lambda,
            w,
            bound,
        }
    }

    pub fn n(&self) -> usize {
        self.w.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// Per-individual weights w_i = lambda_i_plus - lambda_i_minus.
    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn lambda_l1(&self) -> f64 {
        self.lambda.iter().sum()
    }

    /// Checks the dual domain invariant: lambda >= 0 and ||lambda||_1 <= B,
    /// all entries finite.
    pub fn check_domain(&self) -> Result<()> {
        let mut l1 = 0.0;
        for &l in &self.lambda {
            if !l.is_finite() || l < 0.0 {
                return Err(Error::Numeric(format!("dual coordinate out of domain: {l}")));
            }
            l1 += l;
        }
        if l1 > self.bound {
            return Err(Error::Numeric(format!(
                "dual l1 norm {l1} exceeds bound {}",
                self.bound
            )));
        }
        Ok(())
    }
}

/// The 2n-vector of fairness violations of a play (p, gamma): for each
/// individual the pair (rate_i - gamma - 2 alpha, gamma - rate_i - 2 alpha).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViolationVector {
    pub values: Vec<f64>,
    pub alpha: f64,
    pub variant: Variant,
}

impl ViolationVector {
    pub(crate) fn from_rates(rates: &[f64], gamma: f64, alpha: f64, variant: Variant) -> Self {
        let mut values = Vec::with_capacity(2 * rates.len());
        for &rate in rates {
            values.push(rate - gamma - 2.0 * alpha);
            values.push(gamma - rate - 2.0 * alpha);
        }
        Self {
            values,
            alpha,
            variant,
        }
    }

    pub fn max_component(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Empirical individual error rate of individual `i` under one classifier
/// per task column: the mean over columns of the disagreement mass.
pub fn individual_error(
    features: &FeatureMatrix,
    i: usize,
    classifiers: &[RandomizedClassifier],
    label_cols: &[&[u8]],
) -> Result<f64> {
    if classifiers.len() != label_cols.len() {
        return Err(Error::DimensionMismatch {
            context: "individual_error classifiers vs label columns",
            expected: label_cols.len(),
            got: classifiers.len(),
        });
    }
    let x = features.row(i);
    let mut total = 0.0;
    for (p, col) in classifiers.iter().zip(label_cols) {
        total += p.error_prob(x, col[i]);
    }
    Ok(total / label_cols.len() as f64)
}

/// Error rates for all individuals at once.
pub fn individual_errors(
    features: &FeatureMatrix,
    classifiers: &[RandomizedClassifier],
    label_cols: &[&[u8]],
) -> Result<Vec<f64>> {
    (0..features.n())
        .map(|i| individual_error(features, i, classifiers, label_cols))
        .collect()
}

/// Fraction of the given task columns labeling each individual zero.
pub fn rho_hat(label_cols: &[&[u8]], n: usize) -> Vec<f64> {
    let m = label_cols.len() as f64;
    (0..n)
        .map(|i| label_cols.iter().filter(|col| col[i] == 0).count() as f64 / m)
        .collect()
}

/// Mean false-positive mass per individual: the average over columns of the
/// probability of predicting 1 on a zero-labeled task (not yet normalized
/// by rho).
fn fp_mass(
    features: &FeatureMatrix,
    classifiers: &[RandomizedClassifier],
    label_cols: &[&[u8]],
) -> Vec<f64> {
    let m = label_cols.len() as f64;
    (0..features.n())
        .map(|i| {
            let x = features.row(i);
            let mut mass = 0.0;
            for (p, col) in classifiers.iter().zip(label_cols) {
                if col[i] == 0 {
                    mass += p.prob_one(x);
                }
            }
            mass / m
        })
        .collect()
}

/// Individual false-positive rates over the slice. Individuals with
/// rho_hat_i = 0 have no zero-labeled task and report rate 0; the returned
/// count records how many were skipped that way.
pub fn individual_fp_rates(
    features: &FeatureMatrix,
    classifiers: &[RandomizedClassifier],
    label_cols: &[&[u8]],
    rho: &[f64],
) -> Result<(Vec<f64>, usize)> {
    if classifiers.len() != label_cols.len() {
        return Err(Error::DimensionMismatch {
            context: "fp rates classifiers vs label columns",
            expected: label_cols.len(),
            got: classifiers.len(),
        });
    }
    let mass = fp_mass(features, classifiers, label_cols);
    let mut zero_rho = 0;
    let rates = mass
        .iter()
        .zip(rho)
        .map(|(&m_i, &rho_i)| {
            if rho_i > 0.0 {
                m_i / rho_i
            } else {
                zero_rho += 1;
                0.0
            }
        })
        .collect();
    Ok((rates, zero_rho))
}

/// Individual false-negative rates over the slice; individuals with no
/// one-labeled task report 0.
pub fn individual_fn_rates(
    features: &FeatureMatrix,
    classifiers: &[RandomizedClassifier],
    label_cols: &[&[u8]],
    rho: &[f64],
) -> Result<Vec<f64>> {
    if classifiers.len() != label_cols.len() {
        return Err(Error::DimensionMismatch {
            context: "fn rates classifiers vs label columns",
            expected: label_cols.len(),
            got: classifiers.len(),
        });
    }
    let m = label_cols.len() as f64;
    Ok((0..features.n())
        .map(|i| {
            let x = features.row(i);
            let one_frac = 1.0 - rho[i];
            if one_frac <= 0.0 {
                return 0.0;
            }
            let mut mass = 0.0;
            for (p, col) in classifiers.iter().zip(label_cols) {
                if col[i] == 1 {
                    mass += 1.0 - p.prob_one(x);
                }
            }
            mass / m / one_frac
        })
        .collect())
}

/// Violation vector in the error-rate setting.
pub fn violation_vector_aif(
    features: &FeatureMatrix,
    classifiers: &[RandomizedClassifier],
    gamma: f64,
    label_cols: &[&[u8]],
    alpha: f64,
) -> Result<ViolationVector> {
    let rates = individual_errors(features, classifiers, label_cols)?;
    Ok(ViolationVector::from_rates(&rates, gamma, alpha, Variant::Aif))
}

/// Violation vector in the false-positive setting. `rho` must be the
/// fraction of the slice's columns labeling each individual zero (see
/// [`rho_hat`]); individuals with rho_i = 0 contribute the components of a
/// zero false-positive rate and are counted in the returned tally.
pub fn violation_vector_fp(
    features: &FeatureMatrix,
    classifiers: &[RandomizedClassifier],
    gamma: f64,
    label_cols: &[&[u8]],
    alpha: f64,
    rho: &[f64],
) -> Result<(ViolationVector, usize)> {
    let (rates, zero_rho) = individual_fp_rates(features, classifiers, label_cols, rho)?;
    Ok((
        ViolationVector::from_rates(&rates, gamma, alpha, Variant::Fpaif),
        zero_rho,
    ))
}

/// Lagrangian of the play (p, gamma) against the Auditor's state.
pub fn lagrangian(
    features: &FeatureMatrix,
    classifiers: &[RandomizedClassifier],
    gamma: f64,
    dual: &DualState,
    label_cols: &[&[u8]],
    alpha: f64,
    variant: Variant,
) -> Result<f64> {
    lagrangian_at(
        features,
        classifiers,
        gamma,
        dual.lambda(),
        label_cols,
        alpha,
        variant,
    )
}

/// Lagrangian against an arbitrary dual vector (e.g. the average play,
/// which is inside the ball but not a softmax image): overall empirical
/// error plus lambda . r. For the false-positive variant the violation
/// statistics use the slice's own zero-label fractions.
pub fn lagrangian_at(
    features: &FeatureMatrix,
    classifiers: &[RandomizedClassifier],
    gamma: f64,
    lambda: &[f64],
    label_cols: &[&[u8]],
    alpha: f64,
    variant: Variant,
) -> Result<f64> {
    if lambda.len() != 2 * features.n() {
        return Err(Error::DimensionMismatch {
            context: "lagrangian dual vector",
            expected: 2 * features.n(),
            got: lambda.len(),
        });
    }
    let errors = individual_errors(features, classifiers, label_cols)?;
    let overall = errors.iter().sum::<f64>() / errors.len() as f64;
    let r = match variant {
        Variant::Aif => ViolationVector::from_rates(&errors, gamma, alpha, variant),
        Variant::Fpaif => {
            let rho = rho_hat(label_cols, features.n());
            let (rates, _) = individual_fp_rates(features, classifiers, label_cols, &rho)?;
            ViolationVector::from_rates(&rates, gamma, alpha, variant)
        }
    };
    let mut dot = 0.0;
    for (l, v) in lambda.iter().zip(&r.values) {
        dot += l * v;
    }
    Ok(overall + dot)
}

/// Cost-sensitive instance for one task in the error-rate setting:
/// c1_i = (w_i + 1/n)(1 - f(x_i)), c0_i = (w_i + 1/n) f(x_i).
pub fn aif_csc_instance<'a>(
    features: &'a FeatureMatrix,
    w: &[f64],
    labels: &[u8],
) -> CscInstance<'a> {
    let n = features.n() as f64;
    let cost1 = w
        .iter()
        .zip(labels)
        .map(|(&wi, &f)| (wi + 1.0 / n) * (1.0 - f as f64))
        .collect();
    let cost0 = w
        .iter()
        .zip(labels)
        .map(|(&wi, &f)| (wi + 1.0 / n) * f as f64)
        .collect();
    CscInstance {
        features,
        cost1,
        cost0,
    }
}

/// Cost-sensitive instance for one task in the false-positive setting:
/// c1_i = (w_i / rho_tilde_i + 1/n)(1 - f(x_i)), c0_i = (1/n) f(x_i).
pub fn fp_csc_instance<'a>(
    features: &'a FeatureMatrix,
    w: &[f64],
    rho_tilde: &[f64],
    labels: &[u8],
) -> CscInstance<'a> {
    let n = features.n() as f64;
    let cost1 = w
        .iter()
        .zip(rho_tilde)
        .zip(labels)
        .map(|((&wi, &rho), &f)| (wi / rho + 1.0 / n) * (1.0 - f as f64))
        .collect();
    let cost0 = labels.iter().map(|&f| f as f64 / n).collect();
    CscInstance {
        features,
        cost1,
        cost0,
    }
}

/// Gamma rule shared by both best responses: 1 iff the weights sum strictly
/// positive.
pub fn gamma_best_response(w: &[f64]) -> u8 {
    u8::from(w.iter().sum::<f64>() > 0.0)
}

fn solve_all_tasks<'a, F>(panel: &'a Panel, oracle: &dyn CscOracle, build: F) -> Vec<Hypothesis>
where
    F: Fn(&'a Panel, usize) -> CscInstance<'a> + Sync,
{
    // Task solves are independent; results are assembled in task order so
    // parallel and sequential execution agree bit for bit.
    (0..panel.m())
        .into_par_iter()
        .map(|j| oracle.solve(&build(panel, j)))
        .collect()
}

/// The Learner's best response in the error-rate setting: the gamma rule
/// plus one cost-sensitive solve per task.
pub fn best_response_aif(
    w: &[f64],
    panel: &Panel,
    oracle: &dyn CscOracle,
) -> Result<(Vec<Hypothesis>, u8)> {
    if w.len() != panel.n() {
        return Err(Error::DimensionMismatch {
            context: "best response weights",
            expected: panel.n(),
            got: w.len(),
        });
    }
    let gamma = gamma_best_response(w);
    let hypotheses = solve_all_tasks(panel, oracle, |p, j| {
        aif_csc_instance(p.features(), w, p.task_column(j))
    });
    Ok((hypotheses, gamma))
}

/// The Learner's approximate best response in the false-positive setting,
/// driven by the held-out zero-label estimates `rho_tilde`.
pub fn best_response_fp(
    w: &[f64],
    rho_tilde: &[f64],
    panel: &Panel,
    oracle: &dyn CscOracle,
) -> Result<(Vec<Hypothesis>, u8)> {
    if w.len() != panel.n() {
        return Err(Error::DimensionMismatch {
            context: "best response weights",
            expected: panel.n(),
            got: w.len(),
        });
    }
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
    let gamma = gamma_best_response(w);
    let hypotheses = solve_all_tasks(panel, oracle, |p, j| {
        fp_csc_instance(p.features(), w, rho_tilde, p.task_column(j))
    });
    Ok((hypotheses, gamma))
}

/// One exponentiated-gradient step: theta' = theta + eta * r, then the
/// softmax map back onto the dual ball.
pub fn auditor_update(dual: &DualState, r: &ViolationVector, eta: f64) -> Result<DualState> {
    if r.values.len() != dual.theta.len() {
        return Err(Error::DimensionMismatch {
            context: "auditor update violation vector",
            expected: dual.theta.len(),
            got: r.values.len(),
        });
    }
    let theta: Vec<f64> = dual
        .theta
        .iter()
        .zip(&r.values)
        .map(|(&t, &v)| t + eta * v)
        .collect();
    Ok(DualState::from_theta(theta, dual.bound))
}
