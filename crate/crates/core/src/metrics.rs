//! Evaluation: fairness reports, the error-optimal/random mixture baseline,
//! the rate decomposition identity, and the approximate-equilibrium audit.

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    best_response_aif, best_response_fp, individual_errors, individual_fn_rates,
    individual_fp_rates, lagrangian_at, rho_hat, ViolationVector,
};
use crate::error::{Error, Result};
use crate::learn::TrainResult;
use crate::model::{FairnessReport, Panel, RandomizedClassifier, Variant};
use crate::oracle::CscOracle;

/// Individual error rates of the per-task error-optimal model mixed with
/// uniformly random classification at each weight omega:
/// rate_i(omega) = (1 - omega) rate_i(0) + omega / 2.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineCurve {
    pub mixture_weights: Vec<f64>,
    /// Per omega, the n individual error rates.
    pub individual_rates: Vec<Vec<f64>>,
    pub overall_error: Vec<f64>,
    pub spread: Vec<f64>,
}

/// Gaps of the average play from a best response by either player, each
/// nonnegative by construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumAudit {
    pub learner_gap: f64,
    pub auditor_gap: f64,
    pub pass: bool,
}

fn spread_of(rates: &[f64]) -> f64 {
    let max = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = rates.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}

/// Per-individual rates of the play versus `gamma_hat`. For the
/// false-positive variant the rates are normalized by the slice's own
/// zero-label fractions; `overall_error` is always the mean plain error.
pub fn fairness_report(
    panel: &Panel,
    classifiers: &[RandomizedClassifier],
    gamma_hat: f64,
    label_cols: &[&[u8]],
    variant: Variant,
) -> Result<FairnessReport> {
    let errors = individual_errors(panel.features(), classifiers, label_cols)?;
    let overall_error = errors.iter().sum::<f64>() / errors.len() as f64;
    let individual_rates = match variant {
        Variant::Aif => errors,
        Variant::Fpaif => {
            let rho = rho_hat(label_cols, panel.n());
            individual_fp_rates(panel.features(), classifiers, label_cols, &rho)?.0
        }
    };
    let max_abs_deviation = individual_rates
        .iter()
        .map(|r| (r - gamma_hat).abs())
        .fold(0.0_f64, f64::max);
    Ok(FairnessReport {
        spread: spread_of(&individual_rates),
        individual_rates,
        gamma_hat,
        max_abs_deviation,
        overall_error,
        satisfied_at: max_abs_deviation,
    })
}

/// Largest residual of the identity
/// error_i = rho_i * fp_i + (1 - rho_i) * fn_i
/// over the individuals, with undefined rates entering at weight zero.
pub fn rho_decomposition_check(
    panel: &Panel,
    classifiers: &[RandomizedClassifier],
    label_cols: &[&[u8]],
) -> Result<f64> {
    let features = panel.features();
    let rho = rho_hat(label_cols, panel.n());
    let errors = individual_errors(features, classifiers, label_cols)?;
    let (fp, _) = individual_fp_rates(features, classifiers, label_cols, &rho)?;
    let fn_rates = individual_fn_rates(features, classifiers, label_cols, &rho)?;
    let mut worst = 0.0_f64;
    for i in 0..panel.n() {
        let recomposed = rho[i] * fp[i] + (1.0 - rho[i]) * fn_rates[i];
        worst = worst.max((errors[i] - recomposed).abs());
    }
    Ok(worst)
}

/// Fits the unconstrained per-task error-optimal hypothesis through the
/// given oracle (zero dual weights) and mixes it with random classification
/// at each of the given weights.
pub fn mixture_baseline(
    panel: &Panel,
    oracle: &dyn CscOracle,
    weights: &[f64],
) -> Result<BaselineCurve> {
    if weights.iter().any(|&w| !(0.0..=1.0).contains(&w)) {
        return Err(Error::InvalidParameter(
            "mixture weights must lie in [0, 1]".into(),
        ));
    }
    let zero_w = vec![0.0; panel.n()];
    let (erm, _) = best_response_aif(&zero_w, panel, oracle)?;
    let erm_plays: Vec<RandomizedClassifier> = erm
        .into_iter()
        .map(RandomizedClassifier::pure)
        .collect();
    let cols = panel.all_task_columns();
    let base_rates = individual_errors(panel.features(), &erm_plays, &cols)?;

    let mut individual_rates = Vec::with_capacity(weights.len());
    let mut overall_error = Vec::with_capacity(weights.len());
    let mut spread = Vec::with_capacity(weights.len());
    for &omega in weights {
        let rates: Vec<f64> = base_rates
            .iter()
            .map(|&r| (1.0 - omega) * r + omega * 0.5)
            .collect();
        overall_error.push(rates.iter().sum::<f64>() / rates.len() as f64);
        spread.push(spread_of(&rates));
        individual_rates.push(rates);
    }
    Ok(BaselineCurve {
        mixture_weights: weights.to_vec(),
        individual_rates,
        overall_error,
        spread,
    })
}

/// Measures how far the average play is from an equilibrium.
///
/// The Learner's gap compares the play's Lagrangian against an exact best
/// response to the average dual vector. The Auditor's gap uses the
/// closed-form maximizer of lambda . r over the l1 ball: all mass B on the
/// most violated coordinate if one is positive, otherwise zero.
pub fn equilibrium_audit(
    result: &TrainResult,
    panel: &Panel,
    exact_oracle: &dyn CscOracle,
    nu_target: f64,
) -> Result<EquilibriumAudit> {
    let hp = &result.manifest.hyperparams;
    let variant = result.manifest.variant;
    let cols = panel.all_task_columns();

    let lambda_hat = &result.lambda_hat;
    let w_hat: Vec<f64> = lambda_hat.chunks_exact(2).map(|p| p[0] - p[1]).collect();

    let l_play = lagrangian_at(
        panel.features(),
        &result.p_hat,
        result.gamma_hat,
        lambda_hat,
        &cols,
        hp.alpha,
        variant,
    )?;

    let (best_h, best_gamma) = match variant {
        Variant::Aif => best_response_aif(&w_hat, panel, exact_oracle)?,
        Variant::Fpaif => {
            // The Lagrangian being audited uses the slice's own zero-label
            // fractions, so the exact deviation also minimizes against
            // them (not the held-out estimates used during training).
            let rho = rho_hat(&cols, panel.n());
            if rho.iter().any(|&r| r <= 0.0) {
                return Err(Error::InvalidParameter(
                    "audit needs every individual to have a zero-labeled task".into(),
                ));
            }
            best_response_fp(&w_hat, &rho, panel, exact_oracle)?
        }
    };
    let best_plays: Vec<RandomizedClassifier> = best_h
        .into_iter()
        .map(RandomizedClassifier::pure)
        .collect();
    let l_best = lagrangian_at(
        panel.features(),
        &best_plays,
        best_gamma as f64,
        lambda_hat,
        &cols,
        hp.alpha,
        variant,
    )?;
    let learner_gap = l_play - l_best;

    let r = violation_of_play(panel, &result.p_hat, result.gamma_hat, hp.alpha, variant, &cols)?;
    let mut lambda_dot_r = 0.0;
    for (l, v) in lambda_hat.iter().zip(&r.values) {
        lambda_dot_r += l * v;
    }
    let auditor_gap = hp.b * r.max_component().max(0.0) - lambda_dot_r;

    Ok(EquilibriumAudit {
        learner_gap,
        auditor_gap,
        pass: learner_gap <= nu_target && auditor_gap <= nu_target,
    })
}

fn violation_of_play(
    panel: &Panel,
    plays: &[RandomizedClassifier],
    gamma: f64,
    alpha: f64,
    variant: Variant,
    cols: &[&[u8]],
) -> Result<ViolationVector> {
    match variant {
        Variant::Aif => {
            crate::dynamics::violation_vector_aif(panel.features(), plays, gamma, cols, alpha)
        }
        Variant::Fpaif => {
            let rho = rho_hat(cols, panel.n());
            Ok(crate::dynamics::violation_vector_fp(
                panel.features(),
                plays,
                gamma,
                cols,
                alpha,
                &rho,
            )?
            .0)
        }
    }
}
