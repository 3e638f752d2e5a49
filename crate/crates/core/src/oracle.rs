//! Cost-sensitive classification oracles.
//!
//! A CSC instance assigns each individual a cost for being predicted 1 and a
//! cost for being predicted 0; an oracle returns a hypothesis minimizing the
//! total cost. Costs may be negative (dual weights push them below zero), so
//! nothing here assumes nonnegativity.
//!
//! Two implementations: a linear-regression heuristic that predicts the two
//! cost vectors and thresholds on the cheaper one, and an exact enumeration
//! oracle over a finite pool for verification at small scale.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FeatureMatrix, Hypothesis};

/// Max n*d accepted by `make_threshold_pool`.
pub const POOL_GUARD: usize = 10_000;

/// One cost-sensitive classification problem over a shared feature matrix.
#[derive(Debug, Clone)]
pub struct CscInstance<'a> {
    pub features: &'a FeatureMatrix,
    /// Cost of predicting 1 on individual i.
    pub cost1: Vec<f64>,
    /// Cost of predicting 0 on individual i.
    pub cost0: Vec<f64>,
}

impl<'a> CscInstance<'a> {
    pub fn new(features: &'a FeatureMatrix, cost1: Vec<f64>, cost0: Vec<f64>) -> Result<Self> {
        if cost1.len() != features.n() {
            return Err(Error::DimensionMismatch {
                context: "cost1",
                expected: features.n(),
                got: cost1.len(),
            });
        }
        if cost0.len() != features.n() {
            return Err(Error::DimensionMismatch {
                context: "cost0",
                expected: features.n(),
                got: cost0.len(),
            });
        }
        Ok(Self {
            features,
            cost1,
            cost0,
        })
    }

    pub fn n(&self) -> usize {
        self.features.n()
    }
}

/// Total cost of playing `h` on the instance:
/// sum_i c1_i h(x_i) + c0_i (1 - h(x_i)).
pub fn csc_cost(h: &Hypothesis, inst: &CscInstance<'_>) -> f64 {
    let mut total = 0.0;
    for i in 0..inst.n() {
        if h.evaluate(inst.features.row(i)) == 1 {
            total += inst.cost1[i];
        } else {
            total += inst.cost0[i];
        }
    }
    total
}

/// Identifies an oracle together with everything needed to rebuild it for
/// the stored training features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "oracle", rename_all = "snake_case")]
pub enum OracleSpec {
    Regression,
    Exact { pool: Vec<Hypothesis> },
}

impl OracleSpec {
    /// Rebuilds the oracle bound to the given features. Deterministic:
    /// identical features and spec produce a bit-identical oracle.
    pub fn build(&self, features: &FeatureMatrix) -> Result<Box<dyn CscOracle>> {
        match self {
            OracleSpec::Regression => Ok(Box::new(RegressionOracle::for_features(features)?)),
            OracleSpec::Exact { pool } => Ok(Box::new(ExactOracle::with_pool(pool.clone())?)),
        }
    }
}

/// A deterministic cost-sensitive solver. Implementations are pure: the same
/// instance always yields the same hypothesis, coefficients bit-equal.
pub trait CscOracle: Send + Sync {
    fn solve(&self, inst: &CscInstance<'_>) -> Hypothesis;
    fn spec(&self) -> OracleSpec;
}

/// The linear-threshold heuristic: fit ordinary least squares predictors for
/// the two cost vectors, predict the label with the lower predicted cost,
/// and fall back to a constant classifier whenever one is cheaper.
///
/// The pseudo-inverse of the intercept-augmented design matrix is
/// precomputed once per feature matrix, so each solve is two mat-vecs.
pub struct RegressionOracle {
    pinv: DMatrix<f64>,
    n: usize,
    d: usize,
}

impl RegressionOracle {
    pub fn for_features(features: &FeatureMatrix) -> Result<Self> {
        let n = features.n();
        let d = features.d();
        let mut design = DMatrix::zeros(n, d + 1);
        for i in 0..n {
            let row = features.row(i);
            for k in 0..d {
                design[(i, k)] = row[k];
            }
            design[(i, d)] = 1.0;
        }
        let svd = design.svd(true, true);
        let sv_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
        // Minimum-norm least squares: zero out singular values below the
        // usual rank tolerance.
        let eps = sv_max * f64::EPSILON * (n.max(d + 1) as f64);
        let pinv = svd
            .pseudo_inverse(eps)
            .map_err(|e| Error::Numeric(format!("pseudo-inverse failed: {e}")))?;
        Ok(Self { pinv, n, d })
    }

    /// Least-squares coefficients (weights then intercept) predicting the
    /// given per-individual target vector from the features.
    fn fit(&self, target: &[f64]) -> DVector<f64> {
        &self.pinv * DVector::from_column_slice(target)
    }
}

impl CscOracle for RegressionOracle {
    fn solve(&self, inst: &CscInstance<'_>) -> Hypothesis {
        assert_eq!(inst.n(), self.n, "oracle built for a different panel");
        assert_eq!(inst.features.d(), self.d);
        let beta1 = self.fit(&inst.cost1);
        let beta0 = self.fit(&inst.cost0);
        // Predict 1 iff predicted cost0 - cost1 > 0; ties predict 0.
        let coefficients: Vec<f64> = (0..=self.d).map(|k| beta0[k] - beta1[k]).collect();
        let candidate = Hypothesis::LinearThreshold { coefficients };

        let mut best = candidate;
        let mut best_cost = csc_cost(&best, inst);
        for fallback in [Hypothesis::ConstantZero, Hypothesis::ConstantOne] {
            let cost = csc_cost(&fallback, inst);
            if cost < best_cost {
                best = fallback;
                best_cost = cost;
            }
        }
        best
    }

    fn spec(&self) -> OracleSpec {
        OracleSpec::Regression
    }
}

/// Exact argmin of the CSC cost over a finite pool; ties resolve to the
/// lowest pool index.
pub struct ExactOracle {
    pool: Vec<Hypothesis>,
}

impl ExactOracle {
    pub fn with_pool(pool: Vec<Hypothesis>) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::EmptyPool);
        }
        Ok(Self { pool })
    }

    /// Exact oracle over the axis-aligned threshold pool of the features.
    pub fn for_features(features: &FeatureMatrix) -> Result<Self> {
        Self::with_pool(make_threshold_pool(features)?)
    }

    pub fn pool(&self) -> &[Hypothesis] {
        &self.pool
    }
}

impl CscOracle for ExactOracle {
    fn solve(&self, inst: &CscInstance<'_>) -> Hypothesis {
        let mut best = 0;
        let mut best_cost = csc_cost(&self.pool[0], inst);
        for (idx, h) in self.pool.iter().enumerate().skip(1) {
            let cost = csc_cost(h, inst);
            if cost < best_cost {
                best = idx;
                best_cost = cost;
            }
        }
        self.pool[best].clone()
    }

    fn spec(&self) -> OracleSpec {
        OracleSpec::Exact {
            pool: self.pool.clone(),
        }
    }
}

/// Enumerates both constant classifiers plus, per coordinate, both
/// orientations of an axis-aligned threshold at every midpoint between
/// consecutive distinct values and one unit beyond each extreme.
///
/// Ordering is fixed: constants first, then ascending (coordinate,
/// threshold, orientation) with the greater-than orientation before
/// less-than.
pub fn make_threshold_pool(features: &FeatureMatrix) -> Result<Vec<Hypothesis>> {
    let n = features.n();
    let d = features.d();
    if n * d > POOL_GUARD {
        return Err(Error::PoolGuardExceeded(n * d, POOL_GUARD));
    }
    let mut pool = vec![Hypothesis::ConstantZero, Hypothesis::ConstantOne];
    for k in 0..d {
        let mut values: Vec<f64> = (0..n).map(|i| features.row(i)[k]).collect();
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite features"));
        values.dedup();
        let mut thresholds = Vec::with_capacity(values.len() + 1);
        thresholds.push(values[0] - 1.0);
        for pair in values.windows(2) {
            thresholds.push(0.5 * (pair[0] + pair[1]));
        }
        thresholds.push(values[values.len() - 1] + 1.0);
        for &t in &thresholds {
            // x_k > t
            let mut gt = vec![0.0; d + 1];
            gt[k] = 1.0;
            gt[d] = -t;
            pool.push(Hypothesis::LinearThreshold { coefficients: gt });
            // x_k < t
            let mut lt = vec![0.0; d + 1];
            lt[k] = -1.0;
            lt[d] = t;
            pool.push(Hypothesis::LinearThreshold { coefficients: lt });
        }
    }
    Ok(pool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn features_1d(values: &[f64]) -> FeatureMatrix {
        FeatureMatrix::from_rows(values.iter().map(|&v| vec![v]).collect()).unwrap()
    }

    fn labelings(pool: &[Hypothesis], features: &FeatureMatrix) -> BTreeSet<Vec<u8>> {
        pool.iter()
            .map(|h| (0..features.n()).map(|i| h.evaluate(features.row(i))).collect())
            .collect()
    }

    #[test]
    fn constant_costs_sum_the_matching_vector() {
        let f = features_1d(&[0.0, 1.0, 2.0]);
        let inst = CscInstance::new(&f, vec![1.0, 2.0, 3.0], vec![10.0, 20.0, 30.0]).unwrap();
        assert_eq!(csc_cost(&Hypothesis::ConstantOne, &inst), 6.0);
        assert_eq!(csc_cost(&Hypothesis::ConstantZero, &inst), 60.0);
    }

    #[test]
    fn per_row_cheapest_labeling_costs_zero() {
        let f = features_1d(&[-1.0, 1.0]);
        let inst = CscInstance::new(&f, vec![1.0, 0.0], vec![0.0, 1.0]).unwrap();
        // x > 0 labels (0, 1).
        let h = Hypothesis::LinearThreshold {
            coefficients: vec![1.0, 0.0],
        };
        assert_eq!(csc_cost(&h, &inst), 0.0);
    }

    #[test]
    fn exact_oracle_picks_cheaper_constant() {
        let f = features_1d(&[0.0, 0.0]);
        let pool = vec![Hypothesis::ConstantZero, Hypothesis::ConstantOne];
        let oracle = ExactOracle::with_pool(pool).unwrap();

        let inst = CscInstance::new(&f, vec![1.0, 1.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(oracle.solve(&inst), Hypothesis::ConstantZero);

        let inst = CscInstance::new(&f, vec![-1.0, -1.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(oracle.solve(&inst), Hypothesis::ConstantOne);
    }

    #[test]
    fn exact_oracle_matches_brute_force_on_random_costs() {
        let f = features_1d(&[-1.0, 0.5, 2.0]);
        let pool = make_threshold_pool(&f).unwrap();
        let oracle = ExactOracle::with_pool(pool.clone()).unwrap();
        // Fixed pseudo-random signed costs.
        let costs1 = [0.7, -1.3, 0.2, 1.9, -0.4, 0.05];
        let costs0 = [-0.6, 0.9, -1.1, 0.3, 1.2, -0.8];
        for s in 0..3 {
            let c1: Vec<f64> = (0..3).map(|i| costs1[(i + s) % 6]).collect();
            let c0: Vec<f64> = (0..3).map(|i| costs0[(i + 2 * s) % 6]).collect();
            let inst = CscInstance::new(&f, c1, c0).unwrap();
            let solved = csc_cost(&oracle.solve(&inst), &inst);
            let brute = pool
                .iter()
                .map(|h| csc_cost(h, &inst))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(solved, brute);
        }
    }

    #[test]
    fn threshold_pool_realizes_all_labelings_of_two_points() {
        let f = features_1d(&[0.0, 1.0]);
        let pool = make_threshold_pool(&f).unwrap();
        let realized = labelings(&pool, &f);
        assert_eq!(realized.len(), 4);
    }

    #[test]
    fn threshold_pool_single_point_realizes_both_labels() {
        let f = features_1d(&[0.3]);
        let pool = make_threshold_pool(&f).unwrap();
        // Constants plus one coordinate with two extreme thresholds, two
        // orientations each.
        assert_eq!(pool.len(), 2 + 4);
        let realized = labelings(&pool, &f);
        assert_eq!(realized.len(), 2);
    }

    #[test]
    fn identical_features_realize_only_constants() {
        let f = features_1d(&[2.0, 2.0, 2.0]);
        let pool = make_threshold_pool(&f).unwrap();
        let realized = labelings(&pool, &f);
        assert_eq!(realized.len(), 2);
        assert!(realized.contains(&vec![0, 0, 0]));
        assert!(realized.contains(&vec![1, 1, 1]));
    }

    #[test]
    fn pool_guard_rejects_large_inputs() {
        let rows: Vec<Vec<f64>> = (0..101).map(|i| vec![i as f64; 100]).collect();
        let f = FeatureMatrix::from_rows(rows).unwrap();
        assert!(matches!(
            make_threshold_pool(&f),
            Err(Error::PoolGuardExceeded(..))
        ));
    }

    #[test]
    fn heuristic_equal_costs_any_candidate_is_optimal() {
        let f = features_1d(&[-1.0, 0.0, 1.0]);
        let oracle = RegressionOracle::for_features(&f).unwrap();
        let c = vec![0.4, 0.4, 0.4];
        let inst = CscInstance::new(&f, c.clone(), c).unwrap();
        let h = oracle.solve(&inst);
        assert!((csc_cost(&h, &inst) - 1.2).abs() < 1e-12);
    }

    #[test]
    fn heuristic_beats_both_constants_on_signed_costs() {
        // cost1_i = -x_i, cost0 = 0 on a sign-spanning column. The perfect
        // linear fit thresholds at x > 0, labeling (0,0,1,1):
        // cost = -(1) - (2) = -3, strictly below both constants (0 each).
        let f = features_1d(&[-2.0, -1.0, 1.0, 2.0]);
        let oracle = RegressionOracle::for_features(&f).unwrap();
        let cost1: Vec<f64> = vec![2.0, 1.0, -1.0, -2.0];
        let cost0 = vec![0.0; 4];
        let inst = CscInstance::new(&f, cost1, cost0).unwrap();
        let h = oracle.solve(&inst);
        let cost = csc_cost(&h, &inst);
        assert!((cost - (-3.0)).abs() < 1e-9);
        assert!(cost <= 0.0);
    }

    #[test]
    fn heuristic_never_exceeds_constant_costs() {
        let f = features_1d(&[-1.5, -0.5, 0.5, 1.5, 3.0]);
        let oracle = RegressionOracle::for_features(&f).unwrap();
        let c1 = vec![0.9, -0.2, 0.8, -0.7, 0.1];
        let c0 = vec![-0.3, 0.6, -0.9, 0.4, 0.2];
        let inst = CscInstance::new(&f, c1.clone(), c0.clone()).unwrap();
        let h = oracle.solve(&inst);
        let bound = c0.iter().sum::<f64>().min(c1.iter().sum::<f64>());
        assert!(csc_cost(&h, &inst) <= bound + 1e-12);
    }

    #[test]
    fn heuristic_is_deterministic() {
        let f = features_1d(&[0.1, 0.4, -0.9]);
        let oracle = RegressionOracle::for_features(&f).unwrap();
        let inst = CscInstance::new(&f, vec![0.2, -0.1, 0.5], vec![0.0, 0.3, -0.2]).unwrap();
        let a = oracle.solve(&inst);
        let b = oracle.solve(&inst);
        assert_eq!(a, b);
        // Rebuilding the oracle from scratch also reproduces it bit-exactly.
        let rebuilt = RegressionOracle::for_features(&f).unwrap().solve(&inst);
        assert_eq!(a, rebuilt);
    }

    #[test]
    fn degenerate_design_uses_minimum_norm_fit() {
        // All-identical features make the design matrix rank deficient; the
        // solve must still return a finite hypothesis.
        let f = features_1d(&[1.0, 1.0, 1.0]);
        let oracle = RegressionOracle::for_features(&f).unwrap();
        let inst = CscInstance::new(&f, vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0]).unwrap();
        let h = oracle.solve(&inst);
        assert!(csc_cost(&h, &inst).is_finite());
    }
}
