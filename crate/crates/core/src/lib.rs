//! Learning task-to-classifier mappings whose per-individual error rates
//! (or false-positive rates), averaged over a distribution of
//! classification tasks, are approximately equalized across a population.
//!
//! The trainers reduce the constrained empirical risk minimization problem
//! to a two-player zero-sum game: a Learner best-responds through a
//! cost-sensitive classification oracle while an Auditor runs
//! exponentiated gradient descent on the fairness violations. The averaged
//! plays approximate an equilibrium, and the archive of per-round dual
//! weights extends the solution to unseen tasks.

pub mod data;
pub mod dynamics;
pub mod error;
pub mod learn;
pub mod metrics;
pub mod model;
pub mod oracle;

pub use error::{Error, Result};
pub use model::{
    derive_hyperparams, BatchMode, FairnessReport, FeatureMatrix, HpOverrides, HyperParams,
    Hypothesis, Panel, PsiHat, RandomizedClassifier, Variant,
};
