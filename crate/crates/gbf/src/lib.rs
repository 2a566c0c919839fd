//! Generalised boosted forests for exponential-family regression.
//!
//! A generalised boosted forest models `E[Y|X] = g⁻¹(f(X))` and estimates `f`
//! in the link space as the sum of three stages: an MLE-type constant, a base
//! random forest fitted to Newton residuals of the log-likelihood, and a
//! second (boost) random forest fitted to the updated Newton residuals. Each
//! forest uses the curvature of the log-likelihood as sampling weights for
//! its subsamples, so the whole fit is a pair of Newton–Raphson steps taken
//! with random forests.
//!
//! The same fit also yields an infinitesimal-jackknife variance estimate at
//! no extra cost: directional derivatives of the constant are available in
//! closed form and those of each forest are covariances between subsample
//! inclusion indicators and per-tree predictions.
//!
//! Crate layout:
//! - [`family`]: exponential-family log-likelihoods, link transforms, the
//!   MLE-type constant and its directional derivatives.
//! - [`tree`] / [`forest`]: CART regression trees and subsampled ensembles
//!   with inclusion bookkeeping, IJ derivatives and proximity scores.
//! - [`model`]: the staged estimator, its variance estimate, confidence
//!   intervals and attainable prediction ranges.
//! - [`metrics`]: evaluation metrics (log-likelihood, MSE, coverage,
//!   variance-consistency ratio, KS normality statistic).
//! - [`sim`]: the simulation harness (data generation, experiment grid,
//!   CSV emission).
//! - [`eval`]: CSV ingestion and 10-fold cross-validation reports for real
//!   datasets.

pub mod eval;
pub mod family;
pub mod forest;
mod kv;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod tree;

pub use family::{Family, FamilyError, Observation};
pub use forest::{ForestError, ForestModel, ForestParams};
pub use matrix::Matrix;
pub use model::{
    GbfError, GbfModel, GbfParams, PredictionWithVariance, ResidualSource, VarianceMode,
};
pub use tree::{Tree, TreeError, TreeParams};
