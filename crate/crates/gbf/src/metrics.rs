//! Evaluation metrics: test-set log-likelihood, MSE, interval coverage,
//! variance-consistency ratio, KS normality statistic, pseudo-log transform.

use crate::family::{Family, FamilyError, Observation};
use crate::stats::normal_cdf;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("zero variance denominator")]
    ZeroVarianceDenominator,
    #[error("need at least {need} replicates, got {got}")]
    TooFewReplicates { got: usize, need: usize },
    #[error(transparent)]
    Family(#[from] FamilyError),
}

/// Per-stage evaluation summary used by the simulation records.
#[derive(Debug, Clone, PartialEq)]
pub struct StageEvaluation {
    pub stage: usize,
    pub mean_ll: f64,
    pub mse_link: f64,
    pub mse_response: f64,
    /// Mean link-space variance estimate over the test points.
    pub avg_var: f64,
    /// Share of link-space confidence intervals covering the true signal.
    pub coverage: f64,
    /// Mean |link prediction - true signal|.
    pub abs_bias: f64,
    /// KS normality statistic of the standardized test-point errors.
    pub ks: f64,
}

/// Mean per-observation log-likelihood at the given link predictions.
pub fn mean_log_lik(
    family: Family,
    link_preds: &[f64],
    obs: &[Observation],
) -> Result<f64, MetricsError> {
    if link_preds.len() != obs.len() {
        return Err(MetricsError::LengthMismatch(link_preds.len(), obs.len()));
    }
    let mut total = 0.0;
    for (&t, o) in link_preds.iter().zip(obs) {
        total += family.log_lik(t, o)?;
    }
    Ok(total / obs.len() as f64)
}

/// Mean squared error between two equally long slices.
pub fn mse(preds: &[f64], targets: &[f64]) -> f64 {
    assert_eq!(preds.len(), targets.len());
    preds
        .iter()
        .zip(targets)
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum::<f64>()
        / preds.len() as f64
}

/// Share of truths inside their (closed) intervals.
pub fn coverage(intervals: &[(f64, f64)], truths: &[f64]) -> f64 {
    assert_eq!(intervals.len(), truths.len());
    let hits = intervals
        .iter()
        .zip(truths)
        .filter(|(&(lo, hi), &t)| lo <= t && t <= hi)
        .count();
    hits as f64 / truths.len() as f64
}

/// Mean of the variance estimates over the sample variance of the estimates
/// (over replicates). A ratio near 1 means the variance estimate tracks the
/// true sampling variability.
pub fn var_consistency_ratio(
    var_estimates: &[f64],
    estimates: &[f64],
) -> Result<f64, MetricsError> {
    if var_estimates.len() != estimates.len() {
        return Err(MetricsError::LengthMismatch(
            var_estimates.len(),
            estimates.len(),
        ));
    }
    if estimates.len() < 2 {
        return Err(MetricsError::TooFewReplicates {
            got: estimates.len(),
            need: 2,
        });
    }
    let r = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / r;
    let var = estimates
        .iter()
        .map(|&e| (e - mean) * (e - mean))
        .sum::<f64>()
        / (r - 1.0);
    if var == 0.0 {
        return Err(MetricsError::ZeroVarianceDenominator);
    }
    Ok(var_estimates.iter().sum::<f64>() / r / var)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsOutcome {
    /// sup_t |F_emp(t) - Φ(t)| of the standardized values.
    pub statistic: f64,
    /// Replicates dropped because their variance estimate was <= 0.
    pub dropped: usize,
}

/// One-sample Kolmogorov-Smirnov statistic against the standard normal of
/// the standardized values z_r = (estimate_r - truth_r)/sqrt(variance_r).
pub fn ks_normality(
    estimates: &[f64],
    truths: &[f64],
    var_estimates: &[f64],
) -> Result<KsOutcome, MetricsError> {
    if estimates.len() != truths.len() || estimates.len() != var_estimates.len() {
        return Err(MetricsError::LengthMismatch(
            estimates.len(),
            truths.len().min(var_estimates.len()),
        ));
    }
    let mut z: Vec<f64> = Vec::with_capacity(estimates.len());
    let mut dropped = 0usize;
    for i in 0..estimates.len() {
        if var_estimates[i] > 0.0 {
            z.push((estimates[i] - truths[i]) / var_estimates[i].sqrt());
        } else {
            dropped += 1;
        }
    }
    if z.len() < 5 {
        return Err(MetricsError::TooFewReplicates {
            got: z.len(),
            need: 5,
        });
    }
    z.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = z.len() as f64;
    let mut statistic: f64 = 0.0;
    for (i, &zi) in z.iter().enumerate() {
        let phi = normal_cdf(zi);
        let above = (i + 1) as f64 / n - phi;
        let below = phi - i as f64 / n;
        statistic = statistic.max(above).max(below);
    }
    Ok(KsOutcome { statistic, dropped })
}

/// Pseudo-log scale: the inverse hyperbolic sine.
pub fn pseudo_log(v: f64) -> f64 {
    v.asinh()
}
