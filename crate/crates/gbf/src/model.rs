//! The staged generalised-boosted-forest estimator.
//!
//! Fitting proceeds in stages: stage 0 is the MLE-type constant η̂⁰ in the
//! link space with its directional derivatives U⁰; each later stage fits a
//! random forest to the Newton residuals of the log-likelihood at the
//! current link predictions, using the curvature as sampling weights, and
//! adds its predictions to the running link estimate. At most two forest
//! stages are supported.
//!
//! The link-space variance estimate of a prediction combines the directional
//! derivatives of every stage,
//!
//! ```text
//! V(x) = (1/n²) Σᵢ (U⁰ᵢ + Σⱼ n·cov_b(Nʲ_{i,b}, Tʲ_b(x)))²  +  c/B · Σⱼ var_b(Tʲ_b(x))
//! ```
//!
//! where the Monte-Carlo factor is c = 1 for the raw estimate and
//! c = (1 - n/k) for the bias-corrected one (negative for k < n; the total
//! is clamped at zero and flagged). Cross-stage covariances are captured by
//! squaring the summed derivative arrays. Response-space values follow by
//! the delta method.

use crate::family::{Family, FamilyError, Observation};
use crate::forest::{self, ForestError, ForestModel, ForestParams};
use crate::matrix::Matrix;
use crate::rng::derive_seed;
use crate::stats::normal_quantile;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GbfError {
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error("unsupported stage count {0}; supported: 0, 1 or 2")]
    UnsupportedStages(usize),
    #[error("need at least {need} training rows, got {n}")]
    TooFewSamples { n: usize, need: usize },
    #[error("{0} observations for {1} rows of covariates")]
    LengthMismatch(usize, usize),
    #[error("covariates contain non-finite values")]
    NonFiniteCovariates,
    #[error("inconsistent model parts: {0}")]
    InconsistentParts(String),
}

/// Which Monte-Carlo term the link-space variance uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarianceMode {
    /// Full incomplete-U-statistic term (1/B)·Σ var_b.
    Raw,
    /// Bias-corrected term (1/B)·(1 - n/k)·Σ var_b, clamped at zero.
    #[default]
    Corrected,
}

/// Which training-point predictions feed the next stage's residuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResidualSource {
    /// Full-forest predictions at the training points.
    #[default]
    InSample,
    /// Out-of-bag predictions (trees that did not see the point).
    OutOfBag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbfParams {
    pub family: Family,
    /// Shared by every forest stage; per-stage seeds are derived as
    /// `derive_seed(forest.seed, stage)` with stage = 1, 2.
    pub forest: ForestParams,
    /// Number of forest stages (0, 1 or 2).
    pub stages: usize,
    pub variance_mode: VarianceMode,
    pub residual_source: ResidualSource,
}

impl GbfParams {
    pub fn new(family: Family, forest: ForestParams) -> Self {
        Self {
            family,
            forest,
            stages: 2,
            variance_mode: VarianceMode::default(),
            residual_source: ResidualSource::default(),
        }
    }
}

/// A point prediction with its IJ variance, in link and response space.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionWithVariance {
    pub link_estimate: f64,
    pub link_variance: f64,
    pub response_estimate: f64,
    pub response_variance: f64,
    /// Per-stage link contributions: `[η̂⁰, f̂¹(x), f̂²(x)]` (length stages+1).
    pub stage_link: Vec<f64>,
    /// True when the corrected variance was clamped at zero.
    pub clamped: bool,
}

impl PredictionWithVariance {
    /// Central normal interval in the link space.
    pub fn confidence_interval(&self, level: f64) -> (f64, f64) {
        assert!(level > 0.0 && level < 1.0, "level must lie in (0,1)");
        let z = normal_quantile(0.5 + level / 2.0);
        let half = z * self.link_variance.sqrt();
        (self.link_estimate - half, self.link_estimate + half)
    }
}

/// A fitted generalised boosted forest.
#[derive(Debug, Clone, PartialEq)]
pub struct GbfModel {
    params: GbfParams,
    eta0: f64,
    u0: Vec<f64>,
    forests: Vec<ForestModel>,
    /// Link predictions at the training points after each stage
    /// (stages+1 vectors of length n). Row j feeds stage j+1's residuals
    /// and the attainable-range diagnostics.
    train_eta: Vec<Vec<f64>>,
    /// Mean training log-likelihood after each stage.
    train_ll: Vec<f64>,
    n: usize,
    p: usize,
}

pub fn fit(x: &Matrix, obs: &[Observation], params: &GbfParams) -> Result<GbfModel, GbfError> {
    if params.stages > 2 {
        return Err(GbfError::UnsupportedStages(params.stages));
    }
    let n = x.n_rows();
    if obs.len() != n {
        return Err(GbfError::LengthMismatch(obs.len(), n));
    }
    if !x.is_finite() {
        return Err(GbfError::NonFiniteCovariates);
    }
    let need = 2 * params.forest.tree.min_node_size;
    if n < need {
        return Err(GbfError::TooFewSamples { n, need });
    }
    params.family.validate(obs)?;

    let family = params.family;
    let eta0 = family.mle_constant(obs)?;
    let u0 = family.mle_derivatives(obs)?;

    let mut eta = vec![eta0; n];
    let mut train_eta = vec![eta.clone()];
    let mut train_ll = vec![mean_log_lik(family, &eta, obs)?];
    let mut forests = Vec::with_capacity(params.stages);

    for stage in 1..=params.stages {
        let (residuals, weights) = family.newton_residuals_weights(&eta, obs)?;
        let stage_params = ForestParams {
            seed: derive_seed(params.forest.seed, stage as u64),
            ..params.forest.clone()
        };
        let forest = forest::fit(x, &residuals, &weights, &stage_params)?;
        for (i, e) in eta.iter_mut().enumerate() {
            *e += match params.residual_source {
                ResidualSource::InSample => forest.predict(x.row(i)),
                ResidualSource::OutOfBag => forest.oob_prediction(x.row(i), i),
            };
        }
        forests.push(forest);
        train_eta.push(eta.clone());
        train_ll.push(mean_log_lik(family, &eta, obs)?);
    }

    Ok(GbfModel {
        params: params.clone(),
        eta0,
        u0,
        forests,
        train_eta,
        train_ll,
        n,
        p: x.n_cols(),
    })
}

fn mean_log_lik(family: Family, eta: &[f64], obs: &[Observation]) -> Result<f64, FamilyError> {
    let mut total = 0.0;
    for (&t, o) in eta.iter().zip(obs) {
        total += family.log_lik(t, o)?;
    }
    Ok(total / obs.len() as f64)
}

impl GbfModel {
    pub fn params(&self) -> &GbfParams {
        &self.params
    }

    pub fn family(&self) -> Family {
        self.params.family
    }

    pub fn stages(&self) -> usize {
        self.forests.len()
    }

    pub fn eta0(&self) -> f64 {
        self.eta0
    }

    pub fn u0(&self) -> &[f64] {
        &self.u0
    }

    pub fn forests(&self) -> &[ForestModel] {
        &self.forests
    }

    pub fn n_train(&self) -> usize {
        self.n
    }

    pub fn n_features(&self) -> usize {
        self.p
    }

    /// Link predictions at the training points after each stage.
    pub fn train_eta(&self) -> &[Vec<f64>] {
        &self.train_eta
    }

    /// Mean training log-likelihood after each stage.
    pub fn train_ll(&self) -> &[f64] {
        &self.train_ll
    }

    /// Link-space point estimate without variance bookkeeping.
    pub fn link_prediction(&self, x: &[f64]) -> f64 {
        let mut link = self.eta0;
        for forest in &self.forests {
            link += forest.predict(x);
        }
        link
    }

    /// Prediction and variance for the full model.
    pub fn predict(&self, x: &[f64]) -> PredictionWithVariance {
        self.predict_stagewise(x)
            .pop()
            .expect("stagewise output is never empty")
    }

    /// Predictions and variances for every nested stage: element j is the
    /// model truncated to its first j forests (j = 0 is the constant). With
    /// in-sample residuals a stages=1 fit and the first stage of a stages=2
    /// fit coincide tree for tree, so this is the per-stage evaluation.
    pub fn predict_stagewise(&self, x: &[f64]) -> Vec<PredictionWithVariance> {
        let n = self.n as f64;
        let family = self.params.family;
        let mut out = Vec::with_capacity(self.forests.len() + 1);

        let mut u_total = self.u0.clone();
        let mut link = self.eta0;
        let mut stage_link = vec![self.eta0];
        let mut mc_var_sum = 0.0;

        let push = |out: &mut Vec<PredictionWithVariance>,
                    link: f64,
                    u_total: &[f64],
                    mc_var_sum: f64,
                    stage_link: &[f64]| {
            let first_term = u_total.iter().map(|u| u * u).sum::<f64>() / (n * n);
            let b = self.params.forest.n_trees as f64;
            let (mc_term, clamped) = match self.params.variance_mode {
                VarianceMode::Raw => (mc_var_sum / b, false),
                VarianceMode::Corrected => {
                    let k = self.subsample_size().max(1) as f64;
                    let corrected = (1.0 - n / k) * mc_var_sum / b;
                    let total = first_term + corrected;
                    if total < 0.0 {
                        (-first_term, true) // clamp the sum at zero
                    } else {
                        (corrected, false)
                    }
                }
            };
            let link_variance = first_term + mc_term;
            let response_estimate = family.inv_link(link);
            let deriv = family.inv_link_deriv(link);
            out.push(PredictionWithVariance {
                link_estimate: link,
                link_variance,
                response_estimate,
                response_variance: link_variance * deriv * deriv,
                stage_link: stage_link.to_vec(),
                clamped,
            });
        };

        push(&mut out, link, &u_total, mc_var_sum, &stage_link);
        for forest in &self.forests {
            let preds = forest.per_tree_predictions(x);
            let contribution = preds.iter().sum::<f64>() / preds.len() as f64;
            link += contribution;
            stage_link.push(contribution);
            let u_stage = forest.ij_from_predictions(&preds);
            for (t, u) in u_total.iter_mut().zip(&u_stage) {
                *t += u;
            }
            mc_var_sum += ForestModel::variance_from_predictions(&preds);
            push(&mut out, link, &u_total, mc_var_sum, &stage_link);
        }
        out
    }

    /// Central normal confidence interval in the link space.
    pub fn confidence_interval(&self, x: &[f64], level: f64) -> (f64, f64) {
        self.predict(x).confidence_interval(level)
    }

    fn subsample_size(&self) -> usize {
        self.forests
            .first()
            .map(ForestModel::subsample_size)
            .unwrap_or(self.n)
    }

    /// Theoretical attainable link-space prediction range of the fitted
    /// model. Forest predictions are convex combinations of their training
    /// residuals, whose support is bounded for the binomial (both sides) and
    /// Poisson (below by -1 per stage) families; the Gaussian range is
    /// unbounded. The returned interval is widened outward by a relative
    /// 1e-9 guard so that floating-point accumulation in tree averaging can
    /// never place a prediction outside it.
    pub fn prediction_range(&self) -> (f64, f64) {
        let stages = self.forests.len();
        let widen = |lo: f64, hi: f64| {
            let pad = |v: f64| 1e-9 * (1.0 + v.abs());
            (
                if lo.is_finite() { lo - pad(lo) } else { lo },
                if hi.is_finite() { hi + pad(hi) } else { hi },
            )
        };
        match self.params.family {
            Family::Gaussian => (f64::NEG_INFINITY, f64::INFINITY),
            Family::Poisson => {
                if stages == 0 {
                    (self.eta0, self.eta0)
                } else {
                    widen(self.eta0 - stages as f64, f64::INFINITY)
                }
            }
            Family::Binomial => {
                if stages == 0 {
                    return (self.eta0, self.eta0);
                }
                let p0 = self.params.family.inv_link(self.eta0);
                let mut lo = self.eta0 - 1.0 / (1.0 - p0);
                let mut hi = self.eta0 + 1.0 / p0;
                if stages == 2 {
                    // residuals of stage 2 were computed at the stage-1
                    // training predictions
                    let (p_min, p_max) = self.train_eta[1]
                        .iter()
                        .map(|&t| self.params.family.inv_link(t))
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                            (lo.min(p), hi.max(p))
                        });
                    lo -= 1.0 / (1.0 - p_max);
                    hi += 1.0 / p_min;
                }
                widen(lo, hi)
            }
        }
    }

    /// Rebuild a model from stored parts (deserialisation); re-validates the
    /// cross-part invariants.
    pub fn from_parts(
        params: GbfParams,
        eta0: f64,
        u0: Vec<f64>,
        forests: Vec<ForestModel>,
        train_eta: Vec<Vec<f64>>,
        train_ll: Vec<f64>,
        p: usize,
    ) -> Result<Self, GbfError> {
        if params.stages > 2 {
            return Err(GbfError::UnsupportedStages(params.stages));
        }
        if forests.len() != params.stages {
            return Err(GbfError::InconsistentParts(format!(
                "{} forests for {} stages",
                forests.len(),
                params.stages
            )));
        }
        let n = u0.len();
        if train_eta.len() != params.stages + 1 || train_ll.len() != params.stages + 1 {
            return Err(GbfError::InconsistentParts(
                "need one train_eta / train_ll row per stage".into(),
            ));
        }
        for row in &train_eta {
            if row.len() != n {
                return Err(GbfError::InconsistentParts(
                    "train_eta row length differs from u0 length".into(),
                ));
            }
        }
        for f in &forests {
            if f.n_train() != n {
                return Err(GbfError::InconsistentParts(
                    "forest training size differs from u0 length".into(),
                ));
            }
            if f.n_trees() != params.forest.n_trees {
                return Err(GbfError::InconsistentParts(
                    "forest tree count differs from params".into(),
                ));
            }
        }
        Ok(Self {
            params,
            eta0,
            u0,
            forests,
            train_eta,
            train_ll,
            n,
            p,
        })
    }
}
