//! Exponential-family log-likelihoods in the link space.
//!
//! Everything the staged estimator needs from the response distribution
//! lives here: per-observation log-likelihood `ℓᵢ(t)` and its first two
//! derivatives at a link value `t`, the MLE-type constant
//! `argmax_t Σᵢ ℓᵢ(t)` with its infinitesimal-jackknife directional
//! derivatives, the Newton residuals/weights that the forests train on, and
//! the inverse link with its derivative for delta-method transforms.
//!
//! Conventions: additive likelihood constants are dropped (C = 0), so
//! log-likelihood values are only meaningful as differences; the Gaussian
//! variance is fixed at σ² = 1. Link values are clamped to |t| <= 500 before
//! exponentiation, and the logistic function is evaluated in an
//! overflow-safe form.

use thiserror::Error;

/// Largest |link value| fed to `exp`; beyond this everything saturates.
const LINK_CLAMP: f64 = 500.0;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FamilyError {
    #[error("non-finite link value")]
    NonFiniteLink,
    #[error("degenerate MLE at infinity")]
    DegenerateMle,
    #[error("vanishing curvature at observation {0}")]
    VanishingCurvature(usize),
    #[error("empty observation list")]
    EmptyObservations,
    #[error("invalid observation at index {index}: {reason}")]
    InvalidObservation { index: usize, reason: String },
    #[error("length mismatch: {left} link values vs {right} observations")]
    LengthMismatch { left: usize, right: usize },
}

/// One response: the observed value plus, for binomial data, its trial count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub y: f64,
    pub trials: Option<u64>,
}

impl Observation {
    /// Gaussian or Poisson response.
    pub fn new(y: f64) -> Self {
        Self { y, trials: None }
    }

    /// Binomial response: `y` successes out of `trials`.
    pub fn with_trials(y: f64, trials: u64) -> Self {
        Self {
            y,
            trials: Some(trials),
        }
    }
}

/// Which exponential family the responses follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Identity link, σ² = 1.
    Gaussian,
    /// Logit link; observations carry per-observation trial counts.
    Binomial,
    /// Log link; non-negative integer counts.
    Poisson,
}

/// Overflow-safe logistic function eᵗ/(1+eᵗ).
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Overflow-safe log(1+eᵗ).
fn log1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn check_link(t: f64) -> Result<f64, FamilyError> {
    if !t.is_finite() {
        return Err(FamilyError::NonFiniteLink);
    }
    Ok(t.clamp(-LINK_CLAMP, LINK_CLAMP))
}

impl Family {
    /// Validate a batch of observations against this family's support.
    pub fn validate(&self, obs: &[Observation]) -> Result<(), FamilyError> {
        let fail = |index: usize, reason: &str| FamilyError::InvalidObservation {
            index,
            reason: reason.to_string(),
        };
        for (i, o) in obs.iter().enumerate() {
            if !o.y.is_finite() {
                return Err(fail(i, "non-finite response"));
            }
            match self {
                Family::Gaussian | Family::Poisson => {
                    if o.trials.is_some() {
                        return Err(fail(i, "trial count given for a non-binomial family"));
                    }
                }
                Family::Binomial => {}
            }
            match self {
                Family::Gaussian => {}
                Family::Binomial => {
                    let n = o
                        .trials
                        .ok_or_else(|| fail(i, "binomial observation without trial count"))?;
                    if n == 0 {
                        return Err(fail(i, "trial count must be positive"));
                    }
                    if o.y < 0.0 || o.y > n as f64 || o.y.fract() != 0.0 {
                        return Err(fail(i, "binomial response must be an integer in [0, n]"));
                    }
                }
                Family::Poisson => {
                    if o.y < 0.0 || o.y.fract() != 0.0 {
                        return Err(fail(i, "poisson response must be a non-negative integer"));
                    }
                }
            }
        }
        Ok(())
    }

    /// ℓᵢ(t), with the additive constant dropped.
    pub fn log_lik(&self, t: f64, obs: &Observation) -> Result<f64, FamilyError> {
        let t = check_link(t)?;
        Ok(match self {
            Family::Gaussian => -0.5 * (obs.y - t) * (obs.y - t),
            Family::Binomial => {
                let n = obs.trials.unwrap_or(1) as f64;
                obs.y * t - n * log1p_exp(t)
            }
            Family::Poisson => obs.y * t - t.exp(),
        })
    }

    /// ℓ′ᵢ(t).
    pub fn d1(&self, t: f64, obs: &Observation) -> Result<f64, FamilyError> {
        let t = check_link(t)?;
        Ok(match self {
            Family::Gaussian => obs.y - t,
            Family::Binomial => {
                let n = obs.trials.unwrap_or(1) as f64;
                obs.y - n * sigmoid(t)
            }
            Family::Poisson => obs.y - t.exp(),
        })
    }

    /// ℓ″ᵢ(t); always <= 0, strictly negative for binomial and Poisson.
    pub fn d2(&self, t: f64, obs: &Observation) -> Result<f64, FamilyError> {
        let t = check_link(t)?;
        Ok(match self {
            Family::Gaussian => -1.0,
            Family::Binomial => {
                let n = obs.trials.unwrap_or(1) as f64;
                // p(1-p) as σ(t)σ(-t): stays strictly positive for |t| <= 500.
                -n * sigmoid(t) * sigmoid(-t)
            }
            Family::Poisson => -t.exp(),
        })
    }

    /// The MLE-type constant: argmax over t of the summed log-likelihood,
    /// via the per-family closed form.
    pub fn mle_constant(&self, obs: &[Observation]) -> Result<f64, FamilyError> {
        if obs.is_empty() {
            return Err(FamilyError::EmptyObservations);
        }
        self.validate(obs)?;
        let n = obs.len() as f64;
        let sum_y: f64 = obs.iter().map(|o| o.y).sum();
        match self {
            Family::Gaussian => Ok(sum_y / n),
            Family::Binomial => {
                let sum_n: f64 = obs.iter().map(|o| o.trials.unwrap_or(1) as f64).sum();
                if sum_y <= 0.0 || sum_y >= sum_n {
                    return Err(FamilyError::DegenerateMle);
                }
                Ok((sum_y / (sum_n - sum_y)).ln())
            }
            Family::Poisson => {
                if sum_y <= 0.0 {
                    return Err(FamilyError::DegenerateMle);
                }
                Ok((sum_y / n).ln())
            }
        }
    }

    /// Infinitesimal-jackknife directional derivatives `Uᵢ` of the MLE-type
    /// constant: the sensitivity of the constant to upweighting observation
    /// `i`. Closed forms per family; they sum to zero.
    pub fn mle_derivatives(&self, obs: &[Observation]) -> Result<Vec<f64>, FamilyError> {
        // Shares all preconditions with `mle_constant`.
        self.mle_constant(obs)?;
        let n = obs.len() as f64;
        let y_bar = obs.iter().map(|o| o.y).sum::<f64>() / n;
        Ok(match self {
            Family::Gaussian => obs.iter().map(|o| o.y - y_bar).collect(),
            Family::Binomial => {
                let n_bar = obs.iter().map(|o| o.trials.unwrap_or(1) as f64).sum::<f64>() / n;
                obs.iter()
                    .map(|o| {
                        let ni = o.trials.unwrap_or(1) as f64;
                        (n_bar * o.y - ni * y_bar) / (y_bar * (n_bar - y_bar))
                    })
                    .collect()
            }
            Family::Poisson => obs.iter().map(|o| (o.y - y_bar) / y_bar).collect(),
        })
    }

    /// Newton residuals rᵢ = ℓ′ᵢ(ηᵢ)/(−ℓ″ᵢ(ηᵢ)) and training weights
    /// wᵢ = −ℓ″ᵢ(ηᵢ) > 0 at the current link predictions.
    pub fn newton_residuals_weights(
        &self,
        eta: &[f64],
        obs: &[Observation],
    ) -> Result<(Vec<f64>, Vec<f64>), FamilyError> {
        if eta.len() != obs.len() {
            return Err(FamilyError::LengthMismatch {
                left: eta.len(),
                right: obs.len(),
            });
        }
        let mut residuals = Vec::with_capacity(obs.len());
        let mut weights = Vec::with_capacity(obs.len());
        for (i, (&t, o)) in eta.iter().zip(obs).enumerate() {
            let d1 = self.d1(t, o)?;
            let w = -self.d2(t, o)?;
            if w <= 0.0 {
                return Err(FamilyError::VanishingCurvature(i));
            }
            residuals.push(d1 / w);
            weights.push(w);
        }
        Ok((residuals, weights))
    }

    /// g⁻¹(t): the response-space mean at link value t.
    pub fn inv_link(&self, t: f64) -> f64 {
        let t = t.clamp(-LINK_CLAMP, LINK_CLAMP);
        match self {
            Family::Gaussian => t,
            Family::Binomial => sigmoid(t),
            Family::Poisson => t.exp(),
        }
    }

    /// (g⁻¹)′(t): derivative of the inverse link, for the delta method.
    pub fn inv_link_deriv(&self, t: f64) -> f64 {
        let t = t.clamp(-LINK_CLAMP, LINK_CLAMP);
        match self {
            Family::Gaussian => 1.0,
            Family::Binomial => sigmoid(t) * sigmoid(-t),
            Family::Poisson => t.exp(),
        }
    }
}
