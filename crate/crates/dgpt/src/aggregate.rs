//! Aggregation of per-expert Gaussian predictions.
//!
//! Implements the four product-of-experts style combination rules (PoE,
//! GPoE, BCM, RBCM) together with the differential-entropy weights and the
//! factorized marginal likelihood shared by all experts.

use thiserror::Error;

use crate::gp::{self, Dataset, GpError, Hyperparameters, Prediction};

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("expert list is empty")]
    NoExperts,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Gp(#[from] GpError),
}

/// One expert's Gaussian prediction plus its aggregation weight beta.
/// The weight is ignored by PoE and BCM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpertPrediction {
    pub mean: f64,
    pub variance: f64,
    pub weight: f64,
}

impl ExpertPrediction {
    pub fn new(mean: f64, variance: f64, weight: f64) -> Result<Self, AggregateError> {
        if !(variance > 0.0) {
            return Err(AggregateError::InvalidArgument(
                "expert variance must be strictly positive".into(),
            ));
        }
        Ok(Self {
            mean,
            variance,
            weight,
        })
    }
}

/// How GPoE/RBCM assign their beta weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightRule {
    /// Half the log-ratio of prior to expert predictive variance.
    Entropy,
    /// beta_i = 1/M for every expert.
    Uniform,
}

/// Aggregation rule selection; the weight rule only applies to GPoE/RBCM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationMethod {
    Poe,
    Gpoe(WeightRule),
    Bcm,
    Rbcm(WeightRule),
}

/// Moments of the common zero-mean prior used by BCM/RBCM corrections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorMoments {
    pub variance: f64,
}

impl PriorMoments {
    pub fn new(variance: f64) -> Result<Self, AggregateError> {
        if !(variance > 0.0) {
            return Err(AggregateError::InvalidArgument(
                "prior variance must be strictly positive".into(),
            ));
        }
        Ok(Self { variance })
    }
}

/// Aggregated prediction plus a flag for the degenerate BCM/RBCM case where
/// the combined precision was non-positive and the prior was returned
/// instead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateOutcome {
    pub prediction: Prediction,
    pub degenerate: bool,
}

/// Differential-entropy weight: 0.5 (log prior_var - log expert_var).
/// May be negative when the expert is less certain than the prior.
pub fn entropy_weight(prior_var: f64, expert_var: f64) -> Result<f64, AggregateError> {
    if !(prior_var > 0.0) || !(expert_var > 0.0) {
        return Err(AggregateError::InvalidArgument(
            "variances must be strictly positive".into(),
        ));
    }
    Ok(0.5 * (prior_var.ln() - expert_var.ln()))
}

/// Product of experts: precisions and precision-weighted means add.
pub fn poe_aggregate(experts: &[ExpertPrediction]) -> Result<Prediction, AggregateError> {
    if experts.is_empty() {
        return Err(AggregateError::NoExperts);
    }
    let precision: f64 = experts.iter().map(|e| 1.0 / e.variance).sum();
    let weighted: f64 = experts.iter().map(|e| e.mean / e.variance).sum();
    let variance = 1.0 / precision;
    Ok(Prediction {
        mean: variance * weighted,
        variance,
    })
}

/// Generalized product of experts with per-expert weights beta.
pub fn gpoe_aggregate(experts: &[ExpertPrediction]) -> Result<Prediction, AggregateError> {
    if experts.is_empty() {
        return Err(AggregateError::NoExperts);
    }
    let precision: f64 = experts.iter().map(|e| e.weight / e.variance).sum();
    if !(precision > 0.0) {
        return Err(AggregateError::InvalidArgument(
            "GPoE aggregated precision must be positive".into(),
        ));
    }
    let weighted: f64 = experts.iter().map(|e| e.weight * e.mean / e.variance).sum();
    let variance = 1.0 / precision;
    Ok(Prediction {
        mean: variance * weighted,
        variance,
    })
}

/// Bayesian committee machine: PoE plus an (1-M)-fold prior correction.
///
/// A non-positive combined precision falls back to the prior moments with
/// the degenerate flag set, so a running tracker can continue.
pub fn bcm_aggregate(
    experts: &[ExpertPrediction],
    prior: PriorMoments,
) -> Result<AggregateOutcome, AggregateError> {
    if experts.is_empty() {
        return Err(AggregateError::NoExperts);
    }
    let m = experts.len() as f64;
    let precision: f64 = experts.iter().map(|e| 1.0 / e.variance).sum::<f64>()
        + (1.0 - m) / prior.variance;
    if !(precision > 0.0) {
        return Ok(AggregateOutcome {
            prediction: Prediction {
                mean: 0.0,
                variance: prior.variance,
            },
            degenerate: true,
        });
    }
    let weighted: f64 = experts.iter().map(|e| e.mean / e.variance).sum();
    let variance = 1.0 / precision;
    Ok(AggregateOutcome {
        prediction: Prediction {
            mean: variance * weighted,
            variance,
        },
        degenerate: false,
    })
}

/// Robust BCM: weighted experts plus a (1 - sum beta) prior correction.
pub fn rbcm_aggregate(
    experts: &[ExpertPrediction],
    prior: PriorMoments,
) -> Result<AggregateOutcome, AggregateError> {
    if experts.is_empty() {
        return Err(AggregateError::NoExperts);
    }
    let beta_sum: f64 = experts.iter().map(|e| e.weight).sum();
    let precision: f64 = experts.iter().map(|e| e.weight / e.variance).sum::<f64>()
        + (1.0 - beta_sum) / prior.variance;
    if !(precision > 0.0) {
        return Ok(AggregateOutcome {
            prediction: Prediction {
                mean: 0.0,
                variance: prior.variance,
            },
            degenerate: true,
        });
    }
    let weighted: f64 = experts.iter().map(|e| e.weight * e.mean / e.variance).sum();
    let variance = 1.0 / precision;
    Ok(AggregateOutcome {
        prediction: Prediction {
            mean: variance * weighted,
            variance,
        },
        degenerate: false,
    })
}

/// Apply the configured aggregation method. Expert weights must already be
/// populated according to the method's weight rule.
pub fn aggregate(
    method: AggregationMethod,
    experts: &[ExpertPrediction],
    prior: PriorMoments,
) -> Result<AggregateOutcome, AggregateError> {
    match method {
        AggregationMethod::Poe => Ok(AggregateOutcome {
            prediction: poe_aggregate(experts)?,
            degenerate: false,
        }),
        AggregationMethod::Gpoe(_) => Ok(AggregateOutcome {
            prediction: gpoe_aggregate(experts)?,
            degenerate: false,
        }),
        AggregationMethod::Bcm => bcm_aggregate(experts, prior),
        AggregationMethod::Rbcm(_) => rbcm_aggregate(experts, prior),
    }
}

/// Sum of per-expert log marginal likelihoods under shared hyperparameters.
/// Empty datasets contribute zero; at least one must be non-empty.
pub fn factorized_lml(datasets: &[Dataset], h: &Hyperparameters) -> Result<f64, AggregateError> {
    if datasets.iter().all(|d| d.is_empty()) {
        return Err(AggregateError::Gp(GpError::EmptyDataset));
    }
    let mut total = 0.0;
    for ds in datasets.iter().filter(|d| !d.is_empty()) {
        total += gp::log_marginal_likelihood(ds, h)?;
    }
    Ok(total)
}
