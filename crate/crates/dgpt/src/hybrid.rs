//! Hybrid Bayesian update with a Poisson target/clutter measurement model.
//!
//! Combines the tracker's next-step Gaussian prior with the closed-form
//! moments of the Poisson mixture likelihood, giving a conjugate posterior
//! per coordinate. A brute-force enumeration over all target/clutter
//! assignments serves as an independent oracle for the product-form
//! likelihood.

use thiserror::Error;

use crate::gp::Prediction;

#[derive(Debug, Error)]
pub enum HybridError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("partition enumeration limited to {max} measurements, got {got}")]
    TooManyMeasurements { max: usize, got: usize },
}

const PARTITION_MAX: usize = 8;

/// Rates and geometry of the Poisson measurement model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonLikelihoodParams {
    /// Expected target-originated measurements per scan (lambda_T).
    pub lambda_target: f64,
    /// Expected clutter measurements per scan (lambda_c).
    pub lambda_clutter: f64,
    /// Sensing area of one sensor in square meters (A_sen).
    pub sensing_area: f64,
    /// Measurement noise variance (sigma_z^2).
    pub noise_variance: f64,
}

impl PoissonLikelihoodParams {
    pub fn new(
        lambda_target: f64,
        lambda_clutter: f64,
        sensing_area: f64,
        noise_variance: f64,
    ) -> Result<Self, HybridError> {
        if !(lambda_target > 0.0) || !(sensing_area > 0.0) || !(noise_variance > 0.0) {
            return Err(HybridError::InvalidArgument(
                "lambda_T, A_sen and noise variance must be strictly positive".into(),
            ));
        }
        if !(lambda_clutter >= 0.0) {
            return Err(HybridError::InvalidArgument(
                "clutter rate must be non-negative".into(),
            ));
        }
        Ok(Self {
            lambda_target,
            lambda_clutter,
            sensing_area,
            noise_variance,
        })
    }

    fn clutter_density(&self) -> f64 {
        self.lambda_clutter / self.sensing_area
    }
}

/// Closed-form moments of the collapsed measurement likelihood:
/// sigma_hat^2 = (lambda_T sigma_z)^2 / n_t and
/// mu_hat = lambda_c / A_sen + lambda_T * state.
pub fn likelihood_moments(
    n_t: usize,
    state: f64,
    p: &PoissonLikelihoodParams,
) -> Result<(f64, f64), HybridError> {
    if n_t == 0 {
        return Err(HybridError::InvalidArgument(
            "likelihood moments undefined at n_t = 0; skip the update".into(),
        ));
    }
    let sigma_hat_sq = p.lambda_target * p.lambda_target * p.noise_variance / n_t as f64;
    let mu_hat = p.clutter_density() + p.lambda_target * state;
    Ok((mu_hat, sigma_hat_sq))
}

/// Conjugate posterior for one coordinate given the scan's scalar
/// measurements. An empty scan passes the prior through unchanged.
pub fn posterior_update(
    prior: Prediction,
    measurements_1d: &[f64],
    p: &PoissonLikelihoodParams,
) -> Result<Prediction, HybridError> {
    if !(prior.variance > 0.0) {
        return Err(HybridError::InvalidArgument(
            "prior variance must be strictly positive".into(),
        ));
    }
    let n_t = measurements_1d.len();
    if n_t == 0 {
        return Ok(prior);
    }
    let lt = p.lambda_target;
    let sigma_hat_sq = lt * lt * p.noise_variance / n_t as f64;
    // Sum_j (z_j lambda_T - lambda_T lambda_c / A_sen), grouped so the
    // result depends on the measurements only through their sum.
    let sum: f64 = measurements_1d.iter().sum();
    let shift = lt * sum - n_t as f64 * lt * p.clutter_density();
    let denom = sigma_hat_sq + n_t as f64 * prior.variance * lt * lt;
    Ok(Prediction {
        mean: (prior.mean * sigma_hat_sq + prior.variance * shift) / denom,
        variance: sigma_hat_sq * prior.variance / denom,
    })
}

fn log_gaussian(z: f64, mean: f64, variance: f64) -> f64 {
    let d = z - mean;
    -0.5 * d * d / variance - 0.5 * (2.0 * std::f64::consts::PI * variance).ln()
}

/// Unnormalized log-likelihood in product form:
/// sum_j log(lambda_c / A_sen + lambda_T N(z_j; state, sigma_z^2)).
pub fn product_likelihood(
    measurements_1d: &[f64],
    state: f64,
    p: &PoissonLikelihoodParams,
) -> f64 {
    let clutter = p.clutter_density();
    measurements_1d
        .iter()
        .map(|z| {
            let target = p.lambda_target * log_gaussian(*z, state, p.noise_variance).exp();
            (clutter + target).ln()
        })
        .sum()
}

/// Same quantity via brute-force enumeration of every target/clutter
/// assignment; exponential in the number of measurements, capped at 8.
pub fn partition_sum_likelihood(
    measurements_1d: &[f64],
    state: f64,
    p: &PoissonLikelihoodParams,
) -> Result<f64, HybridError> {
    let n = measurements_1d.len();
    if n > PARTITION_MAX {
        return Err(HybridError::TooManyMeasurements {
            max: PARTITION_MAX,
            got: n,
        });
    }
    if n == 0 {
        return Ok(0.0);
    }
    let log_clutter = if p.lambda_clutter > 0.0 {
        p.clutter_density().ln()
    } else {
        f64::NEG_INFINITY
    };
    let log_target: Vec<f64> = measurements_1d
        .iter()
        .map(|z| p.lambda_target.ln() + log_gaussian(*z, state, p.noise_variance))
        .collect();

    // log-sum-exp over all 2^n assignments; bit j set means measurement j
    // is target-originated.
    let mut terms = Vec::with_capacity(1usize << n);
    for mask in 0u64..(1u64 << n) {
        let mut log_term = 0.0;
        for (j, lt) in log_target.iter().enumerate() {
            log_term += if mask & (1 << j) != 0 { *lt } else { log_clutter };
        }
        terms.push(log_term);
    }
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Apply the conjugate update independently per coordinate, sharing the
/// pooled measurement count n_t.
pub fn hybrid_step(
    prior_x: Prediction,
    prior_y: Prediction,
    measurements: &[[f64; 2]],
    p: &PoissonLikelihoodParams,
) -> Result<(Prediction, Prediction), HybridError> {
    let xs: Vec<f64> = measurements.iter().map(|m| m[0]).collect();
    let ys: Vec<f64> = measurements.iter().map(|m| m[1]).collect();
    Ok((
        posterior_update(prior_x, &xs, p)?,
        posterior_update(prior_y, &ys, p)?,
    ))
}
