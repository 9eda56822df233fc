//! Exact single-expert Gaussian-process regression.
//!
//! Squared-exponential kernel with per-dimension length-scales, posterior
//! prediction under a zero mean function, log marginal likelihood with its
//! analytic gradient in log-hyperparameter space, and a projected
//! gradient-ascent MLE routine that handles both the pooled (standard) and
//! the per-expert (factorized) objective.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

/// Lower box bound for every hyperparameter, in natural units.
pub const HYPER_MIN: f64 = 1e-4;
/// Upper box bound for every hyperparameter, in natural units.
pub const HYPER_MAX: f64 = 1e6;

const JITTER_BASE: f64 = 1e-10;
const JITTER_ATTEMPTS: usize = 6;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("SPD factorization failed; attempted jitter levels {attempted:?}")]
    Factorization { attempted: Vec<f64> },
}

/// Kernel and noise hyperparameters shared by all local experts.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    output_variance: f64,
    length_scales: Vec<f64>,
    noise_variance: f64,
}

impl Hyperparameters {
    pub fn new(
        output_variance: f64,
        length_scales: Vec<f64>,
        noise_variance: f64,
    ) -> Result<Self, GpError> {
        if !(output_variance > 0.0) || !(noise_variance > 0.0) {
            return Err(GpError::InvalidArgument(
                "variances must be strictly positive".into(),
            ));
        }
        if length_scales.is_empty() || length_scales.iter().any(|l| !(*l > 0.0)) {
            return Err(GpError::InvalidArgument(
                "length-scales must be non-empty and strictly positive".into(),
            ));
        }
        Ok(Self {
            output_variance,
            length_scales,
            noise_variance,
        })
    }

    pub fn output_variance(&self) -> f64 {
        self.output_variance
    }

    pub fn length_scales(&self) -> &[f64] {
        &self.length_scales
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// Input dimension this parameter set applies to.
    pub fn input_dim(&self) -> usize {
        self.length_scales.len()
    }

    /// Number of free hyperparameters: output variance, one length-scale per
    /// input dimension, noise variance.
    pub fn param_count(&self) -> usize {
        self.length_scales.len() + 2
    }

    /// Flatten to the optimizer's log-space vector, ordered as
    /// (log sigma^2, log l_1 .. log l_d, log sigma_z^2).
    pub fn to_log_vec(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.push(self.output_variance.ln());
        v.extend(self.length_scales.iter().map(|l| l.ln()));
        v.push(self.noise_variance.ln());
        DVector::from_vec(v)
    }

    /// Inverse of [`Hyperparameters::to_log_vec`].
    pub fn from_log_vec(v: &DVector<f64>) -> Result<Self, GpError> {
        if v.len() < 3 {
            return Err(GpError::InvalidArgument(
                "log-hyperparameter vector needs at least 3 entries".into(),
            ));
        }
        let d = v.len() - 2;
        Self::new(
            v[0].exp(),
            (0..d).map(|j| v[1 + j].exp()).collect(),
            v[v.len() - 1].exp(),
        )
    }
}

/// Ordered input rows paired with scalar outputs. May be empty, in which
/// case predictions fall back to the prior.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: DMatrix<f64>,
    outputs: DVector<f64>,
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, outputs: DVector<f64>) -> Result<Self, GpError> {
        if inputs.nrows() != outputs.len() {
            return Err(GpError::DimensionMismatch(format!(
                "{} input rows vs {} outputs",
                inputs.nrows(),
                outputs.len()
            )));
        }
        Ok(Self { inputs, outputs })
    }

    /// Build from row slices; all rows must share one dimension.
    pub fn from_rows(rows: &[&[f64]], outputs: &[f64]) -> Result<Self, GpError> {
        if rows.len() != outputs.len() {
            return Err(GpError::DimensionMismatch(format!(
                "{} input rows vs {} outputs",
                rows.len(),
                outputs.len()
            )));
        }
        let d = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != d) {
            return Err(GpError::DimensionMismatch("ragged input rows".into()));
        }
        let inputs = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Ok(Self {
            inputs,
            outputs: DVector::from_column_slice(outputs),
        })
    }

    /// Empty dataset with the given input dimension.
    pub fn empty(dim: usize) -> Self {
        Self {
            inputs: DMatrix::zeros(0, dim),
            outputs: DVector::zeros(0),
        }
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn outputs(&self) -> &DVector<f64> {
        &self.outputs
    }

    /// Copy of this dataset with one extra (input, output) row appended.
    pub fn with_row(&self, input: &[f64], output: f64) -> Result<Self, GpError> {
        if !self.is_empty() && input.len() != self.dim() {
            return Err(GpError::DimensionMismatch(format!(
                "appended row has dim {} but dataset has dim {}",
                input.len(),
                self.dim()
            )));
        }
        let n = self.len();
        let mut inputs = DMatrix::zeros(n + 1, input.len());
        inputs.view_mut((0, 0), (n, input.len())).copy_from(&self.inputs);
        for (j, v) in input.iter().enumerate() {
            inputs[(n, j)] = *v;
        }
        let mut outputs = DVector::zeros(n + 1);
        outputs.rows_mut(0, n).copy_from(&self.outputs);
        outputs[n] = output;
        Ok(Self { inputs, outputs })
    }
}

/// Gaussian posterior moments for a single coordinate at one test input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

/// Squared exponential kernel value between two input points.
pub fn sq_exp_kernel(a: &[f64], b: &[f64], h: &Hyperparameters) -> Result<f64, GpError> {
    if a.len() != b.len() || a.len() != h.input_dim() {
        return Err(GpError::DimensionMismatch(format!(
            "kernel inputs of dim {}/{} vs {} length-scales",
            a.len(),
            b.len(),
            h.input_dim()
        )));
    }
    let mut q = 0.0;
    for j in 0..a.len() {
        let d = (a[j] - b[j]) / h.length_scales[j];
        q += d * d;
    }
    Ok(h.output_variance * (-0.5 * q).exp())
}

/// Cross-covariance matrix between the rows of `a` and the rows of `b`.
pub fn kernel_matrix(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    h: &Hyperparameters,
) -> Result<DMatrix<f64>, GpError> {
    if a.ncols() != h.input_dim() || b.ncols() != h.input_dim() {
        return Err(GpError::DimensionMismatch(format!(
            "input dims {}/{} vs {} length-scales",
            a.ncols(),
            b.ncols(),
            h.input_dim()
        )));
    }
    let mut k = DMatrix::zeros(a.nrows(), b.nrows());
    for i in 0..a.nrows() {
        for j in 0..b.nrows() {
            let mut q = 0.0;
            for c in 0..a.ncols() {
                let d = (a[(i, c)] - b[(j, c)]) / h.length_scales[c];
                q += d * d;
            }
            k[(i, j)] = h.output_variance * (-0.5 * q).exp();
        }
    }
    Ok(k)
}

/// Cholesky of `sigma` with diagonal jitter escalation: plain attempt first,
/// then `1e-10 * sigma^2 * 10^k` for k = 0..5, after which a numerical error
/// carrying the attempted levels is raised.
fn cholesky_with_jitter(
    sigma: &DMatrix<f64>,
    output_variance: f64,
) -> Result<Cholesky<f64, Dyn>, GpError> {
    if let Some(chol) = Cholesky::new(sigma.clone()) {
        return Ok(chol);
    }
    let mut attempted = vec![0.0];
    let mut jitter = JITTER_BASE * output_variance;
    for _ in 0..JITTER_ATTEMPTS {
        let mut m = sigma.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        attempted.push(jitter);
        if let Some(chol) = Cholesky::new(m) {
            return Ok(chol);
        }
        jitter *= 10.0;
    }
    Err(GpError::Factorization { attempted })
}

fn noisy_covariance(train: &Dataset, h: &Hyperparameters) -> Result<DMatrix<f64>, GpError> {
    let mut sigma = kernel_matrix(train.inputs(), train.inputs(), h)?;
    for i in 0..sigma.nrows() {
        sigma[(i, i)] += h.noise_variance;
    }
    Ok(sigma)
}

/// GP posterior moments at `test_input` under a zero mean function.
pub fn gp_predict(
    train: &Dataset,
    test_input: &[f64],
    h: &Hyperparameters,
) -> Result<Prediction, GpError> {
    let prior_var = sq_exp_kernel(test_input, test_input, h)?;
    if train.is_empty() {
        return Ok(Prediction {
            mean: 0.0,
            variance: prior_var,
        });
    }
    if train.dim() != h.input_dim() {
        return Err(GpError::DimensionMismatch(format!(
            "training dim {} vs {} length-scales",
            train.dim(),
            h.input_dim()
        )));
    }
    let sigma = noisy_covariance(train, h)?;
    let chol = cholesky_with_jitter(&sigma, h.output_variance)?;
    let x_star = DMatrix::from_fn(1, test_input.len(), |_, j| test_input[j]);
    let k_star = kernel_matrix(train.inputs(), &x_star, h)?; // n x 1
    let k_star = k_star.column(0).clone_owned();
    let alpha = chol.solve(train.outputs());
    let v = chol.solve(&k_star);
    let mean = k_star.dot(&alpha);
    let variance = (prior_var - k_star.dot(&v)).max(0.0);
    Ok(Prediction { mean, variance })
}

/// Log marginal likelihood of a non-empty dataset.
pub fn log_marginal_likelihood(train: &Dataset, h: &Hyperparameters) -> Result<f64, GpError> {
    if train.is_empty() {
        return Err(GpError::EmptyDataset);
    }
    let n = train.len() as f64;
    let sigma = noisy_covariance(train, h)?;
    let chol = cholesky_with_jitter(&sigma, h.output_variance)?;
    let alpha = chol.solve(train.outputs());
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    Ok(-0.5 * train.outputs().dot(&alpha)
        - 0.5 * log_det
        - 0.5 * n * (2.0 * std::f64::consts::PI).ln())
}

/// Gradient of the log marginal likelihood with respect to the
/// log-hyperparameters, ordered as (log sigma^2, log l_1 .. log l_d,
/// log sigma_z^2).
pub fn lml_gradient(train: &Dataset, h: &Hyperparameters) -> Result<DVector<f64>, GpError> {
    if train.is_empty() {
        return Err(GpError::EmptyDataset);
    }
    let d = h.input_dim();
    let k = kernel_matrix(train.inputs(), train.inputs(), h)?;
    let mut sigma = k.clone();
    for i in 0..sigma.nrows() {
        sigma[(i, i)] += h.noise_variance;
    }
    let chol = cholesky_with_jitter(&sigma, h.output_variance)?;
    let alpha = chol.solve(train.outputs());
    let sigma_inv = chol.inverse();

    // dL/dtheta = 0.5 tr((alpha alpha' - Sigma^-1) dSigma/dtheta); all the
    // derivative matrices here are symmetric so the trace reduces to an
    // element-wise product sum.
    let half_trace = |grad_mat: &DMatrix<f64>| -> f64 {
        let n = grad_mat.nrows();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += (alpha[i] * alpha[j] - sigma_inv[(i, j)]) * grad_mat[(i, j)];
            }
        }
        0.5 * acc
    };

    let mut grad = DVector::zeros(d + 2);
    // dSigma/dlog sigma^2 = K
    grad[0] = half_trace(&k);
    // dSigma/dlog l_j = K .* D_j with D_j[i,m] = (x_ij - x_mj)^2 / l_j^2
    for j in 0..d {
        let lj2 = h.length_scales[j] * h.length_scales[j];
        let n = train.len();
        let mut gm = DMatrix::zeros(n, n);
        for i in 0..n {
            for m in 0..n {
                let diff = train.inputs()[(i, j)] - train.inputs()[(m, j)];
                gm[(i, m)] = k[(i, m)] * diff * diff / lj2;
            }
        }
        grad[1 + j] = half_trace(&gm);
    }
    // dSigma/dlog sigma_z^2 = sigma_z^2 I
    let n = train.len();
    let mut acc = 0.0;
    for i in 0..n {
        acc += alpha[i] * alpha[i] - sigma_inv[(i, i)];
    }
    grad[d + 1] = 0.5 * h.noise_variance * acc;
    Ok(grad)
}

/// Which marginal-likelihood objective the optimizer maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Pooled log marginal likelihood of exactly one dataset.
    Standard,
    /// Sum of per-expert log marginal likelihoods with shared hyperparameters.
    Factorized,
}

#[derive(Debug, Clone, Copy)]
pub struct OptimizerOptions {
    pub max_iters: usize,
    /// Stop when the gradient infinity-norm falls below this.
    pub grad_tol: f64,
    /// Stop when the relative objective change falls below this.
    pub obj_tol: f64,
    /// Keep the noise variance pinned at its initial value instead of
    /// learning it.
    pub freeze_noise: bool,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            grad_tol: 1e-4,
            obj_tol: 1e-8,
            freeze_noise: false,
        }
    }
}

fn objective_value(datasets: &[&Dataset], h: &Hyperparameters) -> Result<f64, GpError> {
    let mut total = 0.0;
    for ds in datasets {
        total += log_marginal_likelihood(ds, h)?;
    }
    Ok(total)
}

fn objective_gradient(datasets: &[&Dataset], h: &Hyperparameters) -> Result<DVector<f64>, GpError> {
    let mut total = DVector::zeros(h.param_count());
    for ds in datasets {
        total += lml_gradient(ds, h)?;
    }
    Ok(total)
}

fn clamp_log(v: &mut DVector<f64>) {
    let lo = HYPER_MIN.ln();
    let hi = HYPER_MAX.ln();
    for x in v.iter_mut() {
        *x = x.clamp(lo, hi);
    }
}

/// Maximize the chosen marginal-likelihood objective by projected gradient
/// ascent with backtracking line search in log-hyperparameter space.
///
/// Deterministic given the datasets and the initial point; the returned
/// parameters never score worse than `init`.
pub fn optimize_hyperparameters(
    datasets: &[Dataset],
    init: &Hyperparameters,
    objective: Objective,
) -> Result<Hyperparameters, GpError> {
    optimize_hyperparameters_with(datasets, init, objective, OptimizerOptions::default())
}

pub fn optimize_hyperparameters_with(
    datasets: &[Dataset],
    init: &Hyperparameters,
    objective: Objective,
    opts: OptimizerOptions,
) -> Result<Hyperparameters, GpError> {
    let active: Vec<&Dataset> = match objective {
        Objective::Standard => {
            if datasets.len() != 1 {
                return Err(GpError::InvalidArgument(format!(
                    "standard objective requires exactly one dataset, got {}",
                    datasets.len()
                )));
            }
            datasets.iter().collect()
        }
        Objective::Factorized => datasets.iter().filter(|d| !d.is_empty()).collect(),
    };
    if active.is_empty() || active.iter().all(|d| d.is_empty()) {
        return Err(GpError::EmptyDataset);
    }

    let mut v = init.to_log_vec();
    clamp_log(&mut v);
    let mut h = Hyperparameters::from_log_vec(&v)?;
    let mut f = objective_value(&active, &h)?;
    let mut stalled = 0usize;

    for _ in 0..opts.max_iters {
        let mut g = objective_gradient(&active, &h)?;
        if opts.freeze_noise {
            let last = g.len() - 1;
            g[last] = 0.0;
        }
        let g_inf = g.amax();
        if g_inf < opts.grad_tol {
            break;
        }
        // First trial step bounded to 1 in log-space infinity norm.
        let mut step = 1.0_f64.min(1.0 / g_inf);
        let mut improved = false;
        for _ in 0..50 {
            let mut cand = &v + &g * step;
            clamp_log(&mut cand);
            if cand == v {
                break;
            }
            let cand_h = Hyperparameters::from_log_vec(&cand)?;
            match objective_value(&active, &cand_h) {
                Ok(cand_f) if cand_f > f => {
                    let rel = (cand_f - f).abs() / f.abs().max(1.0);
                    v = cand;
                    h = cand_h;
                    // Stop only after several consecutive near-flat
                    // improvements, not on the first one, which may just be
                    // a heavily backtracked step.
                    if rel < opts.obj_tol {
                        stalled += 1;
                    } else {
                        stalled = 0;
                    }
                    f = cand_f;
                    improved = true;
                    break;
                }
                // Either no improvement or a factorization failure inside
                // the line search: shrink the step.
                _ => step *= 0.5,
            }
        }
        if !improved || stalled >= 5 {
            break;
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn h1(sigma2: f64, l: f64, noise: f64) -> Hyperparameters {
        Hyperparameters::new(sigma2, vec![l], noise).unwrap()
    }

    #[test]
    fn kernel_zero_distance_is_output_variance() {
        let h = h1(3.7, 2.0, 0.1);
        assert_eq!(sq_exp_kernel(&[1.5], &[1.5], &h).unwrap(), 3.7);
    }

    #[test]
    fn kernel_unit_distance_scalar_value() {
        let h = h1(1.0, 1.0, 0.1);
        let v = sq_exp_kernel(&[0.0], &[1.0], &h).unwrap();
        assert_relative_eq!(v, (-0.5_f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(v, 0.606531, max_relative = 1e-6);
    }

    #[test]
    fn kernel_large_length_scale_approaches_output_variance() {
        let h = h1(2.5, 1e9, 0.1);
        let v = sq_exp_kernel(&[0.0], &[100.0], &h).unwrap();
        assert_relative_eq!(v, 2.5, max_relative = 1e-10);
    }

    #[test]
    fn kernel_dimension_mismatch_errors() {
        let h = h1(1.0, 1.0, 0.1);
        assert!(matches!(
            sq_exp_kernel(&[0.0, 1.0], &[0.0, 1.0], &h),
            Err(GpError::DimensionMismatch(_))
        ));
        assert!(matches!(
            sq_exp_kernel(&[0.0], &[0.0, 1.0], &h),
            Err(GpError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn kernel_matrix_single_row() {
        let h = h1(4.0, 1.0, 0.1);
        let a = DMatrix::from_row_slice(1, 1, &[0.3]);
        let k = kernel_matrix(&a, &a, &h).unwrap();
        assert_eq!(k.nrows(), 1);
        assert_eq!(k[(0, 0)], 4.0);
    }

    #[test]
    fn kernel_matrix_symmetry_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = Hyperparameters::new(2.0, vec![1.0, 3.0], 0.1).unwrap();
        let a = DMatrix::from_fn(6, 2, |_, _| rng.gen_range(-5.0..5.0));
        let k = kernel_matrix(&a, &a, &h).unwrap();
        assert_relative_eq!(k.clone(), k.transpose(), max_relative = 1e-14);
    }

    #[test]
    fn noisy_kernel_matrix_smallest_eigenvalue_at_least_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let h = h1(1.5, 0.7, 0.25);
        for _ in 0..20 {
            let a = DMatrix::from_fn(5, 1, |_, _| rng.gen_range(-3.0..3.0));
            let mut k = kernel_matrix(&a, &a, &h).unwrap();
            for i in 0..5 {
                k[(i, i)] += h.noise_variance();
            }
            let eigs = k.symmetric_eigenvalues();
            let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min >= h.noise_variance() - 1e-10, "min eig {min}");
        }
    }

    #[test]
    fn predict_empty_dataset_returns_prior() {
        let h = h1(2.0, 1.0, 0.5);
        let p = gp_predict(&Dataset::empty(1), &[3.0], &h).unwrap();
        assert_eq!(p.mean, 0.0);
        assert_eq!(p.variance, 2.0);
    }

    #[test]
    fn predict_single_point_hand_value() {
        let h = h1(1.0, 1.0, 1.0);
        let ds = Dataset::from_rows(&[&[0.0]], &[1.0]).unwrap();
        let p = gp_predict(&ds, &[0.0], &h).unwrap();
        assert_relative_eq!(p.mean, 0.5, max_relative = 1e-12);
        assert_relative_eq!(p.variance, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn predict_noiseless_limit_interpolates() {
        let h = h1(1.0, 1.0, 1e-12);
        let ds = Dataset::from_rows(&[&[0.0]], &[1.0]).unwrap();
        let p = gp_predict(&ds, &[0.0], &h).unwrap();
        assert!((p.mean - 1.0).abs() < 1e-6);
        assert!(p.variance < 1e-6);
    }

    #[test]
    fn predict_far_from_training_recovers_prior() {
        let h = h1(3.0, 2.0, 0.5);
        let ds = Dataset::from_rows(&[&[0.0], &[1.0], &[2.0]], &[1.0, 2.0, 1.5]).unwrap();
        let p = gp_predict(&ds, &[2.0 * 20.0 + 10.0], &h).unwrap();
        assert!((p.variance - 3.0).abs() / 3.0 < 0.01);
        assert!(p.mean.abs() < 1e-3);
    }

    #[test]
    fn lml_single_zero_observation() {
        // n=1, z=0, sigma^2 + sigma_z^2 = 1
        let h = h1(0.5, 1.0, 0.5);
        let ds = Dataset::from_rows(&[&[0.0]], &[0.0]).unwrap();
        let v = log_marginal_likelihood(&ds, &h).unwrap();
        assert_relative_eq!(v, -0.918939, max_relative = 1e-5);
    }

    #[test]
    fn lml_single_observation_scalar_formula() {
        // For n=1 the marginal is N(z; 0, sigma^2 + sigma_z^2), so with
        // (c, v) = (2, 4): -c^2/(2v) - 0.5 ln v - 0.5 ln 2pi.
        let h = h1(3.0, 1.0, 1.0);
        let ds = Dataset::from_rows(&[&[0.0]], &[2.0]).unwrap();
        let expected = -4.0 / 8.0 - 0.5 * 4.0_f64.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert_relative_eq!(
            log_marginal_likelihood(&ds, &h).unwrap(),
            expected,
            max_relative = 1e-12
        );
    }

    #[test]
    fn lml_invariant_under_row_permutation() {
        let h = h1(1.3, 0.8, 0.2);
        let ds = Dataset::from_rows(&[&[0.0], &[1.0], &[2.5]], &[0.3, -1.0, 0.7]).unwrap();
        let perm = Dataset::from_rows(&[&[2.5], &[0.0], &[1.0]], &[0.7, 0.3, -1.0]).unwrap();
        let a = log_marginal_likelihood(&ds, &h).unwrap();
        let b = log_marginal_likelihood(&perm, &h).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn lml_empty_dataset_errors() {
        let h = h1(1.0, 1.0, 1.0);
        assert!(matches!(
            log_marginal_likelihood(&Dataset::empty(1), &h),
            Err(GpError::EmptyDataset)
        ));
    }

    #[test]
    fn gradient_hand_value_scalar_case() {
        // n=1, z=0: d/dlog sigma_z^2 = 0.5 (z^2/v^2 - 1/v) sigma_z^2 at
        // v = sigma^2 + sigma_z^2 = 1, sigma_z^2 = 0.5 -> -0.25.
        let h = h1(0.5, 1.0, 0.5);
        let ds = Dataset::from_rows(&[&[0.0]], &[0.0]).unwrap();
        let g = lml_gradient(&ds, &h).unwrap();
        assert_relative_eq!(g[2], -0.25, max_relative = 1e-12);
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..20 {
            let h = Hyperparameters::new(
                rng.gen_range(0.5..3.0),
                vec![rng.gen_range(0.5..2.5)],
                rng.gen_range(0.2..1.5),
            )
            .unwrap();
            let n = 10;
            let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-4.0..4.0)]).collect();
            let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
            let outs: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let ds = Dataset::from_rows(&refs, &outs).unwrap();
            let g = lml_gradient(&ds, &h).unwrap();
            let v0 = h.to_log_vec();
            let eps = 1e-5;
            for k in 0..v0.len() {
                let mut vp = v0.clone();
                vp[k] += eps;
                let mut vm = v0.clone();
                vm[k] -= eps;
                let fp =
                    log_marginal_likelihood(&ds, &Hyperparameters::from_log_vec(&vp).unwrap())
                        .unwrap();
                let fm =
                    log_marginal_likelihood(&ds, &Hyperparameters::from_log_vec(&vm).unwrap())
                        .unwrap();
                let fd = (fp - fm) / (2.0 * eps);
                let scale = fd.abs().max(g[k].abs()).max(1e-8);
                assert!(
                    (fd - g[k]).abs() / scale < 1e-5,
                    "case {case} param {k}: analytic {} vs fd {fd}",
                    g[k]
                );
            }
        }
    }

    #[test]
    fn optimizer_reaches_stationary_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth = h1(2.0, 1.5, 0.3);
        let n = 40;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 * 0.25]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let outs = sample_from_prior(&refs, &truth, &mut rng);
        let ds = Dataset::from_rows(&refs, &outs).unwrap();
        let init = h1(1.0, 1.0, 1.0);
        let fit = optimize_hyperparameters(std::slice::from_ref(&ds), &init, Objective::Standard)
            .unwrap();
        let g = lml_gradient(&ds, &fit).unwrap();
        assert!(g.amax() <= 1e-3, "gradient norm {}", g.amax());
    }

    #[test]
    fn optimizer_is_idempotent_at_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth = h1(1.5, 1.0, 0.4);
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 * 0.3]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let outs = sample_from_prior(&refs, &truth, &mut rng);
        let ds = Dataset::from_rows(&refs, &outs).unwrap();
        let init = h1(1.0, 1.0, 1.0);
        let fit = optimize_hyperparameters(std::slice::from_ref(&ds), &init, Objective::Standard)
            .unwrap();
        let refit = optimize_hyperparameters(std::slice::from_ref(&ds), &fit, Objective::Standard)
            .unwrap();
        let f0 = log_marginal_likelihood(&ds, &fit).unwrap();
        let f1 = log_marginal_likelihood(&ds, &refit).unwrap();
        assert!(f1 >= f0);
        assert!(f1 - f0 < 1e-6);
    }

    #[test]
    fn factorized_single_dataset_equals_standard_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let outs: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ds = Dataset::from_rows(&refs, &outs).unwrap();
        for _ in 0..5 {
            let h = Hyperparameters::new(
                rng.gen_range(0.5..4.0),
                vec![rng.gen_range(0.5..3.0)],
                rng.gen_range(0.1..1.0),
            )
            .unwrap();
            let standard = log_marginal_likelihood(&ds, &h).unwrap();
            let factorized = objective_value(&[&ds], &h).unwrap();
            assert_relative_eq!(standard, factorized, max_relative = 1e-14);
        }
    }

    #[test]
    fn optimizer_never_worsens_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rows: Vec<Vec<f64>> = (0..15).map(|i| vec![i as f64 * 0.5]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let outs: Vec<f64> = rows.iter().map(|r| r[0].sin() + rng.gen_range(-0.1..0.1)).collect();
        let ds = Dataset::from_rows(&refs, &outs).unwrap();
        let init = h1(0.7, 2.0, 0.9);
        let f0 = log_marginal_likelihood(&ds, &init).unwrap();
        let fit = optimize_hyperparameters(std::slice::from_ref(&ds), &init, Objective::Standard)
            .unwrap();
        let f1 = log_marginal_likelihood(&ds, &fit).unwrap();
        assert!(f1 >= f0);
    }

    #[test]
    fn frozen_noise_is_preserved_by_the_optimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.4]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let outs: Vec<f64> = rows.iter().map(|r| r[0].cos() + rng.gen_range(-0.2..0.2)).collect();
        let ds = Dataset::from_rows(&refs, &outs).unwrap();
        let init = h1(1.0, 1.0, 0.123);
        let opts = OptimizerOptions {
            freeze_noise: true,
            ..OptimizerOptions::default()
        };
        let fit = optimize_hyperparameters_with(
            std::slice::from_ref(&ds),
            &init,
            Objective::Standard,
            opts,
        )
        .unwrap();
        assert_relative_eq!(fit.noise_variance(), 0.123, max_relative = 1e-12);
        assert!(
            log_marginal_likelihood(&ds, &fit).unwrap()
                >= log_marginal_likelihood(&ds, &init).unwrap()
        );
    }

    #[test]
    fn all_empty_datasets_error() {
        let init = h1(1.0, 1.0, 1.0);
        let ds = vec![Dataset::empty(1), Dataset::empty(1)];
        assert!(matches!(
            optimize_hyperparameters(&ds, &init, Objective::Factorized),
            Err(GpError::EmptyDataset)
        ));
    }

    /// Draw one joint sample of noisy outputs at the given inputs from the
    /// GP prior defined by `h` (test-only oracle helper).
    pub(super) fn sample_from_prior(
        rows: &[&[f64]],
        h: &Hyperparameters,
        rng: &mut ChaCha8Rng,
    ) -> Vec<f64> {
        let n = rows.len();
        let inputs = DMatrix::from_fn(n, rows[0].len(), |i, j| rows[i][j]);
        let mut cov = kernel_matrix(&inputs, &inputs, h).unwrap();
        for i in 0..n {
            cov[(i, i)] += h.noise_variance() + 1e-10;
        }
        let chol = Cholesky::new(cov).unwrap();
        let std_normal: DVector<f64> =
            DVector::from_fn(n, |_, _| rand_distr::StandardNormal.sample(rng));
        let sample = chol.l() * std_normal;
        sample.iter().cloned().collect()
    }
}
