//! Timing benchmark for the marginal-likelihood objective and gradient:
//! one pooled evaluation versus a factorized evaluation over M equal random
//! partitions of the same data.
//!
//! The arithmetic mirrors the library's `log_marginal_likelihood` and
//! `lml_gradient` exactly (verified against them in the tests) but runs on
//! flat buffers factored by the system LAPACK, which keeps the N = 10000
//! pooled case tractable.

use std::os::raw::c_char;
use std::time::{Duration, Instant};

use dgpt::gp::Hyperparameters;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

extern "C" {
    fn dpotrf_(uplo: *const c_char, n: *const i32, a: *mut f64, lda: *const i32, info: *mut i32);
    fn dpotri_(uplo: *const c_char, n: *const i32, a: *mut f64, lda: *const i32, info: *mut i32);
    fn dpotrs_(
        uplo: *const c_char,
        n: *const i32,
        nrhs: *const i32,
        a: *const f64,
        lda: *const i32,
        b: *mut f64,
        ldb: *const i32,
        info: *mut i32,
    );
}

/// Noisy samples of f(x) = 5 x1^2 + sin(12 x2) on the unit square with
/// observation noise 0.5, the benchmark's data-generating function.
pub fn benchmark_data(n: usize, seed: u64) -> (Vec<[f64; 2]>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(n);
    let mut outputs = Vec::with_capacity(n);
    for _ in 0..n {
        let x1: f64 = rng.gen();
        let x2: f64 = rng.gen();
        let noise: f64 = StandardNormal.sample(&mut rng);
        inputs.push([x1, x2]);
        outputs.push(5.0 * x1 * x1 + f64::sin(12.0 * x2) + 0.5 * noise);
    }
    (inputs, outputs)
}

/// Objective and log-space gradient of one GP dataset, computed on flat
/// buffers: ordered (d log sigma^2, d log l_1, d log l_2, d log sigma_z^2).
pub fn lml_and_gradient_lapack(
    inputs: &[[f64; 2]],
    outputs: &[f64],
    h: &Hyperparameters,
) -> (f64, Vec<f64>) {
    let n = inputs.len();
    assert!(n > 0 && outputs.len() == n && h.length_scales().len() == 2);
    let sigma2 = h.output_variance();
    let ls = [h.length_scales()[0], h.length_scales()[1]];
    let noise = h.noise_variance();

    // Kernel matrix and its noisy copy (column-major == row-major here by
    // symmetry).
    let mut k = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let d0 = (inputs[i][0] - inputs[j][0]) / ls[0];
            let d1 = (inputs[i][1] - inputs[j][1]) / ls[1];
            let v = sigma2 * (-0.5 * (d0 * d0 + d1 * d1)).exp();
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let mut fac = k.clone();
    for i in 0..n {
        fac[i * n + i] += noise;
    }

    let ni = n as i32;
    let mut info = 0i32;
    let lower = b'L' as c_char;
    unsafe { dpotrf_(&lower, &ni, fac.as_mut_ptr(), &ni, &mut info) };
    assert_eq!(info, 0, "covariance not positive definite");
    let log_det: f64 = (0..n).map(|i| 2.0 * fac[i * n + i].ln()).sum();

    let mut alpha = outputs.to_vec();
    let one = 1i32;
    unsafe {
        dpotrs_(
            &lower, &ni, &one, fac.as_ptr(), &ni, alpha.as_mut_ptr(), &ni, &mut info,
        )
    };
    assert_eq!(info, 0);

    let quad: f64 = outputs.iter().zip(&alpha).map(|(z, a)| z * a).sum();
    let lml =
        -0.5 * quad - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    // In-place inverse of the noisy covariance from its factor.
    unsafe { dpotri_(&lower, &ni, fac.as_mut_ptr(), &ni, &mut info) };
    assert_eq!(info, 0);
    // dpotri('L') fills the column-major lower triangle, i.e. fac[j*n + i]
    // for i >= j; mirror it into the other triangle.
    for j in 0..n {
        for i in (j + 1)..n {
            fac[i * n + j] = fac[j * n + i];
        }
    }

    // 0.5 tr((alpha alpha' - Sigma^-1) dSigma/dtheta) accumulated in one
    // pass; dSigma terms are K, K .* D_j, and sigma_z^2 I.
    let mut g = vec![0.0f64; 4];
    for i in 0..n {
        for j in 0..n {
            let a = alpha[i] * alpha[j] - fac[i * n + j];
            let kij = k[i * n + j];
            g[0] += a * kij;
            let d0 = (inputs[i][0] - inputs[j][0]) / ls[0];
            let d1 = (inputs[i][1] - inputs[j][1]) / ls[1];
            g[1] += a * kij * d0 * d0;
            g[2] += a * kij * d1 * d1;
        }
        g[3] += (alpha[i] * alpha[i] - fac[i * n + i]) * noise;
    }
    for v in g.iter_mut() {
        *v *= 0.5;
    }
    (lml, g)
}

/// One timing record of the benchmark grid.
#[derive(Debug, Clone)]
pub struct BenchRecord {
    pub n: usize,
    pub m: usize,
    /// Median wall time of the pooled objective + gradient.
    pub centralized_ms: f64,
    /// Median wall time of the factorized objective + gradient.
    pub factorized_ms: f64,
    /// Factorized time divided by the number of experts.
    pub per_expert_ms: f64,
}

fn time_once<F: FnMut()>(mut f: F) -> Duration {
    let start = Instant::now();
    f();
    start.elapsed()
}

fn median_ms(mut samples: Vec<f64>) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    samples[samples.len() / 2]
}

/// Random equal partition of 0..n into m chunks.
fn partition(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let chunk = n.div_ceil(m);
    idx.chunks(chunk).map(|c| c.to_vec()).collect()
}

fn bench_hyperparameters() -> Hyperparameters {
    Hyperparameters::new(1.0, vec![1.0, 1.0], 0.25).expect("valid benchmark parameters")
}

/// Median wall time (ms over `repeats` runs) of the pooled objective and
/// gradient on the size-n benchmark dataset.
pub fn centralized_timing(n: usize, seed: u64, repeats: usize) -> f64 {
    let h = bench_hyperparameters();
    let (inputs, outputs) = benchmark_data(n, seed);
    let samples: Vec<f64> = (0..repeats)
        .map(|_| {
            time_once(|| {
                let _ = lml_and_gradient_lapack(&inputs, &outputs, &h);
            })
            .as_secs_f64()
                * 1e3
        })
        .collect();
    median_ms(samples)
}

/// Median wall time (ms over `repeats` runs) of the factorized objective and
/// gradient with m experts on the size-n benchmark dataset.
pub fn factorized_timing(n: usize, m: usize, seed: u64, repeats: usize) -> f64 {
    let h = bench_hyperparameters();
    let (inputs, outputs) = benchmark_data(n, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ m as u64);
    let parts = partition(n, m, &mut rng);
    let samples: Vec<f64> = (0..repeats)
        .map(|_| {
            time_once(|| {
                for part in &parts {
                    let xs: Vec<[f64; 2]> = part.iter().map(|&i| inputs[i]).collect();
                    let zs: Vec<f64> = part.iter().map(|&i| outputs[i]).collect();
                    let _ = lml_and_gradient_lapack(&xs, &zs, &h);
                }
            })
            .as_secs_f64()
                * 1e3
        })
        .collect();
    median_ms(samples)
}

/// Time the pooled versus factorized objective+gradient over the requested
/// grid; `repeats` runs per cell, median reported.
pub fn timing_benchmark(
    n_points: &[usize],
    m_experts: &[usize],
    seed: u64,
    repeats: usize,
) -> Vec<BenchRecord> {
    let mut records = Vec::new();
    for &n in n_points {
        let centralized_ms = centralized_timing(n, seed, repeats);
        for &m in m_experts {
            let factorized_ms = factorized_timing(n, m, seed, repeats);
            records.push(BenchRecord {
                n,
                m,
                centralized_ms,
                factorized_ms,
                per_expert_ms: factorized_ms / m as f64,
            });
        }
    }
    records
}

#[cfg(test)]
mod tests {
    use super::*;
    use dgpt::gp::{self, Dataset};

    #[test]
    fn lapack_path_matches_library_lml_and_gradient() {
        let (inputs, outputs) = benchmark_data(120, 9);
        let h = Hyperparameters::new(1.3, vec![0.8, 1.7], 0.3).unwrap();
        let rows: Vec<&[f64]> = inputs.iter().map(|r| r.as_slice()).collect();
        let ds = Dataset::from_rows(&rows, &outputs).unwrap();
        let expect_lml = gp::log_marginal_likelihood(&ds, &h).unwrap();
        let expect_grad = gp::lml_gradient(&ds, &h).unwrap();
        let (lml, grad) = lml_and_gradient_lapack(&inputs, &outputs, &h);
        assert!(
            ((lml - expect_lml) / expect_lml.abs()).abs() < 1e-9,
            "{lml} vs {expect_lml}"
        );
        for i in 0..4 {
            let scale = expect_grad[i].abs().max(1.0);
            assert!(
                (grad[i] - expect_grad[i]).abs() / scale < 1e-9,
                "component {i}: {} vs {}",
                grad[i],
                expect_grad[i]
            );
        }
    }

    #[test]
    fn partitions_cover_all_points_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let parts = partition(1000, 7, &mut rng);
        let mut seen = vec![false; 1000];
        for p in &parts {
            for &i in p {
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn benchmark_data_is_deterministic_and_on_model() {
        let (a_in, a_out) = benchmark_data(50, 3);
        let (b_in, b_out) = benchmark_data(50, 3);
        assert_eq!(a_in, b_in);
        assert_eq!(a_out, b_out);
        // Residuals against the noiseless function look like sigma = 0.5.
        let resid: Vec<f64> = a_in
            .iter()
            .zip(&a_out)
            .map(|(x, z)| z - (5.0 * x[0] * x[0] + (12.0 * x[1]).sin()))
            .collect();
        let ms = resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64;
        assert!(ms > 0.05 && ms < 1.0, "residual mean square {ms}");
    }
}
