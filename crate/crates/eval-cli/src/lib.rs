//! Experiment orchestration for the distributed GP tracker: single scenario
//! runs, Monte-Carlo sweeps, metric aggregation, and CSV emission.

pub mod bench;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use dgpt::aggregate::AggregationMethod;
use dgpt::config::{
    FeatureKind, HybridInput, MethodKind, Scenario, ScenarioConfig, TrackerKind, TrackerSettings,
};
use dgpt::hybrid::{self, PoissonLikelihoodParams};
use dgpt::sim::{self, MeasurementStreams};
use dgpt::tracker::{self, Tracker, TrackerConfig};
use dgpt::ucb::{self, BoundMethod, UcbConfig};
use rayon::prelude::*;

/// Errors ranked by CLI exit code: configuration problems exit 1,
/// numerical/runtime failures exit 2.
#[derive(Debug)]
pub enum EvalError {
    Config(String),
    Numerical(String),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::Config(m) => write!(f, "configuration error: {m}"),
            EvalError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for EvalError {}

impl EvalError {
    pub fn exit_code(&self) -> i32 {
        match self {
            EvalError::Config(_) => 1,
            EvalError::Numerical(_) => 2,
        }
    }
}

fn numerical<E: fmt::Display>(e: E) -> EvalError {
    EvalError::Numerical(e.to_string())
}

/// Load and validate a scenario description from a TOML file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, EvalError> {
    let text = fs::read_to_string(path)
        .map_err(|e| EvalError::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg: ScenarioConfig = toml::from_str(&text)
        .map_err(|e| EvalError::Config(format!("cannot parse {}: {e}", path.display())))?;
    validate_config(&cfg)?;
    Ok(cfg)
}

pub fn validate_config(cfg: &ScenarioConfig) -> Result<(), EvalError> {
    if cfg.trajectory.length == 0 {
        return Err(EvalError::Config("trajectory length must be positive".into()));
    }
    if !(cfg.noise_std > 0.0) {
        return Err(EvalError::Config("noise_std must be positive".into()));
    }
    if cfg.clutter_rate < 0.0 {
        return Err(EvalError::Config("clutter_rate must be non-negative".into()));
    }
    if !(cfg.ucb_delta > 0.0 && cfg.ucb_delta < 1.0) {
        return Err(EvalError::Config("ucb_delta must lie in (0, 1)".into()));
    }
    if cfg.tracker.window == 0 {
        return Err(EvalError::Config("tracker window must be positive".into()));
    }
    Ok(())
}

/// Map the scenario's tracker settings onto an aggregation method.
pub fn aggregation_method(s: &TrackerSettings) -> AggregationMethod {
    match s.aggregation {
        MethodKind::Poe => AggregationMethod::Poe,
        MethodKind::Gpoe => AggregationMethod::Gpoe(s.weight_rule),
        MethodKind::Bcm => AggregationMethod::Bcm,
        MethodKind::Rbcm => AggregationMethod::Rbcm(s.weight_rule),
    }
}

/// Root-mean-square error over the range of the truth, in percent.
pub fn nrmse(estimates: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    if estimates.len() != truth.len() || truth.is_empty() {
        return Err(EvalError::Config(
            "nrmse needs equal, non-zero-length series".into(),
        ));
    }
    let max = truth.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = truth.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > min) {
        return Err(EvalError::Numerical(
            "nrmse undefined for constant truth".into(),
        ));
    }
    let mse = estimates
        .iter()
        .zip(truth)
        .map(|(e, t)| (e - t) * (e - t))
        .sum::<f64>()
        / truth.len() as f64;
    Ok(mse.sqrt() / (max - min) * 100.0)
}

/// Seed for Monte-Carlo run `k`: splitmix64 of the master seed XORed with
/// the run index scaled by the splitmix increment. Stable under changing
/// the total run count, so partial re-runs reproduce.
pub fn run_seed(master_seed: u64, k: u64) -> u64 {
    splitmix64(master_seed ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// One per-step record of a scenario run.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t: u32,
    pub truth_x: f64,
    pub truth_y: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub var_x: f64,
    pub var_y: f64,
    pub ucb_x: f64,
    pub ucb_y: f64,
    pub covered_x: bool,
    pub covered_y: bool,
    pub n_meas: usize,
    pub n_active: usize,
}

/// Full outcome of one scenario run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub records: Vec<StepRecord>,
    pub rmse_x: f64,
    pub rmse_y: f64,
    pub nrmse_x: f64,
    pub nrmse_y: f64,
    pub ucb_coverage_x: f64,
    pub ucb_coverage_y: f64,
    pub ci3_coverage_x: f64,
    pub ci3_coverage_y: f64,
    pub wall_time_ms: f64,
    /// Mean per-step tracker wall time, for the complexity contract.
    pub step_time_ms: f64,
}

/// Execute one full scenario run with the given seed.
pub fn run_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<RunResult, EvalError> {
    validate_config(cfg)?;
    let start = std::time::Instant::now();
    let network = sim::build_grid(&cfg.sensors, cfg.field, seed).map_err(numerical)?;
    let trajectory =
        sim::generate_trajectory(&cfg.trajectory, cfg.field, seed, cfg.trajectory.length)
            .map_err(numerical)?;
    let mut streams = MeasurementStreams::from_seed(seed);

    let mut tracker_cfg = TrackerConfig::new(
        cfg.tracker.window,
        cfg.tracker.feature,
        aggregation_method(&cfg.tracker),
    );
    tracker_cfg.clip_negative_weights = cfg.tracker.clip_negative_weights;
    tracker_cfg.learn_noise = cfg.tracker.learn_noise;
    tracker_cfg.initial_noise_variance = cfg.noise_std * cfg.noise_std;
    let mut tracker = Tracker::new(tracker_cfg).map_err(numerical)?;

    let hybrid_params = PoissonLikelihoodParams::new(
        cfg.lambda_target,
        cfg.clutter_rate,
        std::f64::consts::PI * cfg.sensors.sensing_radius * cfg.sensors.sensing_radius,
        cfg.noise_std * cfg.noise_std,
    )
    .map_err(numerical)?;
    let bound_method = match cfg.tracker.aggregation {
        MethodKind::Rbcm | MethodKind::Bcm => BoundMethod::Rbcm,
        MethodKind::Poe | MethodKind::Gpoe => BoundMethod::Gpoe,
    };
    let ucb_cfg = UcbConfig::new(cfg.ucb_delta).map_err(numerical)?;

    let mut records = Vec::with_capacity(trajectory.len());
    let mut prev_prior: Option<(dgpt::gp::Prediction, dgpt::gp::Prediction)> = None;
    let mut step_time = std::time::Duration::ZERO;
    for state in &trajectory.states {
        let t = state.t;
        let truth = state.position;
        let scan = sim::generate_measurements(
            &network,
            truth,
            t,
            cfg.noise_std,
            cfg.clutter_rate,
            cfg.lambda_target,
            &mut streams,
        )
        .map_err(numerical)?;
        let grouped = tracker::group_by_sensor(&scan);
        let step_start = std::time::Instant::now();
        let est = match cfg.tracker.mode {
            TrackerKind::Centralized => tracker.centralized_step(&grouped, t),
            TrackerKind::Dgp | TrackerKind::Hybrid => tracker.step(&grouped, t),
        }
        .map_err(numerical)?;

        let (mut mean_x, mut mean_y, mut var_x, mut var_y) =
            (est.mean_x, est.mean_y, est.var_x, est.var_y);
        if cfg.tracker.mode == TrackerKind::Hybrid {
            if let Some((px, py)) = prev_prior {
                let measurements: Vec<[f64; 2]> = match cfg.tracker.hybrid_input {
                    HybridInput::Raw => scan.iter().map(|m| m.value).collect(),
                    HybridInput::Gated => tracker
                        .windows()
                        .values()
                        .filter_map(|w| w.entries.last())
                        .filter(|e| e.t == t)
                        .map(|e| [e.pseudo_x, e.pseudo_y])
                        .collect(),
                };
                let safe = |p: dgpt::gp::Prediction| dgpt::gp::Prediction {
                    mean: p.mean,
                    variance: p.variance.max(1e-12),
                };
                let (hx, hy) =
                    hybrid::hybrid_step(safe(px), safe(py), &measurements, &hybrid_params)
                        .map_err(numerical)?;
                mean_x = hx.mean;
                mean_y = hy.mean;
                var_x = hx.variance;
                var_y = hy.variance;
            }
        }
        prev_prior = Some((est.next_prior_x, est.next_prior_y));
        step_time += step_start.elapsed();

        // Confidence bounds: the theoretical UCB from the per-expert
        // committee, and the aggregated 3-sigma interval as its baseline.
        // Coasted steps carry no committee; the 3-sigma width stands in.
        let (ucb_x, ucb_y) = if est.experts_x.is_empty() {
            (3.0 * var_x.max(0.0).sqrt(), 3.0 * var_y.max(0.0).sqrt())
        } else {
            let gammas = ucb_cfg
                .per_expert_gamma(est.experts_x.len())
                .map_err(numerical)?;
            let bx = ucb::one_step_ucb(&est.experts_x, &gammas, bound_method)
                .map_err(numerical)?;
            let by = ucb::one_step_ucb(&est.experts_y, &gammas, bound_method)
                .map_err(numerical)?;
            (bx.bound, by.bound)
        };
        records.push(StepRecord {
            t,
            truth_x: truth[0],
            truth_y: truth[1],
            est_x: mean_x,
            est_y: mean_y,
            var_x,
            var_y,
            ucb_x,
            ucb_y,
            covered_x: (truth[0] - mean_x).abs() <= ucb_x,
            covered_y: (truth[1] - mean_y).abs() <= ucb_y,
            n_meas: scan.len(),
            n_active: est.active_sensor_count,
        });
    }

    let truth_x: Vec<f64> = records.iter().map(|r| r.truth_x).collect();
    let truth_y: Vec<f64> = records.iter().map(|r| r.truth_y).collect();
    let est_x: Vec<f64> = records.iter().map(|r| r.est_x).collect();
    let est_y: Vec<f64> = records.iter().map(|r| r.est_y).collect();
    let rmse = |est: &[f64], truth: &[f64]| {
        (est.iter()
            .zip(truth)
            .map(|(e, t)| (e - t) * (e - t))
            .sum::<f64>()
            / truth.len() as f64)
            .sqrt()
    };
    let frac = |pred: fn(&StepRecord) -> bool, records: &[StepRecord]| {
        records.iter().filter(|r| pred(r)).count() as f64 / records.len() as f64
    };
    let ci3 = |records: &[StepRecord], x: bool| {
        records
            .iter()
            .filter(|r| {
                if x {
                    (r.truth_x - r.est_x).abs() <= 3.0 * r.var_x.max(0.0).sqrt()
                } else {
                    (r.truth_y - r.est_y).abs() <= 3.0 * r.var_y.max(0.0).sqrt()
                }
            })
            .count() as f64
            / records.len() as f64
    };
    let n_steps = records.len().max(1);
    Ok(RunResult {
        rmse_x: rmse(&est_x, &truth_x),
        rmse_y: rmse(&est_y, &truth_y),
        nrmse_x: nrmse(&est_x, &truth_x)?,
        nrmse_y: nrmse(&est_y, &truth_y)?,
        ucb_coverage_x: frac(|r| r.covered_x, &records),
        ucb_coverage_y: frac(|r| r.covered_y, &records),
        ci3_coverage_x: ci3(&records, true),
        ci3_coverage_y: ci3(&records, false),
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        step_time_ms: step_time.as_secs_f64() * 1e3 / n_steps as f64,
        records,
    })
}

/// Aggregated Monte-Carlo metrics of one scenario variant.
#[derive(Debug, Clone)]
pub struct SummaryTable {
    pub scenario: String,
    pub variant: String,
    pub noise_std: f64,
    pub clutter_rate: f64,
    pub runs: usize,
    pub failed: usize,
    pub mean_nrmse_x: f64,
    pub mean_nrmse_y: f64,
    pub std_rmse_x: f64,
    pub std_rmse_y: f64,
    pub mean_ucb_coverage_x: f64,
    pub mean_ucb_coverage_y: f64,
    pub mean_ci3_coverage_x: f64,
    pub mean_ci3_coverage_y: f64,
    pub per_run: Vec<(u64, RunResult)>,
}

/// Short directory-friendly name of a tracker variant.
pub fn variant_name(s: &TrackerSettings) -> String {
    let method = match s.aggregation {
        MethodKind::Poe => "poe",
        MethodKind::Gpoe => "gpoe",
        MethodKind::Bcm => "bcm",
        MethodKind::Rbcm => "rbcm",
    };
    let feature = match s.feature {
        FeatureKind::Tgp => "tgp",
        FeatureKind::Stgp => "stgp",
    };
    let mode = match s.mode {
        TrackerKind::Dgp => "dgp",
        TrackerKind::Hybrid => "hybrid",
        TrackerKind::Centralized => "centralized",
    };
    format!("{method}-{feature}-{mode}")
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_dev(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Run the scenario `runs` times with derived seeds, in parallel, and
/// aggregate. Failed runs are excluded and counted.
pub fn monte_carlo(cfg: &ScenarioConfig, runs: usize) -> Result<SummaryTable, EvalError> {
    if runs == 0 {
        return Err(EvalError::Config("runs must be at least 1".into()));
    }
    validate_config(cfg)?;
    let outcomes: Vec<(u64, Result<RunResult, EvalError>)> = (0..runs as u64)
        .into_par_iter()
        .map(|k| {
            let seed = run_seed(cfg.seed, k);
            (seed, run_scenario(cfg, seed))
        })
        .collect();
    let failed = outcomes.iter().filter(|(_, r)| r.is_err()).count();
    let per_run: Vec<(u64, RunResult)> = outcomes
        .into_iter()
        .filter_map(|(s, r)| r.ok().map(|r| (s, r)))
        .collect();
    if per_run.is_empty() {
        return Err(EvalError::Numerical("all Monte-Carlo runs failed".into()));
    }
    Ok(SummaryTable {
        scenario: cfg.name.clone(),
        variant: variant_name(&cfg.tracker),
        noise_std: cfg.noise_std,
        clutter_rate: cfg.clutter_rate,
        runs,
        failed,
        mean_nrmse_x: mean(per_run.iter().map(|(_, r)| r.nrmse_x)),
        mean_nrmse_y: mean(per_run.iter().map(|(_, r)| r.nrmse_y)),
        std_rmse_x: std_dev(per_run.iter().map(|(_, r)| r.rmse_x)),
        std_rmse_y: std_dev(per_run.iter().map(|(_, r)| r.rmse_y)),
        mean_ucb_coverage_x: mean(per_run.iter().map(|(_, r)| r.ucb_coverage_x)),
        mean_ucb_coverage_y: mean(per_run.iter().map(|(_, r)| r.ucb_coverage_y)),
        mean_ci3_coverage_x: mean(per_run.iter().map(|(_, r)| r.ci3_coverage_x)),
        mean_ci3_coverage_y: mean(per_run.iter().map(|(_, r)| r.ci3_coverage_y)),
        per_run,
    })
}

pub const STEP_HEADER: &str =
    "t,truth_x,truth_y,est_x,est_y,var_x,var_y,ucb_x,ucb_y,covered_x,covered_y,n_meas,n_active";
pub const RUN_HEADER: &str = "run,seed,rmse_x,rmse_y,nrmse_x,nrmse_y,ucb_coverage_x,ucb_coverage_y,ci3_coverage_x,ci3_coverage_y,wall_time_ms";
pub const SUMMARY_HEADER: &str = "scenario,variant,noise_std,clutter_rate,runs,failed,mean_nrmse_x,mean_nrmse_y,std_rmse_x,std_rmse_y,mean_ucb_coverage_x,mean_ucb_coverage_y,mean_ci3_coverage_x,mean_ci3_coverage_y";
pub const BENCH_HEADER: &str = "n,m,centralized_ms,factorized_ms,per_expert_ms";

/// Output directory `<out>/<scenario>/<variant>/` for a config.
pub fn output_dir(out: &Path, cfg: &ScenarioConfig) -> PathBuf {
    out.join(&cfg.name).join(variant_name(&cfg.tracker))
}

fn open_writer(path: &Path) -> Result<csv::Writer<fs::File>, EvalError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| EvalError::Config(format!("cannot create {}: {e}", parent.display())))?;
    }
    let file = fs::File::create(path)
        .map_err(|e| EvalError::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(csv::Writer::from_writer(file))
}

/// Write the per-step records of a single run.
pub fn write_step_csv(path: &Path, result: &RunResult) -> Result<(), EvalError> {
    let mut w = open_writer(path)?;
    w.write_record(STEP_HEADER.split(',')).map_err(numerical)?;
    for r in &result.records {
        w.write_record(&[
            r.t.to_string(),
            format!("{:.6}", r.truth_x),
            format!("{:.6}", r.truth_y),
            format!("{:.6}", r.est_x),
            format!("{:.6}", r.est_y),
            format!("{:.6}", r.var_x),
            format!("{:.6}", r.var_y),
            format!("{:.6}", r.ucb_x),
            format!("{:.6}", r.ucb_y),
            (r.covered_x as u8).to_string(),
            (r.covered_y as u8).to_string(),
            r.n_meas.to_string(),
            r.n_active.to_string(),
        ])
        .map_err(numerical)?;
    }
    w.flush().map_err(numerical)?;
    Ok(())
}

/// Write the per-run rows of a Monte-Carlo sweep.
pub fn write_runs_csv(path: &Path, summary: &SummaryTable) -> Result<(), EvalError> {
    let mut w = open_writer(path)?;
    w.write_record(RUN_HEADER.split(',')).map_err(numerical)?;
    for (k, (seed, r)) in summary.per_run.iter().enumerate() {
        w.write_record(&[
            k.to_string(),
            seed.to_string(),
            format!("{:.9}", r.rmse_x),
            format!("{:.9}", r.rmse_y),
            format!("{:.9}", r.nrmse_x),
            format!("{:.9}", r.nrmse_y),
            format!("{:.6}", r.ucb_coverage_x),
            format!("{:.6}", r.ucb_coverage_y),
            format!("{:.6}", r.ci3_coverage_x),
            format!("{:.6}", r.ci3_coverage_y),
            format!("{:.3}", r.wall_time_ms),
        ])
        .map_err(numerical)?;
    }
    w.flush().map_err(numerical)?;
    Ok(())
}

/// Write the aggregate summary row.
pub fn write_summary_csv(path: &Path, summary: &SummaryTable) -> Result<(), EvalError> {
    let mut w = open_writer(path)?;
    w.write_record(SUMMARY_HEADER.split(',')).map_err(numerical)?;
    w.write_record(&[
        summary.scenario.clone(),
        summary.variant.clone(),
        format!("{:.6}", summary.noise_std),
        format!("{:.6}", summary.clutter_rate),
        summary.runs.to_string(),
        summary.failed.to_string(),
        format!("{:.9}", summary.mean_nrmse_x),
        format!("{:.9}", summary.mean_nrmse_y),
        format!("{:.9}", summary.std_rmse_x),
        format!("{:.9}", summary.std_rmse_y),
        format!("{:.6}", summary.mean_ucb_coverage_x),
        format!("{:.6}", summary.mean_ucb_coverage_y),
        format!("{:.6}", summary.mean_ci3_coverage_x),
        format!("{:.6}", summary.mean_ci3_coverage_y),
    ])
    .map_err(numerical)?;
    w.flush().map_err(numerical)?;
    Ok(())
}

/// Write the timing-benchmark grid.
pub fn write_bench_csv(path: &Path, records: &[bench::BenchRecord]) -> Result<(), EvalError> {
    let mut w = open_writer(path)?;
    w.write_record(BENCH_HEADER.split(',')).map_err(numerical)?;
    for r in records {
        w.write_record(&[
            r.n.to_string(),
            r.m.to_string(),
            format!("{:.3}", r.centralized_ms),
            format!("{:.3}", r.factorized_ms),
            format!("{:.3}", r.per_expert_ms),
        ])
        .map_err(numerical)?;
    }
    w.flush().map_err(numerical)?;
    Ok(())
}

/// The hybrid-filter verification suite: partition-sum oracle equivalence
/// and the clutter-free conjugacy reduction. Returns (cases, max relative
/// error in log space, max conjugacy error).
pub fn oracle_suite(seed: u64) -> Result<(usize, f64, f64), EvalError> {
    use dgpt::gp::Prediction;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel = 0.0f64;
    let mut cases = 0usize;
    for &lambda_c in &[0.1, 1.0, 5.0] {
        for _ in 0..334 {
            let p = PoissonLikelihoodParams::new(
                rng.gen_range(0.5..2.0),
                lambda_c,
                rng.gen_range(100.0..10_000.0),
                rng.gen_range(0.25..4.0),
            )
            .map_err(numerical)?;
            let n = rng.gen_range(1..=6);
            let state = rng.gen_range(-10.0..10.0);
            let zs: Vec<f64> = (0..n).map(|_| rng.gen_range(-15.0..15.0)).collect();
            let a = hybrid::product_likelihood(&zs, state, &p);
            let b = hybrid::partition_sum_likelihood(&zs, state, &p).map_err(numerical)?;
            let rel = (a - b).abs() / a.abs().max(1e-300);
            max_rel = max_rel.max(rel);
            cases += 1;
        }
    }
    let mut max_conj = 0.0f64;
    for _ in 0..200 {
        let noise = rng.gen_range(0.2..4.0);
        let p = PoissonLikelihoodParams::new(1.0, 0.0, 1000.0, noise).map_err(numerical)?;
        let prior = Prediction {
            mean: rng.gen_range(-5.0..5.0),
            variance: rng.gen_range(0.1..10.0),
        };
        let n = rng.gen_range(1..7);
        let zs: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let post = hybrid::posterior_update(prior, &zs, &p).map_err(numerical)?;
        let sigma_hat_sq = noise / n as f64;
        let prec = 1.0 / prior.variance + n as f64 / sigma_hat_sq;
        let var = 1.0 / prec;
        let mean = var * (prior.mean / prior.variance + zs.iter().sum::<f64>() / sigma_hat_sq);
        max_conj = max_conj
            .max(((post.variance - var) / var).abs())
            .max(((post.mean - mean) / mean.abs().max(1.0)).abs());
    }
    Ok((cases, max_rel, max_conj))
}

/// Convenience: a scenario config with standard defaults for tests and
/// programmatic sweeps.
pub fn base_config(scenario: Scenario, name: &str) -> ScenarioConfig {
    use dgpt::config::{SensorConfig, TrajectoryConfig};
    let trajectory = match scenario {
        Scenario::S1 => TrajectoryConfig {
            scenario,
            length: 100,
            start: [100.0, 100.0],
            speed: 10.0,
            heading_deg: 0.0,
            waypoints: vec![[100.0, 100.0], [800.0, 200.0], [850.0, 850.0]],
            straight_duration: 15,
            singer_tau: 10.0,
            singer_max_accel: 50.0,
            singer_non_accel_prob: 0.4,
            max_speed: 15.0,
        },
        Scenario::S2 => TrajectoryConfig {
            scenario,
            length: 100,
            start: [300.0, 300.0],
            speed: 10.0,
            heading_deg: 45.0,
            waypoints: Vec::new(),
            straight_duration: 15,
            singer_tau: 10.0,
            singer_max_accel: 50.0,
            singer_non_accel_prob: 0.4,
            max_speed: 15.0,
        },
        Scenario::S3 => TrajectoryConfig {
            scenario,
            length: 100,
            start: [300.0, 700.0],
            speed: 10.0,
            heading_deg: -45.0,
            waypoints: Vec::new(),
            straight_duration: 15,
            singer_tau: 10.0,
            singer_max_accel: 50.0,
            singer_non_accel_prob: 0.4,
            max_speed: 15.0,
        },
        Scenario::S4 => TrajectoryConfig {
            scenario,
            length: 100,
            start: [500.0, 500.0],
            speed: 10.0,
            heading_deg: 30.0,
            waypoints: Vec::new(),
            straight_duration: 15,
            singer_tau: 10.0,
            singer_max_accel: 50.0,
            singer_non_accel_prob: 0.4,
            max_speed: 15.0,
        },
    };
    ScenarioConfig {
        name: name.to_string(),
        field: dgpt::config::FieldConfig::default(),
        sensors: SensorConfig::default(),
        trajectory,
        noise_std: 1.0,
        clutter_rate: 1.0,
        lambda_target: 1.0,
        tracker: TrackerSettings::default(),
        ucb_delta: 0.003,
        seed: 2024,
        mc_runs: 100,
    }
}

/// Group pooled per-scenario mean NRMSEs by coordinate for ordering
/// comparisons.
pub fn coordinate_cells(summary: &SummaryTable) -> BTreeMap<&'static str, f64> {
    let mut m = BTreeMap::new();
    m.insert("x", summary.mean_nrmse_x);
    m.insert("y", summary.mean_nrmse_y);
    m
}
