use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dgpt::config::{FeatureKind, MethodKind, ScenarioConfig, TrackerKind};
use eval_cli::{self as eval, EvalError};

#[derive(Parser)]
#[command(
    name = "dgpt-eval",
    about = "Scenario runs, Monte-Carlo sweeps, and timing benchmarks for the distributed GP tracker"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, ValueEnum)]
enum MethodArg {
    Poe,
    Gpoe,
    Bcm,
    Rbcm,
}

#[derive(Copy, Clone, ValueEnum)]
enum ModeArg {
    Tgp,
    Stgp,
}

#[derive(Copy, Clone, ValueEnum)]
enum TrackerArg {
    Dgp,
    Hybrid,
    Centralized,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Scenario description (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Aggregation method override.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Feature mode override.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Tracker kind override.
    #[arg(long, value_enum)]
    tracker: Option<TrackerArg>,
    /// Output directory root.
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario realization and write per-step records.
    Run {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run a Monte-Carlo sweep and write per-run rows plus a summary.
    Mc {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of Monte-Carlo runs (overrides the config).
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Time the pooled versus factorized objective and gradient.
    Bench {
        /// Dataset sizes, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "1000,2000,5000,10000")]
        n: Vec<usize>,
        /// Expert counts, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "1,2,5,10")]
        m: Vec<usize>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Repetitions per cell; the median is reported.
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Cross-check the clutter filter against its brute-force oracle.
    Oracle {
        #[arg(long, default_value_t = 11)]
        seed: u64,
    },
}

fn apply_overrides(cfg: &mut ScenarioConfig, common: &CommonArgs) {
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(method) = common.method {
        cfg.tracker.aggregation = match method {
            MethodArg::Poe => MethodKind::Poe,
            MethodArg::Gpoe => MethodKind::Gpoe,
            MethodArg::Bcm => MethodKind::Bcm,
            MethodArg::Rbcm => MethodKind::Rbcm,
        };
    }
    if let Some(mode) = common.mode {
        cfg.tracker.feature = match mode {
            ModeArg::Tgp => FeatureKind::Tgp,
            ModeArg::Stgp => FeatureKind::Stgp,
        };
    }
    if let Some(tracker) = common.tracker {
        cfg.tracker.mode = match tracker {
            TrackerArg::Dgp => TrackerKind::Dgp,
            TrackerArg::Hybrid => TrackerKind::Hybrid,
            TrackerArg::Centralized => TrackerKind::Centralized,
        };
    }
}

fn run(cli: Cli) -> Result<(), EvalError> {
    // Worker-pool size: EVAL_WORKERS caps rayon's threads when set.
    if let Ok(workers) = std::env::var("EVAL_WORKERS") {
        let n: usize = workers
            .parse()
            .map_err(|_| EvalError::Config(format!("EVAL_WORKERS must be a number, got {workers}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .ok();
    }
    match cli.command {
        Command::Run { common } => {
            let mut cfg = eval::load_config(&common.config)?;
            apply_overrides(&mut cfg, &common);
            let result = eval::run_scenario(&cfg, cfg.seed)?;
            let dir = eval::output_dir(&common.out, &cfg);
            let path = dir.join("steps.csv");
            eval::write_step_csv(&path, &result)?;
            println!(
                "{}: nrmse_x={:.3}% nrmse_y={:.3}% ucb_coverage=({:.2},{:.2}) -> {}",
                cfg.name,
                result.nrmse_x,
                result.nrmse_y,
                result.ucb_coverage_x,
                result.ucb_coverage_y,
                path.display()
            );
        }
        Command::Mc { common, runs } => {
            let mut cfg = eval::load_config(&common.config)?;
            apply_overrides(&mut cfg, &common);
            let runs = runs.unwrap_or(cfg.mc_runs);
            let summary = eval::monte_carlo(&cfg, runs)?;
            let dir = eval::output_dir(&common.out, &cfg);
            eval::write_runs_csv(&dir.join("runs.csv"), &summary)?;
            eval::write_summary_csv(&dir.join("summary.csv"), &summary)?;
            println!(
                "{} {}: {} runs ({} failed), mean nrmse=({:.3}%, {:.3}%), ucb coverage=({:.2}, {:.2}) -> {}",
                summary.scenario,
                summary.variant,
                summary.runs,
                summary.failed,
                summary.mean_nrmse_x,
                summary.mean_nrmse_y,
                summary.mean_ucb_coverage_x,
                summary.mean_ucb_coverage_y,
                dir.display()
            );
        }
        Command::Bench {
            n,
            m,
            seed,
            repeats,
            out,
        } => {
            if n.is_empty() || m.is_empty() || repeats == 0 {
                return Err(EvalError::Config(
                    "bench needs at least one n, one m, and one repeat".into(),
                ));
            }
            let records = eval::bench::timing_benchmark(&n, &m, seed, repeats);
            let path = out.join("bench.csv");
            eval::write_bench_csv(&path, &records)?;
            for r in &records {
                println!(
                    "n={} m={}: centralized {:.1} ms, factorized {:.1} ms ({:.1} ms/expert)",
                    r.n, r.m, r.centralized_ms, r.factorized_ms, r.per_expert_ms
                );
            }
            println!("-> {}", path.display());
        }
        Command::Oracle { seed } => {
            let (cases, max_rel, max_conj) = eval::oracle_suite(seed)?;
            println!(
                "{cases} oracle cases: max relative likelihood error {max_rel:.3e}, \
                 max conjugacy error {max_conj:.3e}"
            );
            if max_rel > 1e-9 || max_conj > 1e-12 {
                return Err(EvalError::Numerical(
                    "oracle deviation above tolerance".into(),
                ));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
