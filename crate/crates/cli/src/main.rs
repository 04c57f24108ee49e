//! `collabnet`: runs the regression and classification experiments and the
//! small-instance oracle checks, writing CSV metrics and a replayable
//! `manifest.json` into `--out-dir`.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use collabnet::classifier::{KernelParams, TreeParams};
use collabnet::data::{load_categorical_csv, synthetic_categorical, SyntheticSpec};
use collabnet::experiment::{run_classification, ClassifyConfig, ExperimentError};
use collabnet::message_passing::{BpConfig, BpError, Schedule};
use collabnet::oracle;
use collabnet::regression::{run_regression_experiment, RegressionConfig, RegressionError};
use collabnet::sampler::{SamplerMode, SweepOrder};
use thiserror::Error;

use manifest::{write_file, DataSource, OracleConfig, RunConfig, RunManifest};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failure(String),
    #[error("write failed: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Failure(_) | Self::Io(_) => 1,
        }
    }
}

impl From<RegressionError> for CliError {
    fn from(e: RegressionError) -> Self {
        match e {
            RegressionError::Config(_) | RegressionError::Graph(_) => Self::Usage(e.to_string()),
            RegressionError::Bp(BpError::InvalidInput { .. } | BpError::SizeMismatch { .. }) => {
                Self::Usage(e.to_string())
            }
            _ => Self::Failure(e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(_) | ExperimentError::Data(_) | ExperimentError::Graph(_) => {
                Self::Usage(e.to_string())
            }
            _ => Self::Failure(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "collabnet", version, about = "Collaborative training over simulated sensor networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Root seed; every random component derives its stream from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for CSV outputs and the manifest.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Slope consensus by Gaussian belief propagation.
    Regress(RegressArgs),
    /// Decision-tree particles combined by the sampler.
    Classify(ClassifyArgs),
    /// Brute-force checks on small instances.
    Oracle(OracleArgs),
    /// Re-run the configuration recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Synchronous,
    Sequential,
}

#[derive(Debug, Args)]
struct RegressArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 50)]
    sensors: usize,
    #[arg(long, default_value_t = 0.2, allow_negative_numbers = true)]
    radius: f64,
    /// True slope `k`.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    slope: f64,
    /// Noise scale; the standard deviation at `x` is `sigma |sin(2 pi x)|`.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    sigma: f64,
    /// Bootstrap resamples per sensor.
    #[arg(long, default_value_t = 100)]
    bootstrap: usize,
    /// Edge smoothness `lambda^2`.
    #[arg(long, default_value_t = 1e-8, allow_negative_numbers = true)]
    lambda_sq: f64,
    #[arg(long, default_value_t = 100)]
    grid: usize,
    #[arg(long, default_value_t = 1000)]
    max_rounds: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Synchronous)]
    schedule: ScheduleArg,
    /// Variance of the initial (vague) messages.
    #[arg(long, default_value_t = 1e12)]
    init_variance: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Gibbs,
    Greedy,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SweepArg {
    Random,
    Permutation,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated categorical file, class in the last column.
    #[arg(long, conflicts_with = "synthetic")]
    data: Option<PathBuf>,
    /// Use a generated dataset shaped like kr-vs-kp.
    #[arg(long)]
    synthetic: bool,
    #[arg(long, default_value_t = 0.02)]
    synthetic_noise: f64,
    #[arg(long, default_value_t = 6)]
    synthetic_depth: usize,
    #[arg(long, default_value_t = 20)]
    sensors: usize,
    /// Expected degree of the random graph [default: min(4, sensors - 1)].
    #[arg(long, allow_negative_numbers = true)]
    degree: Option<f64>,
    #[arg(long, default_value_t = 4)]
    particles: usize,
    #[arg(long, default_value_t = 4000)]
    rounds: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Greedy)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = SweepArg::Random)]
    sweep: SweepArg,
    #[arg(long, default_value_t = 2000)]
    train: usize,
    #[arg(long, default_value_t = 1196)]
    test: usize,
    #[arg(long, default_value_t = 10)]
    max_depth: usize,
    #[arg(long, default_value_t = 1)]
    min_leaf: usize,
    #[arg(long, default_value_t = 4)]
    kernel_exponent: i32,
    #[arg(long, default_value_t = 3)]
    similarity_power: i32,
    /// Trace every sensor's test error every this many rounds.
    #[arg(long, default_value_t = 100)]
    record_every: usize,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(flatten)]
    common: Common,
    /// Largest network in the greedy and MAP checks.
    #[arg(long, default_value_t = oracle::MAX_SENSORS)]
    sensors: usize,
    /// Most particles per sensor in the greedy and MAP checks.
    #[arg(long, default_value_t = oracle::MAX_PARTICLES)]
    particles: usize,
    /// Random instances for the greedy and MAP checks.
    #[arg(long, default_value_t = 50)]
    instances: usize,
    /// Discrete BP instances.
    #[arg(long, default_value_t = 100)]
    seeds: usize,
    #[arg(long, default_value_t = 10)]
    gibbs_instances: usize,
    #[arg(long, default_value_t = 100_000)]
    gibbs_steps: usize,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    manifest: PathBuf,
    /// Output directory [default: the manifest's directory].
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn regress_config(a: &RegressArgs) -> RegressionConfig {
    RegressionConfig {
        num_sensors: a.sensors,
        radius: a.radius,
        true_slope: a.slope,
        noise_scale: a.sigma,
        bootstrap_reps: a.bootstrap,
        lambda_sq: a.lambda_sq,
        seed: a.common.seed.unwrap_or(7),
        test_grid_size: a.grid,
        bp: BpConfig {
            max_rounds: a.max_rounds,
            convergence_tol: a.tol,
            schedule: match a.schedule {
                ScheduleArg::Synchronous => Schedule::Synchronous,
                ScheduleArg::Sequential => Schedule::Sequential,
            },
            initial_variance: a.init_variance,
        },
    }
}

fn classify_config(a: &ClassifyArgs) -> Result<RunConfig, CliError> {
    let seed = a.common.seed.unwrap_or(0);
    let data = match (&a.data, a.synthetic) {
        (Some(path), false) => DataSource::File(std::fs::canonicalize(path).unwrap_or_else(|_| path.clone())),
        (None, true) => DataSource::Synthetic(SyntheticSpec {
            noise_rate: a.synthetic_noise,
            rule_depth: a.synthetic_depth,
            seed,
            ..SyntheticSpec::default()
        }),
        _ => return Err(CliError::Usage("pass --data PATH or --synthetic".into())),
    };
    let config = ClassifyConfig {
        sensors: a.sensors,
        expected_degree: a.degree.unwrap_or_else(|| 4f64.min(a.sensors.saturating_sub(1) as f64)),
        particles: a.particles,
        rounds: a.rounds,
        mode: match a.mode {
            ModeArg::Gibbs => SamplerMode::Gibbs,
            ModeArg::Greedy => SamplerMode::Greedy,
        },
        sweep: match a.sweep {
            SweepArg::Random => SweepOrder::RandomSensor,
            SweepArg::Permutation => SweepOrder::FixedPermutation,
        },
        train_count: a.train,
        test_count: a.test,
        tree: TreeParams {
            max_depth: a.max_depth,
            min_leaf: a.min_leaf,
        },
        kernel: KernelParams {
            kernel_exponent: a.kernel_exponent,
            similarity_power: a.similarity_power,
        },
        record_every: a.record_every,
        seed,
    };
    Ok(RunConfig::Classify { data, config })
}

fn oracle_config(a: &OracleArgs) -> OracleConfig {
    OracleConfig {
        sensors: a.sensors,
        particles: a.particles,
        instances: a.instances,
        discrete_instances: a.seeds,
        gibbs_instances: a.gibbs_instances,
        gibbs_steps: a.gibbs_steps,
        seed: a.common.seed.unwrap_or(0),
    }
}

/// Artifacts written by a run, and the failure to report once the manifest
/// is on disk.
struct Outcome {
    artifacts: Vec<String>,
    failure: Option<CliError>,
}

impl From<Vec<String>> for Outcome {
    fn from(artifacts: Vec<String>) -> Self {
        Self {
            artifacts,
            failure: None,
        }
    }
}

/// Runs `run`, writes its artifacts and the manifest into `dir`.
fn execute(run: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let outcome = match run {
        RunConfig::Regress(cfg) => regress(cfg, dir)?.into(),
        RunConfig::Classify { data, config } => classify(data, config, dir)?.into(),
        RunConfig::Oracle(cfg) => oracle_checks(cfg, dir)?,
    };
    RunManifest::new(run.clone(), outcome.artifacts).write(dir)?;
    outcome.failure.map_or(Ok(()), Err)
}

fn regress(cfg: &RegressionConfig, dir: &Path) -> Result<Vec<String>, CliError> {
    let run = run_regression_experiment(cfg)?;
    write_file(dir, "rounds.csv", &run.rounds_csv())?;
    write_file(dir, "marginals.csv", &run.marginals_csv())?;
    let last = run.final_metrics();
    println!(
        "rounds {}  converged {}  test_error {:.6e}  estimate_variance {:.6e}",
        last.round, run.converged, last.test_error, last.estimate_variance
    );
    if !run.unidentifiable.is_empty() {
        eprintln!(
            "note: {} sensor(s) without usable data got uninformative potentials",
            run.unidentifiable.len()
        );
    }
    if !(last.test_error.is_finite() && last.estimate_variance.is_finite()) {
        return Err(CliError::Failure("non-finite final metrics".into()));
    }
    Ok(vec!["rounds.csv".into(), "marginals.csv".into()])
}

fn classify(source: &DataSource, cfg: &ClassifyConfig, dir: &Path) -> Result<Vec<String>, CliError> {
    let data = match source {
        DataSource::File(path) => {
            load_categorical_csv(path)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
                .0
        }
        DataSource::Synthetic(spec) => {
            synthetic_categorical(spec).map_err(|e| CliError::Usage(e.to_string()))?.dataset
        }
    };
    let run = run_classification(&data, cfg)?;
    write_file(dir, "trace.csv", &run.sampler.trace_csv())?;
    write_file(dir, "histogram.csv", &run.sampler.histogram_csv())?;
    let summary = serde_json::to_string_pretty(&run.summary).map_err(|e| CliError::Failure(e.to_string()))?;
    write_file(dir, "summary.json", &(summary + "\n"))?;
    print!("{}", run.summary);
    Ok(vec!["trace.csv".into(), "histogram.csv".into(), "summary.json".into()])
}

fn oracle_checks(cfg: &OracleConfig, dir: &Path) -> Result<Outcome, CliError> {
    if cfg.sensors == 0 || cfg.sensors > oracle::MAX_SENSORS {
        return Err(CliError::Usage(format!(
            "--sensors must lie in 1..={}",
            oracle::MAX_SENSORS
        )));
    }
    if cfg.particles == 0 || cfg.particles > oracle::MAX_PARTICLES {
        return Err(CliError::Usage(format!(
            "--particles must lie in 1..={}",
            oracle::MAX_PARTICLES
        )));
    }
    let failure = |e: collabnet::sampler::SamplerError| CliError::Failure(e.to_string());
    let gibbs = oracle::gibbs_check(cfg.gibbs_instances, cfg.gibbs_steps, cfg.seed).map_err(failure)?;
    let greedy = oracle::greedy_check(cfg.instances, cfg.sensors, cfg.particles, cfg.seed).map_err(failure)?;
    let map = oracle::brute_force_check(cfg.instances, cfg.sensors, cfg.particles, cfg.seed).map_err(failure)?;
    let discrete = oracle::discrete_check(cfg.discrete_instances, cfg.seed);

    let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
    let lines = [
        format!(
            "{} gibbs-vs-enumeration: max TV {:.4} <= {} over {} instances x {} steps",
            verdict(gibbs.passed()),
            gibbs.max_tv,
            gibbs.tolerance,
            gibbs.instances,
            gibbs.steps
        ),
        format!("{} greedy-vs-site-argmax: {}/{}", verdict(greedy.passed()), greedy.agree, greedy.total),
        format!("{} brute-force-map-vs-double-loop: {}/{}", verdict(map.passed()), map.agree, map.total),
        format!(
            "{} discrete-bp-vs-likelihood-ratio: {}/{}",
            verdict(discrete.passed()),
            discrete.agree,
            discrete.total
        ),
    ];
    let report = lines.join("\n") + "\n";
    print!("{report}");
    write_file(dir, "report.txt", &report)?;
    let all = gibbs.passed() && greedy.passed() && map.passed() && discrete.passed();
    Ok(Outcome {
        artifacts: vec!["report.txt".into()],
        failure: (!all).then(|| CliError::Failure("oracle check failed".into())),
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Regress(a) => execute(&RunConfig::Regress(regress_config(&a)), &a.common.out_dir),
        Command::Classify(a) => execute(&classify_config(&a)?, &a.common.out_dir),
        Command::Oracle(a) => execute(&RunConfig::Oracle(oracle_config(&a)), &a.common.out_dir),
        Command::Replay(a) => {
            let manifest = RunManifest::load(&a.manifest)?;
            let dir = a.out_dir.unwrap_or_else(|| {
                match a.manifest.parent() {
                    Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
                    _ => PathBuf::from("."),
                }
            });
            execute(&manifest.run, &dir)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
