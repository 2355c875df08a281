use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lkc::eec::{EecModel, LevelGrid, SEARCH_INTERVAL};
use lkc::error::ErrorKind;
use lkc::fldb::{load_field, save_field, write_atomic};
use lkc::glm::{
    fit_pointwise, glm_standardized_residuals, parse_contrast, zscore_field, DesignMatrix,
};
use lkc::rng::SeedStream;
use lkc::sim::SimConfig;
use lkc::study::{run_study, Pipeline, Scenario, StudyConfig};
use lkc::{ec_curve, ConnectivityRule, Estimator, FieldSample, LkcVector};

/// Lipschitz-Killing curvature and expected Euler characteristic estimation
/// for sampled random fields.
#[derive(Parser)]
#[command(name = "lkc", version)]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate fields from a JSON config and write them as FLDB files.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write the EC curve of one field as `u,delta,chi_after` CSV.
    EcCurve {
        input: PathBuf,
        #[arg(long)]
        connectivity: Option<Connectivity>,
        /// CSV path; a `.json` sidecar with `l0` and `m` is written next to it.
        /// Without it the CSV goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate LKCs from a sample of fields; prints JSON.
    EstimateLkc {
        #[command(flatten)]
        est: EstimateArgs,
    },
    /// Estimate the EEC curve with pointwise bands, plus FWER and CER
    /// thresholds (printed as JSON).
    EstimateEec {
        #[command(flatten)]
        est: EstimateArgs,
        /// Curve grid `lo:hi:step`.
        #[arg(long, default_value = "-5:5:0.01", allow_hyphen_values = true)]
        grid: String,
        /// Band level: bands cover with probability `1 - alpha`.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Destination of the `u,eec,lo,hi` CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve `EEC(u) = alpha` for an LKC JSON file.
    Threshold {
        #[arg(long)]
        lkc: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Run a Monte Carlo study from a JSON config; writes CSV.
    Study {
        #[arg(long)]
        config: PathBuf,
        /// Without it the CSV goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        scenario: Option<ScenarioArg>,
        #[arg(long)]
        connectivity: Option<Connectivity>,
        #[arg(long)]
        bootstrap_m: Option<usize>,
    },
    /// Fit a pointwise linear model; writes z, coefficient and standardized
    /// residual fields.
    GlmFit {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// CSV, one row per input field.
        #[arg(long)]
        design: PathBuf,
        /// JSON contrast, `[c1, ..., cP]` or `{"c": [...]}`.
        #[arg(long)]
        contrast: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Smooth residuals with a Gaussian of this sd (grid units).
        #[arg(long)]
        smooth: Option<f64>,
    },
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Hpe)]
    estimator: EstimatorArg,
    #[arg(long, value_enum, default_value_t = ScenarioArg::Theoretical)]
    scenario: ScenarioArg,
    #[arg(long)]
    connectivity: Option<Connectivity>,
    #[arg(long, default_value_t = 1000)]
    bootstrap_m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Highest LKC order (default: field dimension).
    #[arg(long)]
    order: Option<usize>,
    /// Levels for the regression estimator, `lo:hi:step`.
    #[arg(long, default_value = "-5:5:0.01", allow_hyphen_values = true)]
    levels: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Hpe,
    Bhpe,
    Regression,
}

impl From<EstimatorArg> for Estimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Hpe => Estimator::Hpe,
            EstimatorArg::Bhpe => Estimator::Bhpe,
            EstimatorArg::Regression => Estimator::Regression,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Theoretical,
    Experimental,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Theoretical => Scenario::Theoretical,
            ScenarioArg::Experimental => Scenario::Experimental,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Connectivity {
    #[value(name = "4")]
    C4,
    #[value(name = "8")]
    C8,
    #[value(name = "6")]
    C6,
    #[value(name = "26")]
    C26,
}

impl Connectivity {
    fn code(self) -> u32 {
        match self {
            Connectivity::C4 => 4,
            Connectivity::C8 => 8,
            Connectivity::C6 => 6,
            Connectivity::C26 => 26,
        }
    }
}

fn rule_for(c: Option<Connectivity>, dim: usize) -> lkc::Result<ConnectivityRule> {
    match c {
        Some(c) => ConnectivityRule::from_code(c.code(), dim),
        None => ConnectivityRule::default_for(dim),
    }
}

enum Failure {
    Usage(String),
    Lib(lkc::Error),
}

impl From<lkc::Error> for Failure {
    fn from(e: lkc::Error) -> Self {
        Failure::Lib(e)
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .expect("global pool is configured once");
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Numerical => 4,
                ErrorKind::Validation | ErrorKind::Io => 3,
            })
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Simulate {
            config,
            out_dir,
            seed,
        } => simulate(&config, &out_dir, seed),
        Command::EcCurve {
            input,
            connectivity,
            out,
        } => ec_curve_cmd(&input, connectivity, out.as_deref()),
        Command::EstimateLkc { est } => {
            let (lkc, _) = estimate(&est)?;
            println!("{}", lkc.to_json());
            Ok(())
        }
        Command::EstimateEec {
            est,
            grid,
            alpha,
            out,
        } => estimate_eec(&est, &grid, alpha, &out),
        Command::Threshold { lkc, alpha } => {
            let text = read(&lkc)?;
            let v: LkcVector = serde_json::from_str(&text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", lkc.display())))?;
            let t = EecModel::new(v)?.solve_threshold(alpha, SEARCH_INTERVAL)?;
            println!("{}", json(&t));
            Ok(())
        }
        Command::Study {
            config,
            out,
            seed,
            scenario,
            connectivity,
            bootstrap_m,
        } => {
            let mut c: StudyConfig = serde_json::from_str(&read(&config)?)
                .map_err(|e| Failure::Usage(format!("{}: {e}", config.display())))?;
            if let Some(s) = seed {
                c.seed = s;
            }
            if let Some(s) = scenario {
                c.scenario = s.into();
            }
            if let Some(k) = connectivity {
                c.connectivity = k.code();
            }
            if let Some(m) = bootstrap_m {
                c.bootstrap_m = m;
            }
            let result = run_study(&c)?;
            let mut csv = Vec::new();
            result.write_csv(&mut csv)?;
            emit(out.as_deref(), &csv)
        }
        Command::GlmFit {
            inputs,
            design,
            contrast,
            out_dir,
            smooth,
        } => glm_fit(&inputs, &design, &contrast, &out_dir, smooth),
    }
}

fn read(path: &Path) -> Outcome<String> {
    fs::read_to_string(path).map_err(|e| {
        Failure::Lib(lkc::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Lib(lkc::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("output serializes")
}

/// Writes to `path` atomically, or to stdout.
fn emit(path: Option<&Path>, bytes: &[u8]) -> Outcome {
    match path {
        Some(p) => Ok(write_atomic(p, bytes)?),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| io_failure(Path::new("<stdout>"), e)),
    }
}

fn simulate(config: &Path, out_dir: &Path, seed: Option<u64>) -> Outcome {
    let mut c = SimConfig::from_json(&read(config)?)
        .map_err(|e| Failure::Usage(format!("{}: {e}", config.display())))?;
    if let Some(s) = seed {
        c.seed = s;
    }
    let model = c.model()?;
    let sample = model.simulate(c.n, &SeedStream::new(c.seed).child("simulate"))?;
    fs::create_dir_all(out_dir).map_err(|e| io_failure(out_dir, e))?;
    for (i, f) in sample.iter().enumerate() {
        save_field(f, out_dir.join(format!("field_{i:04}.fldb")))?;
    }
    Ok(())
}

fn ec_curve_cmd(input: &Path, connectivity: Option<Connectivity>, out: Option<&Path>) -> Outcome {
    let field = load_field(input)?;
    let curve = ec_curve(&field, rule_for(connectivity, field.dim())?)?;
    let mut csv = Vec::new();
    curve
        .write_csv(&mut csv)
        .map_err(|e| io_failure(Path::new("<csv>"), e))?;
    emit(out, &csv)?;
    if let Some(p) = out {
        write_atomic(&p.with_extension("json"), json(&curve.sidecar_json()).as_bytes())?;
    }
    Ok(())
}

fn load_sample(inputs: &[PathBuf]) -> Outcome<FieldSample> {
    let fields = inputs.iter().map(load_field).collect::<lkc::Result<Vec<_>>>()?;
    Ok(FieldSample::raw(fields)?)
}

fn estimate(est: &EstimateArgs) -> Outcome<(LkcVector, FieldSample)> {
    let sample = load_sample(&est.inputs)?;
    let dim = sample.dim();
    let mut pipeline = Pipeline::for_dim(dim, est.scenario.into())?;
    pipeline.rule = rule_for(est.connectivity, dim)?;
    pipeline.bootstrap_m = est.bootstrap_m;
    pipeline.max_order = est.order.unwrap_or(dim);
    pipeline.levels = est.levels.parse()?;
    let estimator: Estimator = est.estimator.into();
    let stream = SeedStream::new(est.seed).child("bootstrap");
    let mut lkc = pipeline.estimate(&sample, estimator, &stream)?;
    if estimator == Estimator::Bhpe {
        lkc.seed = Some(est.seed);
    }
    Ok((lkc, sample))
}

fn estimate_eec(est: &EstimateArgs, grid: &str, alpha: f64, out: &Path) -> Outcome {
    let grid: LevelGrid = grid.parse()?;
    let (lkc, _) = estimate(est)?;
    let model = EecModel::new(lkc.clone())?;
    let mut csv = Vec::new();
    model.write_csv(&grid, alpha, &mut csv)?;
    write_atomic(out, &csv)?;
    let fwer = model.solve_threshold(0.05, SEARCH_INTERVAL)?;
    let cer = model.solve_threshold(1.0, SEARCH_INTERVAL)?;
    let report = serde_json::json!({ "lkc": lkc, "fwer": fwer, "cer": cer });
    println!("{}", json(&report));
    Ok(())
}

fn glm_fit(
    inputs: &[PathBuf],
    design: &Path,
    contrast: &Path,
    out_dir: &Path,
    smooth: Option<f64>,
) -> Outcome {
    let sample = load_sample(inputs)?;
    let x = DesignMatrix::from_csv(design)?;
    let c = parse_contrast(&read(contrast)?)?;
    let mut fit = fit_pointwise(&sample, &x)?;
    let z = zscore_field(&fit, &x, &c)?;
    if let Some(sd) = smooth {
        fit = fit.smoothed(sd)?;
    }
    let residuals = glm_standardized_residuals(&fit)?;
    fs::create_dir_all(out_dir).map_err(|e| io_failure(out_dir, e))?;
    save_field(&z, out_dir.join("zscore.fldb"))?;
    for (j, b) in fit.beta.iter().enumerate() {
        save_field(b, out_dir.join(format!("beta_{j}.fldb")))?;
    }
    for (i, r) in residuals.fields().iter().enumerate() {
        save_field(r, out_dir.join(format!("residual_{i:04}.fldb")))?;
    }
    let (sum_err, sq_err) = residuals.identity_errors();
    let report = serde_json::json!({
        "n": x.rows(),
        "p": x.cols(),
        "intercept": fit.has_intercept(),
        "zero_sum": residuals.zero_sum(),
        "max_abs_sum": sum_err,
        "max_abs_sq_minus_one": sq_err,
    });
    println!("{}", json(&report));
    Ok(())
}
