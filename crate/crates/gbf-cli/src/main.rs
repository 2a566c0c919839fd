//! `gbf` command line: fit and inspect generalised boosted forests, run the
//! simulation grid and the cross-validation pipeline.
//!
//! Exit codes: 0 success, 2 invalid flags or arguments, 3 runtime failures
//! (I/O, bad data, fit errors).

use clap::{Args, Parser, Subcommand, ValueEnum};
use gbf::eval::{self, DataSchema, Dataset};
use gbf::family::Family;
use gbf::forest::ForestParams;
use gbf::model::{self, GbfParams, ResidualSource, VarianceMode};
use gbf::sim::{self, SimConfig};
use gbf::tree::TreeParams;
use gbf_cli::model_file;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "gbf",
    version,
    about = "Generalised boosted forests for exponential-family responses",
    long_about = "Fits an MLE-type constant plus up to two Newton-boosted random forests, \
                  with infinitesimal-jackknife variance estimates."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a CSV dataset and write it to disk
    Fit(FitArgs),
    /// Predict with variance estimates and confidence intervals
    Predict(PredictArgs),
    /// Run the simulation grid and emit record CSVs
    Simulate(SimulateArgs),
    /// K-fold cross-validation report on a CSV dataset
    Cv(CvArgs),
    /// Print the attainable link-space prediction range of a model
    Range(RangeArgs),
    /// Rank training points by proximity to a test point
    Proximity(ProximityArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Gaussian,
    Binomial,
    Poisson,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Family {
        match f {
            FamilyArg::Gaussian => Family::Gaussian,
            FamilyArg::Binomial => Family::Binomial,
            FamilyArg::Poisson => Family::Poisson,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VarianceModeArg {
    Raw,
    Corrected,
}

#[derive(Clone, Copy, ValueEnum)]
enum ResidualSourceArg {
    InSample,
    OutOfBag,
}

#[derive(Args)]
struct HyperArgs {
    /// Trees per forest stage
    #[arg(long, default_value_t = 300)]
    trees: usize,
    /// Per-tree subsample fraction (without replacement)
    #[arg(long, default_value_t = 0.4)]
    sample_fraction: f64,
    /// Features tried per split [default: max(1, p/3)]
    #[arg(long)]
    mtry: Option<usize>,
    /// Minimum samples per leaf
    #[arg(long, default_value_t = 5)]
    min_node_size: usize,
    /// Maximum split depth [default: unlimited]
    #[arg(long)]
    max_depth: Option<usize>,
    /// Number of forest stages (0, 1 or 2)
    #[arg(long, default_value_t = 2)]
    stages: usize,
    /// Variance estimate: raw or bias-corrected
    #[arg(long, value_enum, default_value_t = VarianceModeArg::Corrected)]
    variance_mode: VarianceModeArg,
    /// Training-point predictions feeding the next stage
    #[arg(long, value_enum, default_value_t = ResidualSourceArg::InSample)]
    residual_source: ResidualSourceArg,
}

#[derive(Args)]
struct FitArgs {
    /// Training data CSV (with header row)
    #[arg(long)]
    data: PathBuf,
    /// Schema file (key = value: response, trials, features)
    #[arg(long)]
    schema: PathBuf,
    /// Response family
    #[arg(long, value_enum)]
    family: FamilyArg,
    /// Output model file
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Master seed for all randomness
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PredictArgs {
    /// Fitted model file
    #[arg(long)]
    model: PathBuf,
    /// Points CSV: numeric feature columns, optional header row
    #[arg(long)]
    points: PathBuf,
    /// Confidence level for the link-space interval
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Output CSV [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Key-value config file overriding the defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the full evaluation protocol instead of desk scale
    #[arg(long)]
    full_protocol: bool,
    /// Response family when the config file does not set one
    #[arg(long, value_enum, default_value_t = FamilyArg::Poisson)]
    family: FamilyArg,
    /// Master seed (overrides the config file)
    #[arg(long)]
    seed: Option<u64>,
    /// Records CSV output path
    #[arg(long)]
    out: PathBuf,
    /// Fixed-point summary CSV [default: <out stem>_fixed_points.csv]
    #[arg(long)]
    fixed_points_out: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    /// Dataset CSV (with header row)
    #[arg(long)]
    data: PathBuf,
    /// Schema file (key = value: response, trials, features)
    #[arg(long)]
    schema: PathBuf,
    /// Response family
    #[arg(long, value_enum)]
    family: FamilyArg,
    /// Report CSV output path [default: table on stdout only]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of folds
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Master seed for fold assignment and forests
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RangeArgs {
    /// Fitted model file
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct ProximityArgs {
    /// Fitted model file
    #[arg(long)]
    model: PathBuf,
    /// The training data the model was fitted on (fingerprint-checked)
    #[arg(long)]
    data: PathBuf,
    /// Schema file used at fit time
    #[arg(long)]
    schema: PathBuf,
    /// Test point as comma-separated feature values
    #[arg(long)]
    point: String,
    /// Forest stage to score against (1 or 2)
    #[arg(long, default_value_t = 1)]
    stage: usize,
    /// How many training points to list
    #[arg(long, default_value_t = 10)]
    top_k: usize,
}

enum CliError {
    Usage(String),
    Runtime(String),
}

fn usage<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Cv(args) => cmd_cv(args),
        Command::Range(args) => cmd_range(args),
        Command::Proximity(args) => cmd_proximity(args),
    };
    match result {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(3);
        }
    }
}

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn build_params(hyper: &HyperArgs, family: Family, p: usize, seed: u64) -> Result<GbfParams, CliError> {
    if hyper.stages > 2 {
        return usage(format!(
            "unsupported stage count {} (supported: 0, 1, 2)",
            hyper.stages
        ));
    }
    if !(hyper.sample_fraction > 0.0 && hyper.sample_fraction <= 1.0) {
        return usage("--sample-fraction must lie in (0, 1]");
    }
    Ok(GbfParams {
        family,
        forest: ForestParams {
            n_trees: hyper.trees,
            sample_fraction: hyper.sample_fraction,
            tree: TreeParams {
                mtry: hyper.mtry.unwrap_or((p / 3).max(1)),
                min_node_size: hyper.min_node_size,
                max_depth: hyper.max_depth,
                seed: 0,
            },
            seed,
        },
        stages: hyper.stages,
        variance_mode: match hyper.variance_mode {
            VarianceModeArg::Raw => VarianceMode::Raw,
            VarianceModeArg::Corrected => VarianceMode::Corrected,
        },
        residual_source: match hyper.residual_source {
            ResidualSourceArg::InSample => ResidualSource::InSample,
            ResidualSourceArg::OutOfBag => ResidualSource::OutOfBag,
        },
    })
}

fn load_dataset(data: &Path, schema: &Path) -> Result<Dataset, CliError> {
    let schema = DataSchema::from_file(schema).map_err(runtime)?;
    eval::load_csv(data, &schema).map_err(runtime)
}

fn cmd_fit(args: FitArgs) -> Result<(), CliError> {
    let dataset = load_dataset(&args.data, &args.schema)?;
    let family = Family::from(args.family);
    let params = build_params(&args.hyper, family, dataset.x.n_cols(), args.seed)?;
    let obs = dataset.observations(family);
    let model = model::fit(&dataset.x, &obs, &params).map_err(runtime)?;
    println!(
        "fitted on n = {}, features = {}",
        model.n_train(),
        model.n_features()
    );
    for (stage, ll) in model.train_ll().iter().enumerate() {
        println!("stage {stage} training log-likelihood: {ll:.6}");
    }
    let raw = std::fs::read(&args.data).map_err(runtime)?;
    let fingerprint = model_file::fingerprint_bytes(&raw);
    model_file::save(&model, fingerprint, &args.out).map_err(runtime)?;
    println!("model written to {}", args.out.display());
    Ok(())
}

/// Plain numeric CSV of points; a non-numeric first row is treated as a
/// header and skipped.
fn load_points(path: &Path, expect_cols: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let text = std::fs::read_to_string(path).map_err(runtime)?;
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Result<Vec<f64>, _> =
            line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => {
                if row.len() != expect_cols {
                    return Err(CliError::Runtime(format!(
                        "line {}: {} values, model expects {expect_cols} features",
                        lineno + 1,
                        row.len()
                    )));
                }
                points.push(row);
            }
            Err(_) if lineno == 0 => continue, // header row
            Err(e) => {
                return Err(CliError::Runtime(format!(
                    "line {}: non-numeric value ({e})",
                    lineno + 1
                )))
            }
        }
    }
    if points.is_empty() {
        return Err(CliError::Runtime("no points to predict".into()));
    }
    Ok(points)
}

fn cmd_predict(args: PredictArgs) -> Result<(), CliError> {
    if !(args.level > 0.0 && args.level < 1.0) {
        return usage("--level must lie strictly between 0 and 1");
    }
    let loaded = model_file::load(&args.model).map_err(runtime)?;
    let points = load_points(&args.points, loaded.model.n_features())?;
    let mut out = String::from(
        "link_estimate,link_variance,response_estimate,response_variance,ci_lo,ci_hi\n",
    );
    for point in &points {
        let pred = loaded.model.predict(point);
        let (lo, hi) = pred.confidence_interval(args.level);
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_f(pred.link_estimate),
            fmt_f(pred.link_variance),
            fmt_f(pred.response_estimate),
            fmt_f(pred.response_variance),
            fmt_f(lo),
            fmt_f(hi),
        ));
    }
    match &args.out {
        Some(path) => std::fs::write(path, out).map_err(runtime)?,
        None => print!("{out}"),
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let family = Family::from(args.family);
    let mut config = if args.full_protocol {
        SimConfig::full_protocol(family)
    } else {
        SimConfig::desk(family)
    };
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(runtime)?;
        config.apply_kv(&text).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let records = sim::run_grid(&config).map_err(runtime)?;
    let mut csv = Vec::new();
    sim::write_records_csv(&records, &config, &mut csv).map_err(runtime)?;
    std::fs::write(&args.out, csv).map_err(runtime)?;

    let fixed_path = args.fixed_points_out.unwrap_or_else(|| {
        let stem = args.out.file_stem().unwrap_or_default().to_string_lossy();
        args.out.with_file_name(format!("{stem}_fixed_points.csv"))
    });
    let summaries = sim::aggregate_fixed_points(&records, config.family);
    let mut csv = Vec::new();
    sim::write_fixed_point_csv(&summaries, &config, &mut csv).map_err(runtime)?;
    std::fs::write(&fixed_path, csv).map_err(runtime)?;

    let failures = records.iter().filter(|r| r.error.is_some()).count();
    println!(
        "wrote {} records ({} flagged) to {} and {} fixed-point summaries to {}",
        records.len(),
        failures,
        args.out.display(),
        summaries.len(),
        fixed_path.display()
    );
    Ok(())
}

fn cmd_cv(args: CvArgs) -> Result<(), CliError> {
    let dataset = load_dataset(&args.data, &args.schema)?;
    let family = Family::from(args.family);
    let params = build_params(&args.hyper, family, dataset.x.n_cols(), args.seed)?;
    if args.folds < 2 {
        return usage("--folds must be at least 2");
    }
    let report =
        eval::cv_evaluate(&dataset, family, &params, args.folds, args.seed).map_err(runtime)?;
    print!("{}", report.to_table_string());
    if let Some(path) = &args.out {
        std::fs::write(path, report.to_csv_string()).map_err(runtime)?;
        println!("report written to {}", path.display());
    }
    Ok(())
}

fn cmd_range(args: RangeArgs) -> Result<(), CliError> {
    let loaded = model_file::load(&args.model).map_err(runtime)?;
    let model = &loaded.model;
    let family = match model.family() {
        Family::Gaussian => "gaussian",
        Family::Binomial => "binomial",
        Family::Poisson => "poisson",
    };
    let (lo, hi) = model.prediction_range();
    println!("family: {family}");
    println!("stages: {}", model.stages());
    println!("eta0: {}", fmt_f(model.eta0()));
    println!("link range lower: {}", fmt_f(lo));
    println!("link range upper: {}", fmt_f(hi));
    Ok(())
}

fn cmd_proximity(args: ProximityArgs) -> Result<(), CliError> {
    let loaded = model_file::load(&args.model).map_err(runtime)?;
    let model = &loaded.model;
    if args.stage == 0 || args.stage > model.stages() {
        return usage(format!(
            "--stage must lie in 1..={} for this model",
            model.stages()
        ));
    }
    let raw = std::fs::read(&args.data).map_err(runtime)?;
    if model_file::fingerprint_bytes(&raw) != loaded.fingerprint {
        return Err(CliError::Runtime(
            "dataset fingerprint mismatch: this is not the file the model was fitted on".into(),
        ));
    }
    let dataset = load_dataset(&args.data, &args.schema)?;
    if dataset.x.n_rows() != model.n_train() || dataset.x.n_cols() != model.n_features() {
        return Err(CliError::Runtime(
            "dataset shape differs from the model's training data".into(),
        ));
    }
    let point: Result<Vec<f64>, _> = args
        .point
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect();
    let point = match point {
        Ok(p) if p.len() == model.n_features() => p,
        Ok(p) => {
            return usage(format!(
                "--point has {} values, model expects {}",
                p.len(),
                model.n_features()
            ))
        }
        Err(e) => return usage(format!("--point: {e}")),
    };

    let forest = &model.forests()[args.stage - 1];
    let mut scored: Vec<(usize, gbf::forest::Proximity)> = (0..model.n_train())
        .map(|i| (i, forest.proximity(&dataset.x, &point, i)))
        .collect();
    scored.sort_by(|a, b| {
        b.1.score
            .partial_cmp(&a.1.score)
            .unwrap()
            .then(a.0.cmp(&b.0))
    });
    println!("train_index,proximity,in_bag_trees");
    for (i, prox) in scored.into_iter().take(args.top_k) {
        println!("{i},{},{}", fmt_f(prox.score), prox.in_bag_trees);
    }
    Ok(())
}
