//! `cap`: command-line front end to the CAP regression library.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cap_core::blasso::BlassoConfig;
use cap_core::cluster::{correlation_distance, pam_cluster};
use cap_core::hierarchy::{compile_penalty_for, HierarchySpec};
use cap_core::io::load_dataset;
use cap_core::path::{fit_path, Penalty, PathOptions, SolverSettings, SolverTag};
use cap_core::selection::{aicc, cross_validate, FoldScheme, SelectionResult};
use cap_core::simulation::{run_experiment, ExperimentSpec, MethodArm};
use cap_core::{standardize, CapError, Dataset, Grouping, GroupingSpec, HierarchyGraph, Norm};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

const LAMBDA_SCALE: &str = "\
Every solver minimizes ½‖y − Xβ‖² + λ·T(β), so λ is on the half
residual-sum-of-squares scale: it is half the λ of a solver that
minimizes the full RSS. Data are centered and scaled to unit variance
before fitting unless --no-standardize is given; reported coefficients
are in the units of the input files.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 solver error.";

#[derive(Parser)]
#[command(name = "cap", version, about = "Composite Absolute Penalty regression", after_help = LAMBDA_SCALE)]
struct Cli {
    /// Worker threads for parallel work (CV folds, replications).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Coefficients at a single λ.
    Fit(FitArgs),
    /// Trace the regularization path and write it as JSON.
    Path(PathArgs),
    /// Choose λ along the path by AICc or cross-validation.
    Select(SelectArgs),
    /// Estimate a grouping by PAM on the correlation distance of X's columns.
    Cluster(ClusterArgs),
    /// Compile a hierarchy into its overlapping-group penalty.
    HierarchyCompile(CompileArgs),
    /// Run a simulation study.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Design matrix CSV, one row per observation.
    #[arg(long)]
    x: PathBuf,
    /// Response CSV, a single column.
    #[arg(long)]
    y: PathBuf,
    /// Fit the data as given instead of standardizing it.
    #[arg(long)]
    no_standardize: bool,
}

#[derive(Args)]
struct ModelArgs {
    /// lasso, ilasso, icap, hicap, linf_cap or blasso.
    #[arg(long, value_parser = parse_solver)]
    solver: SolverTag,
    /// Grouping JSON: {"groups": [[...]], "gamma0", "gamma", "weights"}.
    #[arg(long, conflicts_with = "hierarchy")]
    groups: Option<PathBuf>,
    /// Hierarchy JSON: {"nodes": [[...]], "edges": [[parent, child]], "gamma", "weights"}.
    #[arg(long)]
    hierarchy: Option<PathBuf>,
    /// Stop the path once λ falls to this fraction of λ₀.
    #[arg(long, default_value_t = 0.0)]
    lambda_min_ratio: f64,
    /// Stop the path once the degrees of freedom reach this value.
    #[arg(long)]
    max_df: Option<usize>,
    /// BLasso step size ε (default 10⁻²‖X'y‖∞/n).
    #[arg(long)]
    step_size: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Regularization level on the ½RSS scale.
    #[arg(long)]
    lambda: f64,
    /// Output JSON (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PathArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Aicc,
    Cv,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// random or balanced.
    #[arg(long, default_value = "random", value_parser = parse_scheme)]
    scheme: FoldScheme,
    /// Seed for the fold assignment; required with --method cv.
    #[arg(long)]
    seed: Option<u64>,
    /// Criterion curve CSV (lambda, criterion, df).
    #[arg(long)]
    curve: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ClusterArgs {
    /// Design matrix CSV.
    #[arg(long)]
    x: PathBuf,
    /// Number of groups.
    #[arg(long)]
    k: usize,
    #[arg(long)]
    seed: u64,
    /// Within-group norm written to the grouping.
    #[arg(long, default_value = "inf", value_parser = parse_norm)]
    gamma: Norm,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompileArgs {
    #[arg(long)]
    hierarchy: PathBuf,
    /// Number of predictors; indices outside every node get singleton groups.
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Study JSON: {"experiment": {...}, "arms": [...]}.
    #[arg(long)]
    spec: PathBuf,
    /// Replaces the seed given in the study file.
    #[arg(long)]
    seed: Option<u64>,
    /// Report JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary table CSV.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Study {
    experiment: ExperimentSpec,
    arms: Vec<MethodArm>,
}

fn parse_solver(s: &str) -> Result<SolverTag, String> {
    s.parse().map_err(|e: CapError| e.to_string())
}

fn parse_scheme(s: &str) -> Result<FoldScheme, String> {
    s.parse().map_err(|e: CapError| e.to_string())
}

fn parse_norm(s: &str) -> Result<Norm, String> {
    let v = match s {
        "inf" | "infinity" => f64::INFINITY,
        other => other.parse::<f64>().map_err(|e| e.to_string())?,
    };
    Norm::new(v).map_err(|e| e.to_string())
}

/// A failure with its exit code and the library module whose contract it
/// violated.
struct Failure {
    code: u8,
    module: &'static str,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Failure {
        Failure { code: 2, module: "cli", message: message.into() }
    }

    fn with_code(code: u8, e: CapError) -> Failure {
        Failure { code, module: e.module(), message: e.to_string() }
    }

    /// Errors raised while loading configuration files.
    fn from_config(e: CapError) -> Failure {
        Failure::with_code(2, e)
    }

    /// Errors raised while loading and preparing data files.
    fn from_data(e: CapError) -> Failure {
        Failure::with_code(3, e)
    }

    /// Errors raised by the computation itself: incompatible settings are
    /// configuration errors, malformed inputs are data errors.
    fn from_solver(e: CapError) -> Failure {
        use CapError::*;
        let code = match e {
            InvalidConfig(_) | WrongNorms(_) | OverlappingGroups | NotATree | NonConvexNorms | NormMismatch
            | InvalidNorm(_) | UnsupportedSolver(_) | Unsupported(_) | InvalidK { .. } | SchemeUnavailable(_) => 2,
            ref e if e.is_data_error() => 3,
            _ => 4,
        };
        Failure::with_code(code, e)
    }
}

/// Parses a configuration file, naming the offending field on failure.
fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        Failure::config(format!("{}: field `{field}`: {}", path.display(), e.into_inner()))
    })
}

fn load_data(args: &DataArgs) -> Result<Dataset, Failure> {
    let raw = load_dataset(&args.x, &args.y).map_err(Failure::from_data)?;
    if args.no_standardize {
        Ok(raw)
    } else {
        standardize(&raw).map_err(Failure::from_data)
    }
}

fn load_penalty(model: &ModelArgs, p: usize) -> Result<Penalty, Failure> {
    if let Some(path) = &model.groups {
        let spec: GroupingSpec = load_config(path)?;
        return Grouping::from_spec(spec, p).map(Penalty::Grouping).map_err(Failure::from_config);
    }
    if let Some(path) = &model.hierarchy {
        let spec: HierarchySpec = load_config(path)?;
        let graph = HierarchyGraph::from_spec(&spec).map_err(Failure::from_config)?;
        if model.solver == SolverTag::Hicap {
            if spec.gamma.is_some() || spec.weights.is_some() {
                return Err(Failure::config(
                    "hicap uses unit-weight L∞ node groups; drop gamma and weights or use another solver",
                ));
            }
            return Ok(Penalty::Hierarchy(graph));
        }
        let gamma = spec.gamma.clone().unwrap_or_else(|| vec![Norm::INF; graph.len()]);
        let weights = spec.weights.clone().unwrap_or_else(|| vec![1.0; graph.len()]);
        return compile_penalty_for(&graph, p, &gamma, &weights).map(Penalty::Grouping).map_err(Failure::from_config);
    }
    Ok(Penalty::None)
}

fn settings(model: &ModelArgs, data: &Dataset) -> Result<SolverSettings, Failure> {
    if !(model.lambda_min_ratio >= 0.0 && model.lambda_min_ratio < 1.0) {
        return Err(Failure::config(format!("--lambda-min-ratio must lie in [0, 1), got {}", model.lambda_min_ratio)));
    }
    let path = PathOptions { lambda_min_ratio: model.lambda_min_ratio, max_df: model.max_df, ..PathOptions::default() };
    let blasso = model.step_size.map(|step_size| BlassoConfig {
        step_size,
        lambda_min_ratio: model.lambda_min_ratio,
        ..BlassoConfig::for_dataset(data)
    });
    Ok(SolverSettings { path, blasso })
}

/// Coefficients in both the fitted and the original units.
fn coefficients(data: &Dataset, beta: &[f64]) -> Value {
    let (original, intercept) = data.to_original_units(beta);
    json!({ "beta": original, "intercept": intercept, "beta_fitted": beta })
}

fn merge(mut a: Value, b: Value) -> Value {
    if let (Some(a), Value::Object(b)) = (a.as_object_mut(), b) {
        a.extend(b);
    }
    a
}

fn write_text(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::from_data(CapError::Io(e))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_json(out: Option<&Path>, value: &Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::from_data(e.into()))?;
    text.push('\n');
    write_text(out, &text)
}

fn fit(args: &FitArgs) -> Result<(), Failure> {
    let data = load_data(&args.data)?;
    let penalty = load_penalty(&args.model, data.p())?;
    let settings = settings(&args.model, &data)?;
    if !(args.lambda >= 0.0 && args.lambda.is_finite()) {
        return Err(Failure::config(format!("--lambda must be nonnegative, got {}", args.lambda)));
    }
    let path = fit_path(&data, args.model.solver, &penalty, &settings).map_err(Failure::from_solver)?;
    let beta = path.beta_at(args.lambda);
    let head = json!({ "solver": path.solver, "lambda": args.lambda, "approximate": path.approximate });
    write_json(args.out.as_deref(), &merge(head, coefficients(&data, &beta)))
}

fn trace(args: &PathArgs) -> Result<(), Failure> {
    let data = load_data(&args.data)?;
    let penalty = load_penalty(&args.model, data.p())?;
    let settings = settings(&args.model, &data)?;
    let path = fit_path(&data, args.model.solver, &penalty, &settings).map_err(Failure::from_solver)?;
    write_json(args.out.as_deref(), &path.to_json())
}

fn select(args: &SelectArgs) -> Result<(), Failure> {
    let data = load_data(&args.data)?;
    let penalty = load_penalty(&args.model, data.p())?;
    let settings = settings(&args.model, &data)?;
    let solver = args.model.solver;
    let (selection, beta): (SelectionResult, Vec<f64>) = match args.method {
        Method::Aicc => {
            let path = fit_path(&data, solver, &penalty, &settings).map_err(Failure::from_solver)?;
            let sel = aicc(&path, &data).map_err(Failure::from_solver)?;
            let beta = path.beta_at(sel.chosen_lambda);
            (sel, beta)
        }
        Method::Cv => {
            let seed = args.seed.ok_or_else(|| Failure::config("--seed is required with --method cv"))?;
            let cv = cross_validate(&data, &penalty, solver, &settings, args.folds, args.scheme, seed)
                .map_err(Failure::from_solver)?;
            (cv.selection, cv.beta)
        }
    };
    if let Some(curve) = &args.curve {
        write_text(Some(curve), &selection.to_csv())?;
    }
    let head = json!({ "solver": solver, "selection": selection });
    write_json(args.out.as_deref(), &merge(head, coefficients(&data, &beta)))
}

fn cluster(args: &ClusterArgs) -> Result<(), Failure> {
    let x = cap_core::io::read_matrix_csv(&args.x).map_err(Failure::from_data)?;
    let n = x.nrows();
    let data = Dataset::new(x, DVector::zeros(n)).map_err(Failure::from_data)?;
    let result = pam_cluster(&correlation_distance(&data), args.k, args.seed).map_err(Failure::from_solver)?;
    let grouping = result.to_grouping(args.gamma).map_err(Failure::from_solver)?;
    let value = serde_json::to_value(grouping.to_spec()).map_err(|e| Failure::from_data(e.into()))?;
    write_json(args.out.as_deref(), &value)
}

fn hierarchy_compile(args: &CompileArgs) -> Result<(), Failure> {
    let spec: HierarchySpec = load_config(&args.hierarchy)?;
    let graph = HierarchyGraph::from_spec(&spec).map_err(Failure::from_config)?;
    let p = args.p.unwrap_or_else(|| graph.p());
    let gamma = spec.gamma.unwrap_or_else(|| vec![Norm::INF; graph.len()]);
    let weights = spec.weights.unwrap_or_else(|| vec![1.0; graph.len()]);
    let grouping = compile_penalty_for(&graph, p, &gamma, &weights).map_err(Failure::from_config)?;
    let value = serde_json::to_value(grouping.to_spec()).map_err(|e| Failure::from_data(e.into()))?;
    write_json(args.out.as_deref(), &value)
}

fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let mut study: Study = load_config(&args.spec)?;
    if let Some(seed) = args.seed {
        study.experiment.seed = seed;
    }
    let report = run_experiment(&study.experiment, &study.arms).map_err(Failure::from_solver)?;
    if let Some(summary) = &args.summary {
        write_text(Some(summary), &report.summary_csv())?;
    }
    let value = serde_json::to_value(&report).map_err(|e| Failure::from_data(e.into()))?;
    write_json(args.out.as_deref(), &value)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Failure::config("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::config(e.to_string()))?;
    }
    match &cli.command {
        Command::Fit(a) => fit(a),
        Command::Path(a) => trace(a),
        Command::Select(a) => select(a),
        Command::Cluster(a) => cluster(a),
        Command::HierarchyCompile(a) => hierarchy_compile(a),
        Command::Simulate(a) => simulate(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let err = json!({ "error": { "module": f.module, "exit_code": f.code, "message": f.message } });
            eprintln!("{err}");
            ExitCode::from(f.code)
        }
    }
}
