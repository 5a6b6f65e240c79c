//! `wrf`: simulate data, train Wasserstein random forests, query them and
//! run the benchmark suite.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 internal error.

mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use wrf::eval::{param_sweep, run_benchmark, BenchConfig, Method, SweepAxis};
use wrf::forest::{fit, Criterion, Dataset, Forest, ForestParams, Splitter};
use wrf::hte::{fit_hte, is_hte_json, HTEModel};
use wrf::synth::{generate, ScenarioKind, ScenarioSpec};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 1,
            Self::Data(_) => 2,
            Self::Internal(_) => 3,
        }
    }
}

impl From<wrf::Error> for CliError {
    fn from(e: wrf::Error) -> Self {
        match e {
            wrf::Error::Solver(_) => Self::Internal(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "wrf", version, about = "Wasserstein random forests for conditional distributions and treatment effects")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, env = "WRF_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic observational dataset.
    Simulate(SimulateArgs),
    /// Train one forest.
    Train(TrainArgs),
    /// Train one forest per treatment arm.
    TrainHte(TrainHteArgs),
    /// Predict the conditional law at query points.
    Predict(PredictArgs),
    /// Estimate the CATE at query points.
    Cate(QueryArgs),
    /// Wasserstein distance between the two arms' predicted laws.
    Lambda(LambdaArgs),
    /// Out-of-bag Lambda at every training row.
    OobLambda(OobLambdaArgs),
    /// Benchmark methods against the synthetic ground truth.
    Bench(BenchArgs),
    /// Vary one forest parameter and benchmark each value.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Scenario {
    Main,
    #[value(alias = "multivariate_cost")]
    MultivariateCost,
    #[value(alias = "appendix_a")]
    AppendixA,
    #[value(alias = "appendix_c")]
    AppendixC,
}

impl Scenario {
    fn kind(self) -> ScenarioKind {
        match self {
            Self::Main => ScenarioKind::Main,
            Self::MultivariateCost => ScenarioKind::MultivariateCost,
            Self::AppendixA => ScenarioKind::AppendixA,
            Self::AppendixC => ScenarioKind::AppendixC,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum CriterionArg {
    Intra,
    Inter,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SplitterArg {
    Greedy,
    ExtraRandom,
    Mondrian,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "main")]
    scenario: Scenario,
    #[arg(long)]
    n: usize,
    /// Covariate dimension.
    #[arg(long, default_value_t = 50)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct ForestArgs {
    #[arg(long, value_enum, default_value = "intra")]
    criterion: CriterionArg,
    /// Wasserstein order of the inter criterion.
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 200)]
    trees: usize,
    /// Per-tree subsample size.
    #[arg(long, default_value_t = 500)]
    subsample: usize,
    /// Subsample with replacement (`--replace false` to turn off).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    replace: Option<bool>,
    /// Directions tried per split (default: all).
    #[arg(long)]
    mtry: Option<usize>,
    #[arg(long, default_value_t = 2)]
    nodesize: usize,
    #[arg(long, value_enum, default_value = "greedy")]
    splitter: SplitterArg,
    /// Scale each response coordinate by its standard deviation when splitting.
    #[arg(long)]
    standardize: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ForestArgs {
    fn params(&self, d: usize, replace_default: bool) -> ForestParams {
        ForestParams {
            m_trees: self.trees,
            subsample_size: self.subsample,
            with_replacement: self.replace.unwrap_or(replace_default),
            mtry: self.mtry.unwrap_or(d),
            nodesize: self.nodesize,
            criterion: match self.criterion {
                CriterionArg::Intra => Criterion::IntraL2,
                CriterionArg::Inter => Criterion::InterWp,
            },
            p: self.p,
            seed: self.seed,
            splitter: match self.splitter {
                SplitterArg::Greedy => Splitter::Greedy,
                SplitterArg::ExtraRandom => Splitter::ExtraRandom,
                SplitterArg::Mondrian => Splitter::Mondrian,
            },
            standardize: self.standardize,
        }
    }
}

#[derive(Args, Serialize)]
struct TrainArgs {
    /// Dataset CSV with header `x1..xd,y1[,y2][,t]`.
    #[arg(long)]
    data: PathBuf,
    /// Train on the rows of one treatment arm only.
    #[arg(long)]
    arm: Option<u8>,
    #[command(flatten)]
    forest: ForestArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct TrainHteArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    forest: ForestArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
#[group(id = "query", required = true, multiple = false, args = ["x", "x_file"])]
struct Query {
    /// One comma-separated query point.
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
    /// Headerless CSV of query points, one per row.
    #[arg(long)]
    x_file: Option<PathBuf>,
}

impl Query {
    fn points(&self, d: usize) -> Result<Vec<Vec<f64>>, CliError> {
        match (&self.x, &self.x_file) {
            (Some(text), None) => Ok(vec![io::parse_inline(text, d)?]),
            (None, Some(path)) => io::read_queries(path, d),
            _ => Err(CliError::Usage("exactly one of --x and --x-file is required".into())),
        }
    }
}

#[derive(Args, Serialize)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Arm to query for a two-arm model.
    #[arg(long)]
    arm: Option<u8>,
    #[command(flatten)]
    query: Query,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct QueryArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    query: Query,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct LambdaArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    query: Query,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct OobLambdaArgs {
    #[arg(long)]
    model: PathBuf,
    /// The dataset the model was trained on.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    #[arg(long, value_enum, default_value = "main")]
    scenario: Scenario,
    /// Training rows drawn from the scenario.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    d: usize,
    /// Comma-separated: wrf_intra, wrf_inter_p<p>, ert, mondrian.
    #[arg(long, value_delimiter = ',', default_value = "wrf_intra,wrf_inter_p1,wrf_inter_p2,ert,mondrian")]
    methods: Vec<String>,
    /// Wasserstein orders to evaluate.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    orders: Vec<f64>,
    #[arg(long)]
    n_test: Option<usize>,
    /// Use 1000 test points instead of 200.
    #[arg(long, conflicts_with = "n_test")]
    full_scale: bool,
    #[arg(long, default_value_t = 2000)]
    m_ref: usize,
    /// Seed for test points and reference samples (default: 1000 + --seed).
    #[arg(long)]
    eval_seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the flattened CSV report here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

impl EvalArgs {
    fn config(&self, forest: &ForestArgs, arms: Vec<u8>) -> Result<BenchConfig, CliError> {
        let methods = self
            .methods
            .iter()
            .map(|m| Method::parse(m.trim()).ok_or_else(|| CliError::Usage(format!("unknown method {m:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let seed = forest.seed;
        Ok(BenchConfig {
            scenario: ScenarioSpec { kind: self.scenario.kind(), n: self.n, d: self.d, seed },
            methods,
            params: forest.params(self.d, true),
            arms,
            orders: self.orders.clone(),
            n_test: self.n_test.unwrap_or(if self.full_scale { 1000 } else { 200 }),
            m_ref: self.m_ref,
            eval_seed: self.eval_seed.unwrap_or(1000 + seed),
        })
    }
}

#[derive(Args, Serialize)]
struct BenchArgs {
    #[command(flatten)]
    eval: EvalArgs,
    #[command(flatten)]
    forest: ForestArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,1")]
    arms: Vec<u8>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum AxisArg {
    Mtry,
    Nodesize,
    SubsampleSize,
}

#[derive(Args, Serialize)]
struct SweepArgs {
    #[arg(long, value_enum)]
    axis: AxisArg,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    arm: u8,
    #[command(flatten)]
    eval: EvalArgs,
    #[command(flatten)]
    forest: ForestArgs,
}

/// Flags of the invoked command, echoed into JSON outputs. `--threads` is
/// left out so that outputs do not depend on it.
fn meta(command: &str, flags: &impl Serialize) -> Value {
    json!({ "command": command, "version": env!("CARGO_PKG_VERSION"), "flags": flags })
}

enum Model {
    Single(Forest),
    Hte(HTEModel),
}

fn load_model(path: &Path) -> Result<Model, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: invalid JSON: {e}", path.display())))?;
    let context = |e: wrf::Error| CliError::Data(format!("{}: {e}", path.display()));
    if is_hte_json(&value) {
        let file = serde_json::from_value(value).map_err(|e| context(e.into()))?;
        Ok(Model::Hte(HTEModel::from_file(file).map_err(context)?))
    } else {
        let file = serde_json::from_value(value).map_err(|e| context(e.into()))?;
        Ok(Model::Single(Forest::from_file(file).map_err(context)?))
    }
}

fn load_hte(path: &Path) -> Result<HTEModel, CliError> {
    match load_model(path)? {
        Model::Hte(m) => Ok(m),
        Model::Single(_) => Err(CliError::Data(format!("{}: expected a two-arm model from train-hte", path.display()))),
    }
}

fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let data = generate(&ScenarioSpec { kind: args.scenario.kind(), n: args.n, d: args.d, seed: args.seed })?;
    io::write_dataset(&args.out, &data)
}

fn train(args: &TrainArgs) -> Result<(), CliError> {
    let table = io::read_table(&args.data)?;
    let data = match args.arm {
        Some(arm) => table.into_hte()?.arm(arm)?,
        None => Dataset::from_flat(table.d, table.dy, table.x, table.y)?,
    };
    let forest = fit(&data, &args.forest.params(data.dim_x(), false))?;
    io::write_json(&args.out, &io::with_meta(forest.to_file(), &meta("train", args))?, false)
}

fn train_hte(args: &TrainHteArgs) -> Result<(), CliError> {
    let data = io::read_table(&args.data)?.into_hte()?;
    let params = args.forest.params(data.d, false);
    let model = fit_hte(&data, &params, &params)?;
    io::write_json(&args.out, &io::with_meta(model.to_file(), &meta("train-hte", args))?, false)
}

fn predict(args: &PredictArgs) -> Result<(), CliError> {
    let forest = match (load_model(&args.model)?, args.arm) {
        (Model::Single(f), None) => f,
        (Model::Single(_), Some(_)) => return Err(CliError::Usage("--arm applies to two-arm models only".into())),
        (Model::Hte(m), Some(arm)) => m.forest(arm)?.clone(),
        (Model::Hte(_), None) => return Err(CliError::Usage("--arm is required for a two-arm model".into())),
    };
    let points = args.query.points(forest.dim_x())?;
    let measures = points
        .iter()
        .map(|x| forest.predict_measure(x).map(|m| m.to_json()))
        .collect::<Result<Vec<_>, _>>()?;
    let meta = meta("predict", args);
    let out = match <[_; 1]>::try_from(measures) {
        Ok([one]) => io::with_meta(one, &meta)?,
        Err(all) => json!({ "measures": all, "meta": meta }),
    };
    io::write_json(&args.out, &out, true)
}

fn cate(args: &QueryArgs) -> Result<(), CliError> {
    let model = load_hte(&args.model)?;
    let points = args.query.points(model.dim_x())?;
    let rows = points
        .iter()
        .enumerate()
        .map(|(i, x)| Ok((i, model.estimate_cate(x)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    io::write_pairs(&args.out, ["row", "cate"], &rows)
}

fn lambda(args: &LambdaArgs) -> Result<(), CliError> {
    let model = load_hte(&args.model)?;
    let points = args.query.points(model.dim_x())?;
    let rows = points
        .iter()
        .enumerate()
        .map(|(i, x)| Ok((i, model.lambda_p(x, args.p)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    io::write_pairs(&args.out, ["row", "lambda"], &rows)
}

fn oob_lambda(args: &OobLambdaArgs) -> Result<(), CliError> {
    let model = load_hte(&args.model)?;
    let table = io::read_table(&args.data)?;
    if table.d != model.dim_x() {
        return Err(CliError::Data(format!("{}: {} covariates, model expects {}", args.data.display(), table.d, model.dim_x())));
    }
    let n = table.n();
    if model.group0.iter().chain(&model.group1).any(|&r| r >= n) {
        return Err(CliError::Data(format!("{}: fewer rows than the model's training data", args.data.display())));
    }
    let result = model.oob_lambda(args.p, |i| table.x_row(i))?;
    if !result.skipped.is_empty() {
        eprintln!("{} rows have no out-of-bag tree and are omitted", result.skipped.len());
    }
    io::write_pairs(&args.out, ["row", "lambda"], &result.values)
}

fn write_report(eval: &EvalArgs, report: &wrf::eval::BenchReport, meta: &Value) -> Result<(), CliError> {
    for f in &report.failures {
        eprintln!("{} (t={}) failed: {}", f.method, f.t, f.error);
    }
    io::write_json(&eval.out, &io::with_meta(report, meta)?, true)?;
    if let Some(path) = &eval.csv {
        io::write_atomic(path, report.to_csv().as_bytes())?;
    }
    Ok(())
}

fn bench(args: &BenchArgs) -> Result<(), CliError> {
    let config = args.eval.config(&args.forest, args.arms.clone())?;
    let report = run_benchmark(&config)?;
    write_report(&args.eval, &report, &meta("bench", args))
}

fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    let config = args.eval.config(&args.forest, vec![args.arm])?;
    let axis = match args.axis {
        AxisArg::Mtry => SweepAxis::Mtry,
        AxisArg::Nodesize => SweepAxis::Nodesize,
        AxisArg::SubsampleSize => SweepAxis::SubsampleSize,
    };
    let report = param_sweep(axis, &args.values, &config)?;
    write_report(&args.eval, &report, &meta("sweep", args))
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train(a),
        Command::TrainHte(a) => train_hte(a),
        Command::Predict(a) => predict(a),
        Command::Cate(a) => cate(a),
        Command::Lambda(a) => lambda(a),
        Command::OobLambda(a) => oob_lambda(a),
        Command::Bench(a) => bench(a),
        Command::Sweep(a) => sweep(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
