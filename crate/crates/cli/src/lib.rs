//! Command-line front end: argument definitions and the `run` dispatcher.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gwmodel::bandwidth::{BandwidthProblem, CvModel, Objective};
use gwmodel::discriminant::{confusion_matrix, da_fit_predict, gwda_fit_predict, DaMethod, GwdaSpec, Priors};
use gwmodel::hetero::gwr_hetero;
use gwmodel::inference::{collinearity_diagnostics, Family};
use gwmodel::io::{self, CsvTable, ResultTable};
use gwmodel::kernel::distance_matrix;
use gwmodel::mixed::{compare_with_basic, gwr_mixed};
use gwmodel::montecarlo::DEFAULT_NSIM;
use gwmodel::pca::{gwpca, montecarlo_gwpca, standardize_global, GwpcaMcOptions};
use gwmodel::regression::{fit_report, gwr_basic, montecarlo_gwr};
use gwmodel::summary::{gwss, montecarlo_gwss, DEFAULT_ALPHA};
use gwmodel::{Dataset, DistanceMetric, GwError, KernelFunction, KernelSpec, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gwmodel", version, about = "Geographically weighted models on point data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the distance matrix
    Dist(DistArgs),
    /// GW summary statistics
    Gwss(GwssArgs),
    /// GW principal components analysis
    Gwpca(GwpcaArgs),
    /// Basic GW regression with adjusted p-values
    Gwr(GwrArgs),
    /// Mixed GW regression
    GwrMixed(MixedArgs),
    /// Heteroskedastic GW regression
    GwrHetero(GwrArgs),
    /// GW discriminant analysis
    Gwda(GwdaArgs),
    /// Bandwidth selection and profiling
    Bw(BwArgs),
    /// Monte Carlo tests for spatial non-stationarity
    Mc(McArgs),
    /// Local collinearity diagnostics
    Diag(DiagArgs),
}

/// Bandwidth given on the command line: a number or `auto`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BwValue {
    Auto,
    Value(f64),
}

impl FromStr for BwValue {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(BwValue::Auto);
        }
        s.parse::<f64>().map(BwValue::Value).map_err(|_| format!("expected a number or 'auto', got '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricKind {
    Euclidean,
    Minkowski,
    Geodesic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Cv,
    Aicc,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Input CSV with a header row
    #[arg(short, long)]
    pub input: PathBuf,
    /// Column holding the x coordinate (longitude for geodesic distances)
    #[arg(long, default_value = "x")]
    pub x_col: String,
    /// Column holding the y coordinate (latitude for geodesic distances)
    #[arg(long, default_value = "y")]
    pub y_col: String,
    #[arg(long, value_enum, default_value_t = MetricKind::Euclidean)]
    pub metric: MetricKind,
    /// Minkowski power
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// Minkowski axis rotation in radians
    #[arg(long, default_value_t = 0.0)]
    pub theta: f64,
}

#[derive(Debug, Clone, Args)]
pub struct KernelArgs {
    #[arg(long, default_value = "bisquare")]
    pub kernel: String,
    /// Bandwidth value, or `auto` to optimise it
    #[arg(long, default_value = "auto")]
    pub bw: BwValue,
    /// Treat the bandwidth as a neighbour count
    #[arg(long)]
    pub adaptive: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DistArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GwssArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Variables to summarise
    #[arg(long, value_delimiter = ',', required = true)]
    pub vars: Vec<String>,
    /// Per-location table (.csv or .geojson)
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GwpcaArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    pub vars: Vec<String>,
    /// Components retained (also used for the CV bandwidth)
    #[arg(short, long, default_value_t = 2)]
    pub k: usize,
    /// Standardise each variable globally first
    #[arg(long)]
    pub standardize: bool,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Long-format table of local loadings
    #[arg(long)]
    pub loadings: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GwrArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long)]
    pub response: String,
    #[arg(long, value_delimiter = ',', required = true)]
    pub predictors: Vec<String>,
    /// Criterion for an automatic bandwidth
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Aicc)]
    pub objective: ObjectiveArg,
    /// Adjust p-values over each coefficient (`coefficient`) or over all tests (`all`)
    #[arg(long, default_value = "coefficient")]
    pub family: String,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct MixedArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long)]
    pub response: String,
    /// Predictors with local coefficients
    #[arg(long, value_delimiter = ',')]
    pub local: Vec<String>,
    /// Predictors with global coefficients
    #[arg(long, value_delimiter = ',')]
    pub global: Vec<String>,
    /// Make the intercept global
    #[arg(long)]
    pub intercept_fixed: bool,
    /// Criterion for an automatic bandwidth (chosen for the basic model)
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Aicc)]
    pub objective: ObjectiveArg,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct LabelArgs {
    /// Class label column (or winner label column with --share-col)
    #[arg(long)]
    pub labels: String,
    /// Winning share in percent; shares in [45, 55] become `Borderline`
    #[arg(long)]
    pub share_col: Option<String>,
    #[arg(long, default_value = "lda")]
    pub method: String,
    /// Fixed priors in sorted class order (default: local weighted shares)
    #[arg(long, value_delimiter = ',')]
    pub priors: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct GwdaArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    pub predictors: Vec<String>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Gwr,
    Gwpca,
    Gwda,
}

#[derive(Debug, Clone, Args)]
pub struct BwArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "bisquare")]
    pub kernel: String,
    #[arg(long)]
    pub adaptive: bool,
    #[arg(long, value_enum)]
    pub model: ModelKind,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Cv)]
    pub objective: ObjectiveArg,
    #[arg(long)]
    pub response: Option<String>,
    /// Predictors (gwr, gwda) or variables (gwpca)
    #[arg(long, value_delimiter = ',', required = true)]
    pub vars: Vec<String>,
    #[arg(short, long, default_value_t = 2)]
    pub k: usize,
    #[arg(long)]
    pub standardize: bool,
    #[arg(long)]
    pub labels: Option<String>,
    #[arg(long)]
    pub share_col: Option<String>,
    #[arg(long, default_value = "lda")]
    pub method: String,
    /// Bandwidths to profile, as a list or `start:stop:step`
    #[arg(long)]
    pub grid: Option<String>,
    /// Two-column (bandwidth, score) profile table
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Per-observation CV contributions at the chosen bandwidth
    #[arg(long)]
    pub contributions: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestKind {
    Gwss,
    Gwr,
    Gwpca,
}

#[derive(Debug, Clone, Args)]
pub struct McArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long, value_enum)]
    pub test: TestKind,
    #[arg(long)]
    pub response: Option<String>,
    /// Variables (gwss, gwpca) or predictors (gwr)
    #[arg(long, value_delimiter = ',', required = true)]
    pub vars: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_NSIM)]
    pub nsim: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(short, long, default_value_t = 2)]
    pub k: usize,
    /// One-based component whose eigenvalue is tested (gwpca)
    #[arg(long, default_value_t = 1)]
    pub component: usize,
    #[arg(long)]
    pub standardize: bool,
    /// Re-select the bandwidth in every simulation (gwpca)
    #[arg(long)]
    pub reoptimize: bool,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DiagArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    pub predictors: Vec<String>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

impl DataArgs {
    fn metric(&self) -> Result<DistanceMetric> {
        match self.metric {
            MetricKind::Euclidean => Ok(DistanceMetric::euclidean()),
            MetricKind::Minkowski => DistanceMetric::minkowski(self.p, self.theta),
            MetricKind::Geodesic => Ok(DistanceMetric::Geodesic),
        }
    }

    fn table(&self) -> Result<CsvTable> {
        CsvTable::read(&self.input)
    }

    fn dataset(&self, table: &CsvTable, vars: &[String]) -> Result<Dataset> {
        let data = table.dataset(&self.x_col, &self.y_col, Some(vars))?;
        if self.metric == MetricKind::Geodesic {
            data.points().check_geographic()?;
        }
        Ok(data)
    }

    fn xy(&self) -> (&str, &str) {
        (&self.x_col, &self.y_col)
    }
}

/// Kernel with a placeholder bandwidth, to be replaced by a search.
fn template(function: KernelFunction, adaptive: bool, n: usize) -> Result<KernelSpec> {
    if adaptive {
        KernelSpec::adaptive(function, n)
    } else {
        KernelSpec::fixed(function, 1.0)
    }
}

fn explicit_kernel(args: &KernelArgs) -> Result<Option<KernelSpec>> {
    let function: KernelFunction = args.kernel.parse()?;
    match args.bw {
        BwValue::Auto => Ok(None),
        BwValue::Value(v) if args.adaptive => {
            if v.fract() != 0.0 || v < 1.0 {
                return Err(GwError::Config(format!("adaptive bandwidth must be a whole number of neighbours, got {v}")));
            }
            KernelSpec::adaptive(function, v as usize).map(Some)
        }
        BwValue::Value(v) => KernelSpec::fixed(function, v).map(Some),
    }
}

/// Explicit bandwidth, or one optimised for `model`.
fn resolve_kernel(
    args: &KernelArgs,
    data: &Dataset,
    metric: DistanceMetric,
    model: Option<(CvModel<'_>, Objective)>,
) -> Result<KernelSpec> {
    if let Some(k) = explicit_kernel(args)? {
        return Ok(k);
    }
    let Some((model, objective)) = model else {
        return Err(GwError::Config("this command needs an explicit --bw value".into()));
    };
    let function: KernelFunction = args.kernel.parse()?;
    let problem = BandwidthProblem::new(model, data, template(function, args.adaptive, data.n())?, metric, objective)?;
    let (kernel, choice) = problem.optimize()?;
    log::info!("optimised bandwidth by {objective}: {} (score {})", kernel.bandwidth, choice.score);
    Ok(kernel)
}

fn objective(o: ObjectiveArg) -> Objective {
    match o {
        ObjectiveArg::Cv => Objective::Cv,
        ObjectiveArg::Aicc => Objective::Aicc,
    }
}

fn class_labels(table: &CsvTable, labels: &str, share_col: Option<&str>) -> Result<Vec<String>> {
    let winners = table.text_column(labels)?;
    match share_col {
        Some(col) => io::derive_election_classes(&table.numeric_column(col)?, &winners),
        None => Ok(winners),
    }
}

fn gwda_spec(method: &str, priors: &[f64]) -> Result<GwdaSpec> {
    Ok(GwdaSpec {
        method: DaMethod::from_str(method)?,
        priors: if priors.is_empty() { Priors::GwWeighted } else { Priors::Fixed(priors.to_vec()) },
    })
}

fn maybe_write(table: &ResultTable, path: &Option<PathBuf>) -> Result<()> {
    if let Some(p) = path {
        table.write(p)?;
        log::info!("wrote {}", p.display());
    }
    Ok(())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || GwError::Config(format!("cannot parse bandwidth grid '{spec}'"));
    if let Some((start, rest)) = spec.split_once(':') {
        let (stop, step) = rest.split_once(':').ok_or_else(bad)?;
        let (start, stop, step): (f64, f64, f64) = (
            start.parse().map_err(|_| bad())?,
            stop.parse().map_err(|_| bad())?,
            step.parse().map_err(|_| bad())?,
        );
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize;
        return Ok((0..=count).map(|i| start + step * i as f64).collect());
    }
    spec.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect()
}

fn run_dist(a: &DistArgs) -> Result<()> {
    let table = a.data.table()?;
    let points = table.points(&a.data.x_col, &a.data.y_col)?;
    let dist = distance_matrix(&points, a.data.metric()?)?;
    io::distance_table(&dist).write(&a.output)?;
    println!("distance matrix: {} x {}", dist.len(), dist.len());
    Ok(())
}

fn run_gwss(a: &GwssArgs) -> Result<()> {
    let metric = a.data.metric()?;
    let data = a.data.dataset(&a.data.table()?, &a.vars)?;
    let kernel = resolve_kernel(&a.kernel, &data, metric, None)?;
    log::info!("gwss: kernel {} bandwidth {} metric {metric}", kernel.function, kernel.bandwidth);
    let res = gwss(&data, &a.vars, &kernel, metric)?;
    println!("bandwidth: {}", kernel.bandwidth);
    println!("locations: {}, undefined correlations: {}", data.n(), res.undefined_correlations.len());
    maybe_write(&io::gwss_table(data.points(), a.data.xy(), &res), &a.output)
}

fn pca_data(data: Dataset, standardize: bool) -> Result<Dataset> {
    if standardize {
        standardize_global(&data)
    } else {
        Ok(data)
    }
}

fn run_gwpca(a: &GwpcaArgs) -> Result<()> {
    let metric = a.data.metric()?;
    let data = pca_data(a.data.dataset(&a.data.table()?, &a.vars)?, a.standardize)?;
    let kernel = resolve_kernel(&a.kernel, &data, metric, Some((CvModel::Gwpca { k: a.k }, Objective::Cv)))?;
    log::info!("gwpca: k {} kernel {} bandwidth {} metric {metric}", a.k, kernel.function, kernel.bandwidth);
    let res = gwpca(&data, &kernel, metric, a.k, false)?;
    println!("bandwidth: {}", kernel.bandwidth);
    let cum = res.cumulative_ptv(a.k);
    let mean = cum.iter().sum::<f64>() / cum.len() as f64;
    println!("mean cumulative PTV of {} component(s): {mean:.3}", a.k);
    maybe_write(&io::gwpca_table(data.points(), a.data.xy(), &res), &a.output)?;
    maybe_write(&io::gwpca_loadings_table(&res), &a.loadings)
}

fn run_gwr(a: &GwrArgs) -> Result<()> {
    let metric = a.data.metric()?;
    let family: Family = a.family.parse()?;
    let mut vars = a.predictors.clone();
    vars.push(a.response.clone());
    let data = a.data.dataset(&a.data.table()?, &vars)?;
    let model = CvModel::Gwr { response: &a.response, predictors: &a.predictors };
    let kernel = resolve_kernel(&a.kernel, &data, metric, Some((model, objective(a.objective))))?;
    log::info!("gwr: kernel {} bandwidth {} metric {metric} family {family:?}", kernel.function, kernel.bandwidth);
    let fit = gwr_basic(&data, &a.response, &a.predictors, &kernel, metric)?;
    print!("{}", fit_report(&fit));
    maybe_write(&io::gwr_table(data.points(), a.data.xy(), &fit, family), &a.output)
}

fn run_hetero(a: &GwrArgs) -> Result<()> {
    let metric = a.data.metric()?;
    let mut vars = a.predictors.clone();
    vars.push(a.response.clone());
    let data = a.data.dataset(&a.data.table()?, &vars)?;
    let model = CvModel::Gwr { response: &a.response, predictors: &a.predictors };
    let kernel = resolve_kernel(&a.kernel, &data, metric, Some((model, objective(a.objective))))?;
    log::info!("gwr-hetero: kernel {} bandwidth {} metric {metric}", kernel.function, kernel.bandwidth);
    let fit = gwr_hetero(&data, &a.response, &a.predictors, &kernel, metric)?;
    println!("bandwidth: {}", kernel.bandwidth);
    println!("fits: {}, converged: {}", fit.iterations, fit.converged);
    print!("{}", gwmodel::regression::summarize_surfaces(&fit.names, &fit.coefficients));
    maybe_write(&io::hetero_table(data.points(), a.data.xy(), &fit), &a.output)
}

fn run_mixed(a: &MixedArgs) -> Result<()> {
    let metric = a.data.metric()?;
    let mut vars: Vec<String> = a.local.iter().chain(&a.global).cloned().collect();
    let predictors = vars.clone();
    vars.push(a.response.clone());
    let data = a.data.dataset(&a.data.table()?, &vars)?;
    let model = CvModel::Gwr { response: &a.response, predictors: &predictors };
    let kernel = resolve_kernel(&a.kernel, &data, metric, Some((model, objective(a.objective))))?;
    log::info!(
        "gwr-mixed: kernel {} bandwidth {} metric {metric} intercept fixed {}",
        kernel.function,
        kernel.bandwidth,
        a.intercept_fixed
    );
    let fit = gwr_mixed(&data, &a.response, &a.local, &a.global, a.intercept_fixed, &kernel, metric)?;
    print!("{fit}");
    compare_with_basic(&data, &a.response, &fit, metric)?;
    maybe_write(&io::mixed_table(data.points(), a.data.xy(), &fit), &a.output)
}

fn run_gwda(a: &GwdaArgs) -> Result<()> {
    let metric = a.data.metric()?;
    let table = a.data.table()?;
    let data = a.data.dataset(&table, &a.predictors)?;
    let labels = class_labels(&table, &a.labels.labels, a.labels.share_col.as_deref())?;
    let spec = gwda_spec(&a.labels.method, &a.labels.priors)?;
    let model = CvModel::Gwda { labels: &labels, predictors: &a.predictors, spec: &spec };
    let kernel = resolve_kernel(&a.kernel, &data, metric, Some((model, Objective::Cv)))?;
    log::info!("gwda: {spec:?} kernel {} bandwidth {} metric {metric}", kernel.function, kernel.bandwidth);
    let global = da_fit_predict(&data, &labels, &a.predictors, &spec)?;
    let local = gwda_fit_predict(&data, &labels, &a.predictors, &spec, &kernel, metric)?;
    let global_cm = confusion_matrix(&labels, &global.predicted)?;
    let local_cm = confusion_matrix(&labels, &local.predicted)?;
    println!("bandwidth: {}", kernel.bandwidth);
    println!("global DA classification rate: {:.4}", global_cm.rate());
    print!("{global_cm}");
    println!("GW DA classification rate: {:.4}", local_cm.rate());
    print!("{local_cm}");
    maybe_write(&io::gwda_table(data.points(), a.data.xy(), &labels, &local), &a.output)
}

fn run_bw(a: &BwArgs) -> Result<()> {
    let metric = a.data.metric()?;
    let table = a.data.table()?;
    let function: KernelFunction = a.kernel.parse()?;
    let labels;
    let spec;
    let (data, model) = match a.model {
        ModelKind::Gwr => {
            let response = a.response.as_deref().ok_or_else(|| GwError::Config("--response is required for gwr".into()))?;
            let mut vars = a.vars.clone();
            vars.push(response.to_string());
            (a.data.dataset(&table, &vars)?, CvModel::Gwr { response, predictors: &a.vars })
        }
        ModelKind::Gwpca => (pca_data(a.data.dataset(&table, &a.vars)?, a.standardize)?, CvModel::Gwpca { k: a.k }),
        ModelKind::Gwda => {
            let col = a.labels.as_deref().ok_or_else(|| GwError::Config("--labels is required for gwda".into()))?;
            labels = class_labels(&table, col, a.share_col.as_deref())?;
            spec = gwda_spec(&a.method, &[])?;
            (a.data.dataset(&table, &a.vars)?, CvModel::Gwda { labels: &labels, predictors: &a.vars, spec: &spec })
        }
    };
    let obj = objective(a.objective);
    log::info!("bw: model {:?} objective {obj} kernel {function} adaptive {} metric {metric}", a.model, a.adaptive);
    let problem = BandwidthProblem::new(model, &data, template(function, a.adaptive, data.n())?, metric, obj)?;
    let (kernel, choice) = problem.optimize()?;
    println!("bandwidth: {}", kernel.bandwidth);
    println!("{obj} score: {}", choice.score);
    if let Some((b, s)) = choice.better_grid_point {
        println!("warning: grid bandwidth {b} scores {s}, below the search optimum");
    }
    if let Some(grid) = &a.grid {
        let profile = problem.profile(&parse_grid(grid)?);
        print!("{profile}");
        maybe_write(&io::profile_table(&profile), &a.profile)?;
    } else if a.profile.is_some() {
        return Err(GwError::Config("--profile needs --grid".into()));
    }
    if a.contributions.is_some() {
        let c = problem.cv_contributions(&kernel)?;
        maybe_write(&io::contributions_table(data.points(), a.data.xy(), &c), &a.contributions)?;
    }
    Ok(())
}

fn run_mc(a: &McArgs) -> Result<()> {
    let metric = a.data.metric()?;
    let table = a.data.table()?;
    log::info!("mc: test {:?} nsim {} seed {} metric {metric}", a.test, a.nsim, a.seed);
    match a.test {
        TestKind::Gwss => {
            let data = a.data.dataset(&table, &a.vars)?;
            let kernel = resolve_kernel(&a.kernel, &data, metric, None)?;
            println!("bandwidth: {}", kernel.bandwidth);
            let rep = montecarlo_gwss(&data, &a.vars, &kernel, metric, a.nsim, a.seed, a.alpha)?;
            let flagged = rep.significant.iter().filter(|b| **b).count();
            println!("nsim: {}, seed: {}, significant local statistics: {flagged}", rep.nsim, rep.seed);
            maybe_write(&io::gwss_mc_table(data.points(), a.data.xy(), &rep), &a.output)
        }
        TestKind::Gwr => {
            let response = a.response.as_deref().ok_or_else(|| GwError::Config("--response is required for gwr".into()))?;
            let mut vars = a.vars.clone();
            vars.push(response.to_string());
            let data = a.data.dataset(&table, &vars)?;
            let model = CvModel::Gwr { response, predictors: &a.vars };
            let kernel = resolve_kernel(&a.kernel, &data, metric, Some((model, Objective::Aicc)))?;
            println!("bandwidth: {}", kernel.bandwidth);
            let rep = montecarlo_gwr(&data, response, &a.vars, &kernel, metric, a.nsim, a.seed)?;
            print!("{rep}");
            maybe_write(&io::gwr_mc_table(&rep), &a.output)
        }
        TestKind::Gwpca => {
            let data = pca_data(a.data.dataset(&table, &a.vars)?, a.standardize)?;
            let kernel = resolve_kernel(&a.kernel, &data, metric, Some((CvModel::Gwpca { k: a.k }, Objective::Cv)))?;
            println!("bandwidth: {}", kernel.bandwidth);
            if a.component == 0 {
                return Err(GwError::Config("--component is one-based".into()));
            }
            let opts = GwpcaMcOptions {
                k: a.k,
                component: a.component - 1,
                nsim: a.nsim,
                seed: a.seed,
                reoptimize: a.reoptimize,
            };
            let rep = montecarlo_gwpca(&data, &kernel, metric, opts)?;
            println!("observed SD of eigenvalue {}: {}", a.component, rep.observed_sd);
            println!("p-value: {}", rep.p_value);
            let mut t = ResultTable::new();
            t.number("simulated_sd", rep.simulated_sds.clone()).number("bandwidth", rep.bandwidths.clone());
            maybe_write(&t, &a.output)
        }
    }
}

fn run_diag(a: &DiagArgs) -> Result<()> {
    let metric = a.data.metric()?;
    let data = a.data.dataset(&a.data.table()?, &a.predictors)?;
    let kernel = resolve_kernel(&a.kernel, &data, metric, None)?;
    log::info!("diag: kernel {} bandwidth {} metric {metric}", kernel.function, kernel.bandwidth);
    let rep = collinearity_diagnostics(&data, &a.predictors, &kernel, metric)?;
    println!("bandwidth: {}", kernel.bandwidth);
    print!("{rep}");
    maybe_write(&io::diagnostics_table(data.points(), a.data.xy(), &rep), &a.output)
}

pub fn execute(cli: &Cli) -> Result<()> {
    log::info!("configuration: {cli:?}");
    match &cli.command {
        Command::Dist(a) => run_dist(a),
        Command::Gwss(a) => run_gwss(a),
        Command::Gwpca(a) => run_gwpca(a),
        Command::Gwr(a) => run_gwr(a),
        Command::GwrMixed(a) => run_mixed(a),
        Command::GwrHetero(a) => run_hetero(a),
        Command::Gwda(a) => run_gwda(a),
        Command::Bw(a) => run_bw(a),
        Command::Mc(a) => run_mc(a),
        Command::Diag(a) => run_diag(a),
    }
}

/// Exit code for an engine error: 3 for numerical failures, 2 otherwise.
pub fn exit_code(err: &GwError) -> i32 {
    if err.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_INPUT
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
