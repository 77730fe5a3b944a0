//! Command-line front end. The `escare` binary is a thin wrapper around [`run`].

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backtest::{self, McsConfig};
use crate::data::{self, ForecastRecord, ReturnSeries};
use crate::error::{Error, Result};
use crate::forecast::{fit_model, rolling_forecast, Estimator, FitConfig, RollingConfig};
use crate::mcmc::{fit_mcmc, McmcConfig};
use crate::measures::{compute_measures, MeasureConfig, MeasureKind, RangeProxy};
use crate::ml::{fit_ml, MlConfig};
use crate::models::{Family, ModelSpec};
use crate::objective::{fz_loss, quantile_loss_per_day};
use crate::report::{self, ReportConfig, SeriesInput};
use crate::sim::{self, DgpSpec, SimModel};

#[derive(Debug, Parser)]
#[command(name = "escare", version, about = "VaR and ES forecasting with realized expectile models")]
pub struct Cli {
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for replicate-level parallelism (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// JSON file with estimator, bootstrap and report settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, or a file path where a command writes one file.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Simulate replicates from a simulation model.
    Simulate(SimulateArgs),
    /// Compute daily realized measures from intraday bars.
    ComputeMeasures(MeasureArgs),
    /// Estimate a model on one daily series.
    Fit(FitArgs),
    /// Rolling-window one-step VaR/ES forecasts.
    Forecast(ForecastArgs),
    /// Total and per-day loss of a forecast file.
    Score(ScoreArgs),
    /// Coverage and quantile backtests of forecast files.
    Backtest(BacktestArgs),
    /// Model confidence set from a per-day loss table.
    Mcs(McsArgs),
    /// Comparison tables across models and series.
    Report(ReportArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Simulation model: 1 or 2.
    #[arg(long, default_value = "1")]
    pub model: String,
    #[arg(long, default_value_t = 1900)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct MeasureArgs {
    /// rv, rr, scrv, scrr, ssrv or ssrr.
    #[arg(long)]
    pub kind: String,
    /// Intraday CSV with date,timestamp,open,high,low,close.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Sampling interval in minutes.
    #[arg(long, default_value_t = 5)]
    pub interval: u32,
    /// Base bar interval in minutes; inferred from the data when omitted.
    #[arg(long)]
    pub base: Option<u32>,
    /// Scaling lookback in days.
    #[arg(long, default_value_t = 66)]
    pub q: usize,
    /// Daily proxy for scaled range measures: parkinson or squared-range.
    #[arg(long, default_value = "parkinson")]
    pub range_proxy: String,
    /// Write square roots (volatility scale) instead of variances.
    #[arg(long)]
    pub sqrt: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ModelArgs {
    /// Daily CSV (date,close|return[,measures...]).
    #[arg(long)]
    pub data: PathBuf,
    /// care-sav, es-caviar-add, es-caviar-mult, es-care, re-es-care or re-t-es-care.
    #[arg(long)]
    pub model: String,
    /// Measure column used by the realized families.
    #[arg(long)]
    pub measure: Option<String>,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    /// ml or mcmc.
    #[arg(long, default_value = "ml")]
    pub method: String,
    /// Use the shortened sampler schedule.
    #[arg(long)]
    pub desk: bool,
    /// Override the number of ML random starts.
    #[arg(long)]
    pub starts: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Also write the retained sampler iterates to iterates.csv.
    #[arg(long)]
    pub dump_iterates: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// In-sample window length.
    #[arg(long)]
    pub window: usize,
    /// Refit every k steps; 0 fits once.
    #[arg(long, default_value_t = 1)]
    pub refit_every: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    /// fz or quantile.
    #[arg(long)]
    pub loss: String,
    #[arg(long)]
    pub forecasts: PathBuf,
    #[arg(long)]
    pub returns: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct BacktestArgs {
    /// Forecast CSV or a directory of forecast CSVs.
    #[arg(long)]
    pub forecasts: PathBuf,
    #[arg(long)]
    pub returns: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    /// Comma-separated subset of uc,cc,dq1,dq4,vqr.
    #[arg(long, default_value = "uc,cc,dq1,dq4,vqr")]
    pub tests: String,
}

#[derive(Debug, Args, Serialize)]
pub struct McsArgs {
    /// CSV with one loss column per model (an optional leading date column is ignored).
    #[arg(long)]
    pub losses: PathBuf,
    #[arg(long, default_value_t = 0.90)]
    pub level: f64,
    #[arg(long = "B")]
    pub bootstrap: Option<usize>,
    #[arg(long)]
    pub block_len: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Return file per series; repeat for several series.
    #[arg(long, required = true)]
    pub returns: Vec<PathBuf>,
    /// Forecast file or directory per series, paired with --returns by position.
    #[arg(long, required = true)]
    pub forecasts: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    #[arg(long, default_value = "uc,cc,dq1,dq4,vqr")]
    pub tests: String,
}

/// Settings read from `--config`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub fit: FitConfig,
    pub mcs: McsConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                Ok(serde_json::from_str(&text)?)
            }
        }
    }
}

#[derive(Serialize)]
struct ResolvedRun<'a> {
    command: &'a Command,
    seed: u64,
    threads: usize,
    config: &'a RunConfig,
}

/// Parse arguments, run the command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn has_file_extension(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()),
        Some("csv" | "json" | "txt")
    )
}

/// Resolve the output location: `--out` names a file when it has a file
/// extension, otherwise a directory receiving `default_name`.
fn out_file(out: &Path, default_name: &str) -> Result<PathBuf> {
    if has_file_extension(out) {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        Ok(out.to_path_buf())
    } else {
        std::fs::create_dir_all(out)?;
        Ok(out.join(default_name))
    }
}

fn out_dir(out: &Path) -> Result<PathBuf> {
    let dir = if has_file_extension(out) {
        out.parent().map(Path::to_path_buf).unwrap_or_default()
    } else {
        out.to_path_buf()
    };
    if !dir.as_os_str().is_empty() {
        std::fs::create_dir_all(&dir)?;
    }
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(std::fs::File::create(path)?, value)?;
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    let config = RunConfig::load(cli.config.as_deref())?;
    if cli.threads > 0 {
        // Ignore the error raised when a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    let dir = out_dir(&cli.out)?;
    write_json(
        &dir.join("run_config.json"),
        &ResolvedRun {
            command: &cli.command,
            seed: cli.seed,
            threads: cli.threads,
            config: &config,
        },
    )?;
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a),
        Command::ComputeMeasures(a) => measures(cli, a),
        Command::Fit(a) => fit(cli, &config, a),
        Command::Forecast(a) => forecast(cli, &config, a),
        Command::Score(a) => score(cli, a),
        Command::Backtest(a) => backtest_cmd(cli, a),
        Command::Mcs(a) => mcs_cmd(cli, &config, a),
        Command::Report(a) => report_cmd(cli, &config, a),
    }
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let model = SimModel::parse(&a.model)?;
    if a.reps == 0 {
        return Err(Error::invalid("--reps must be at least 1"));
    }
    let dir = out_dir(&cli.out)?;
    (0..a.reps).into_par_iter().try_for_each(|i| {
        let spec = DgpSpec::new(model, a.n, sim::replicate_seed(cli.seed, i));
        let data = sim::simulate(&spec)?;
        sim::write_replicate(&dir, i, &spec, &data, a.alpha)
    })?;
    println!("wrote {} replicate(s) to {}", a.reps, dir.display());
    Ok(())
}

fn measures(cli: &Cli, a: &MeasureArgs) -> Result<()> {
    let kind = MeasureKind::parse(&a.kind)?;
    let days = data::load_intraday(&a.input)?;
    let base = match a.base {
        Some(b) => b,
        None => days
            .first()
            .map(|d| d.bar_interval())
            .ok_or_else(|| Error::InsufficientData("no intraday days".into()))?,
    };
    let mut cfg = MeasureConfig::new(kind, a.interval, base)?;
    cfg.scaling_lookback = a.q;
    cfg.range_proxy = match a.range_proxy.as_str() {
        "parkinson" => RangeProxy::Parkinson,
        "squared-range" => RangeProxy::SquaredRange,
        other => return Err(Error::invalid(format!("unknown range proxy '{other}'"))),
    };
    let mut rows = compute_measures(&days, &cfg)?;
    if a.sqrt {
        rows.iter_mut().for_each(|(_, v)| *v = v.sqrt());
    }
    let path = out_file(&cli.out, &format!("measures_{}.csv", kind.name()))?;
    data::write_dated_column(&path, kind.name(), &rows)?;
    println!("wrote {} days to {}", rows.len(), path.display());
    Ok(())
}

struct Loaded {
    spec: ModelSpec,
    series: ReturnSeries,
    estimator: Estimator,
    fit: FitConfig,
}

fn load_model(cli: &Cli, config: &RunConfig, a: &ModelArgs) -> Result<Loaded> {
    let family = Family::parse(&a.model)?;
    let mut spec = ModelSpec::new(family, a.alpha);
    if family.needs_measure() {
        let id = a
            .measure
            .clone()
            .ok_or_else(|| Error::invalid(format!("{family} requires --measure")))?;
        spec = spec.with_measure(id);
    }
    spec.validate()?;
    let series = data::load_daily(&a.data)?;
    let mut fit = config.fit.clone();
    fit.ml.seed = cli.seed;
    fit.mcmc.seed = cli.seed;
    if let Some(n) = a.starts {
        fit.ml.n_random_starts = n;
    }
    if a.desk {
        fit.mcmc = McmcConfig {
            seed: cli.seed,
            ..McmcConfig::desk()
        };
    }
    Ok(Loaded {
        spec,
        series,
        estimator: Estimator::parse(&a.method)?,
        fit,
    })
}

fn measure_column(spec: &ModelSpec, series: &ReturnSeries) -> Result<Option<Vec<f64>>> {
    match &spec.measure_id {
        Some(id) if spec.family.needs_measure() => Ok(Some(series.measure_values(id, 0..series.len())?)),
        _ => Ok(None),
    }
}

#[derive(Serialize)]
struct FitOutput {
    model: String,
    family: Family,
    alpha: f64,
    method: Estimator,
    n: usize,
    params: std::collections::BTreeMap<String, f64>,
    loglik: Option<f64>,
    ml_loglik: Option<f64>,
    converged: bool,
    acceptance: Vec<f64>,
    epochs: Option<usize>,
}

fn fit(cli: &Cli, config: &RunConfig, a: &FitArgs) -> Result<()> {
    let m = load_model(cli, config, &a.model)?;
    let x = measure_column(&m.spec, &m.series)?;
    let returns = m.series.returns();
    let out = if m.spec.family == Family::CareSav {
        let f = fit_model(&m.spec, returns, x.as_deref(), m.estimator, &m.fit)?;
        FitOutput {
            model: m.spec.label(),
            family: m.spec.family,
            alpha: m.spec.alpha,
            method: Estimator::Ml,
            n: returns.len(),
            params: f.params.named(),
            loglik: None,
            ml_loglik: None,
            converged: f.converged,
            acceptance: Vec::new(),
            epochs: None,
        }
    } else {
        let ml_cfg = MlConfig {
            init: m.fit.init,
            ..m.fit.ml.clone()
        };
        let ml = fit_ml(&m.spec, returns, x.as_deref(), &ml_cfg)?;
        match m.estimator {
            Estimator::Ml => FitOutput {
                model: m.spec.label(),
                family: m.spec.family,
                alpha: m.spec.alpha,
                method: Estimator::Ml,
                n: returns.len(),
                params: ml.params.named(),
                loglik: Some(ml.loglik),
                ml_loglik: Some(ml.loglik),
                converged: ml.converged,
                acceptance: Vec::new(),
                epochs: None,
            },
            Estimator::Mcmc => {
                let post = fit_mcmc(&m.spec, returns, x.as_deref(), &ml.params, &m.fit.mcmc, m.fit.init)?;
                if a.dump_iterates {
                    let path = out_dir(&cli.out)?.join("iterates.csv");
                    let mut w = csv::Writer::from_path(&path)?;
                    w.write_record(m.spec.family.param_names())?;
                    for s in &post.samples {
                        w.write_record(s.iter().map(|v| v.to_string()))?;
                    }
                    w.flush()?;
                }
                let mut lik = crate::objective::Likelihood::new(&m.spec, returns, x.as_deref(), m.fit.init)?;
                FitOutput {
                    model: m.spec.label(),
                    family: m.spec.family,
                    alpha: m.spec.alpha,
                    method: Estimator::Mcmc,
                    n: returns.len(),
                    params: post.params.named(),
                    loglik: Some(lik.loglik(&post.params.values)).filter(|v| v.is_finite()),
                    ml_loglik: Some(ml.loglik),
                    converged: post.converged,
                    acceptance: post.acceptance,
                    epochs: Some(post.epochs),
                }
            }
        }
    };
    let path = out_file(&cli.out, "fit.json")?;
    write_json(&path, &out)?;
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn forecast(cli: &Cli, config: &RunConfig, a: &ForecastArgs) -> Result<()> {
    let m = load_model(cli, config, &a.model)?;
    let rc = RollingConfig {
        window: a.window,
        refit_every: a.refit_every,
        estimator: m.estimator,
        fit: m.fit,
        seed: cli.seed,
    };
    let out = rolling_forecast(&m.spec, &m.series, &rc)?;
    let label = m.spec.label();
    let path = out_file(&cli.out, &format!("forecasts_{label}.csv"))?;
    data::write_forecasts(&path, &out.records)?;
    let dir = out_dir(&cli.out)?;
    write_json(&dir.join(format!("forecast_log_{label}.json")), &(out.refits, &out.failures))?;
    println!(
        "{} forecasts, {} refits, {} failed steps -> {}",
        out.records.len(),
        out.refits,
        out.failures.len(),
        path.display()
    );
    if out.records.is_empty() {
        return Err(Error::Numerical("every forecast step failed".into()));
    }
    Ok(())
}

/// Read one forecast file or every `.csv` file of a directory.
pub fn read_forecast_input(path: &Path) -> Result<Vec<ForecastRecord>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect();
        files.sort();
        let mut all = Vec::new();
        for f in files {
            all.extend(data::read_forecasts(&f)?);
        }
        if all.is_empty() {
            return Err(Error::invalid(format!("no forecasts found in {}", path.display())));
        }
        Ok(all)
    } else {
        data::read_forecasts(path)
    }
}

fn score(cli: &Cli, a: &ScoreArgs) -> Result<()> {
    let returns = data::load_daily(&a.returns)?;
    let forecasts = read_forecast_input(&a.forecasts)?;
    let refs: Vec<&ForecastRecord> = forecasts.iter().collect();
    let aligned = report::align(&returns, &refs)?;
    let per_day = match a.loss.as_str() {
        "quantile" => quantile_loss_per_day(&aligned.returns, &aligned.var, a.alpha)?,
        "fz" => fz_loss(&aligned.returns, &aligned.var, &aligned.es, a.alpha)?
            .per_day
            .expect("per-day losses"),
        other => return Err(Error::invalid(format!("unknown loss '{other}'"))),
    };
    let total: f64 = per_day.iter().sum();
    let rows: Vec<(String, f64)> = aligned.dates.into_iter().zip(per_day).collect();
    let path = out_file(&cli.out, &format!("score_{}.csv", a.loss))?;
    data::write_dated_column(&path, &a.loss, &rows)?;
    println!("{total}");
    Ok(())
}

fn parse_tests(s: &str) -> Vec<String> {
    s.split(',').map(|t| t.trim().to_ascii_lowercase()).filter(|t| !t.is_empty()).collect()
}

#[derive(Serialize)]
struct BacktestOutput {
    model: String,
    m: usize,
    vrate: f64,
    es_rate: f64,
    tests: std::collections::BTreeMap<String, backtest::TestResult>,
}

fn backtest_cmd(cli: &Cli, a: &BacktestArgs) -> Result<()> {
    let returns = data::load_daily(&a.returns)?;
    let forecasts = read_forecast_input(&a.forecasts)?;
    let tests = parse_tests(&a.tests);
    let mut models: Vec<String> = Vec::new();
    for f in &forecasts {
        if !models.contains(&f.model) {
            models.push(f.model.clone());
        }
    }
    let mut out = Vec::new();
    for model in models {
        let refs: Vec<&ForecastRecord> = forecasts.iter().filter(|f| f.model == model).collect();
        let aligned = report::align(&returns, &refs)?;
        let hits = backtest::HitSeries::new(&aligned.returns, &aligned.var, a.alpha)?;
        out.push(BacktestOutput {
            model,
            m: hits.m(),
            vrate: backtest::vrate(&hits),
            es_rate: backtest::es_rate(&aligned.returns, &aligned.es)?,
            tests: report::run_tests(&aligned, a.alpha, &tests)?,
        });
    }
    let path = out_file(&cli.out, "backtest.json")?;
    write_json(&path, &out)?;
    for o in &out {
        let p: Vec<String> = o.tests.iter().map(|(k, v)| format!("{k}={:.4}", v.p_value)).collect();
        println!("{}: m={} vrate={:.4} es_rate={:.4} {}", o.model, o.m, o.vrate, o.es_rate, p.join(" "));
    }
    Ok(())
}

fn mcs_cmd(cli: &Cli, config: &RunConfig, a: &McsArgs) -> Result<()> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(&a.losses)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let skip = usize::from(headers.first().is_some_and(|h| h.eq_ignore_ascii_case("date")));
    let names: Vec<String> = headers[skip..].to_vec();
    let mut columns = vec![Vec::new(); names.len()];
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        for (k, col) in columns.iter_mut().enumerate() {
            let raw = rec.get(k + skip).unwrap_or("");
            col.push(raw.parse::<f64>().map_err(|_| Error::Parse {
                source_name: a.losses.display().to_string(),
                line: line + 2,
                msg: format!("bad loss value '{raw}' for {}", names[k]),
            })?);
        }
    }
    let cfg = McsConfig {
        level: a.level,
        bootstrap: a.bootstrap.unwrap_or(config.mcs.bootstrap),
        block_len: a.block_len.or(config.mcs.block_len),
        seed: cli.seed,
    };
    let res = backtest::mcs(&columns, &cfg)?;
    #[derive(Serialize)]
    struct Row<'a> {
        model: &'a str,
        included: bool,
        p_value: f64,
    }
    let rows: Vec<Row> = names
        .iter()
        .enumerate()
        .map(|(i, n)| Row {
            model: n,
            included: res.included.contains(&i),
            p_value: res.p_values[i],
        })
        .collect();
    let path = out_file(&cli.out, "mcs.json")?;
    write_json(&path, &rows)?;
    for r in &rows {
        println!("{}\t{}\t{:.4}", r.model, if r.included { "in" } else { "out" }, r.p_value);
    }
    Ok(())
}

fn report_cmd(cli: &Cli, config: &RunConfig, a: &ReportArgs) -> Result<()> {
    if a.returns.len() != a.forecasts.len() {
        return Err(Error::invalid("--returns and --forecasts must be given the same number of times"));
    }
    let mut inputs = Vec::new();
    for (r, f) in a.returns.iter().zip(&a.forecasts) {
        let name = r
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "series".into());
        inputs.push(SeriesInput {
            name,
            returns: data::load_daily(r)?,
            forecasts: read_forecast_input(f)?,
        });
    }
    let rc = ReportConfig {
        alpha: a.alpha,
        tests: parse_tests(&a.tests),
        mcs: McsConfig {
            seed: cli.seed,
            ..config.mcs
        },
    };
    let rep = report::build_report(&inputs, &rc)?;
    let dir = out_dir(&cli.out)?;
    report::write_report(&dir, &rep)?;
    report::write_plot_data(&dir.join("plot.csv"), &inputs)?;
    println!("report for {} model(s) over {} series in {}", rep.models.len(), inputs.len(), dir.display());
    Ok(())
}
