//! Configuration-driven orchestration of the full workflow.
//!
//! A single TOML file describes one run: which command to execute, which
//! model variant(s) to use, where the data lives, and every tuning knob
//! with a documented default. Validation reports all problems at once
//! before any work starts. Artifacts land in `output_dir` with a manifest
//! listing them; no output embeds wall-clock time, so reruns with the same
//! configuration and seed are byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::core_model::EstimateOptions;
use crate::error::{HeavyError, Result};
use crate::eval::{
    euclidean_loss, frobenius_loss, model_confidence_set, summarize_track, track_portfolio,
    utility_fee, McsOptions, WeightPolicy,
};
use crate::forecast::{rolling_forecasts, FitOptions, RollingOptions};
use crate::linalg::PD_TOL;
use crate::measures::{asset_realized_covariances, build_measures, summary_stats};
use crate::panel::{load_panel, IngestOptions, ReturnPanel, YearMonth};
use crate::report;
use crate::shrinkage::ShrinkageKind;
use crate::simulate::{baseline_spec, simulate};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Environment variable holding the default directory for relative data
/// paths.
pub const DATA_DIR_ENV: &str = "HDHEAVY_DATA_DIR";

/// Model variants: factor-set prefixes of the declared factor order plus
/// an asymmetry switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Four factors, asymmetric responses.
    FourFactor,
    /// First three factors, asymmetric responses.
    ThreeFactor,
    /// Market factor only, asymmetric responses.
    Market,
    /// Four factors with tied positive/negative responses.
    Symmetric,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "4F" => Ok(Variant::FourFactor),
            "FF" => Ok(Variant::ThreeFactor),
            "M" => Ok(Variant::Market),
            "SYM" => Ok(Variant::Symmetric),
            other => Err(HeavyError::Config(format!(
                "variant: unknown value {other:?}, expected one of 4F, FF, M, SYM"
            ))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::FourFactor => "4F",
            Variant::ThreeFactor => "FF",
            Variant::Market => "M",
            Variant::Symmetric => "SYM",
        }
    }

    pub fn n_factors(self) -> usize {
        match self {
            Variant::FourFactor | Variant::Symmetric => 4,
            Variant::ThreeFactor => 3,
            Variant::Market => 1,
        }
    }

    pub fn asymmetric(self) -> bool {
        !matches!(self, Variant::Symmetric)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Ingest,
    Estimate,
    Forecast,
    Backtest,
    Simulate,
    Evaluate,
}

impl Command {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ingest" => Ok(Command::Ingest),
            "estimate" => Ok(Command::Estimate),
            "forecast" => Ok(Command::Forecast),
            "backtest" => Ok(Command::Backtest),
            "simulate" => Ok(Command::Simulate),
            "evaluate" => Ok(Command::Evaluate),
            other => Err(HeavyError::Config(format!(
                "command: unknown value {other:?}, expected one of \
                 ingest, estimate, forecast, backtest, simulate, evaluate"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub daily_csv: PathBuf,
    /// Optional monthly returns file; when absent, monthly returns are
    /// compounded from the daily file.
    pub monthly_csv: Option<PathBuf>,
    /// Factor columns in model order; the variant takes a prefix.
    pub factor_names: Vec<String>,
    pub min_days_per_month: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            daily_csv: PathBuf::new(),
            monthly_csv: None,
            factor_names: Vec::new(),
            min_days_per_month: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    /// Random multistarts per optimization stage.
    pub starts: usize,
    pub persistence_cap: f64,
    pub min_obs: usize,
    pub shrinkage: ShrinkageKind,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            starts: 5,
            persistence_cap: 0.999,
            min_obs: 60,
            shrinkage: ShrinkageKind::Nonlinear,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    /// Months in each rolling estimation window.
    pub estimation_window: usize,
    /// Refit cadence in months; filters update every month regardless.
    pub reestimate_every: usize,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig {
            estimation_window: 240,
            reestimate_every: 12,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    /// Risk-aversion levels for utility-based switching fees.
    pub gammas: Vec<f64>,
    /// Weight policies: "unconstrained" and/or "long_only".
    pub policies: Vec<String>,
    /// Fee benchmark label; defaults to the first variant.
    pub benchmark: Option<String>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            gammas: vec![1.0, 10.0],
            policies: vec!["unconstrained".to_string(), "long_only".to_string()],
            benchmark: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McsConfig {
    pub block_length: usize,
    pub bootstrap: usize,
    /// Bootstrap seed; derived from the master seed when absent.
    pub seed: Option<u64>,
}

impl Default for McsConfig {
    fn default() -> Self {
        McsConfig {
            block_length: 4,
            bootstrap: 10_000,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub k: usize,
    pub n: usize,
    pub t: usize,
    pub days_per_month: usize,
    pub burn_in: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            k: 2,
            n: 3,
            t: 360,
            days_per_month: 21,
            burn_in: 60,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastInput {
    pub label: String,
    /// Path to an asset covariance forecast CSV written by this tool.
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub forecasts: Vec<ForecastInput>,
}

/// Complete run configuration with defaults for every tuning knob.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub command: String,
    pub variant: String,
    /// Variants compared by `backtest`; defaults to `[variant]`.
    pub variants: Vec<String>,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Worker threads; 0 keeps the library default.
    pub threads: usize,
    pub data: DataConfig,
    pub estimation: EstimationConfig,
    pub forecast: ForecastConfig,
    pub backtest: BacktestConfig,
    pub mcs: McsConfig,
    pub simulate: SimulateConfig,
    pub evaluate: EvaluateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            command: "estimate".to_string(),
            variant: "4F".to_string(),
            variants: Vec::new(),
            output_dir: PathBuf::from("runs/out"),
            seed: 1,
            threads: 0,
            data: DataConfig::default(),
            estimation: EstimationConfig::default(),
            forecast: ForecastConfig::default(),
            backtest: BacktestConfig::default(),
            mcs: McsConfig::default(),
            simulate: SimulateConfig::default(),
            evaluate: EvaluateConfig::default(),
        }
    }
}

impl RunConfig {
    /// Collects every configuration problem; an empty list means the
    /// config is runnable.
    pub fn validation_issues(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            issues.push(format!(
                "schema_version: expected {CONFIG_SCHEMA_VERSION}, got {}",
                self.schema_version
            ));
        }
        let command = match Command::parse(&self.command) {
            Ok(c) => Some(c),
            Err(e) => {
                issues.push(e.to_string());
                None
            }
        };
        if let Err(e) = Variant::parse(&self.variant) {
            issues.push(e.to_string());
        }
        for v in &self.variants {
            if let Err(e) = Variant::parse(v) {
                issues.push(e.to_string());
            }
        }
        {
            let mut labels: Vec<&str> = self.variants.iter().map(|s| s.as_str()).collect();
            labels.sort_unstable();
            labels.dedup();
            if labels.len() != self.variants.len() {
                issues.push("variants: duplicate entries".to_string());
            }
        }
        if self.output_dir.as_os_str().is_empty() {
            issues.push("output_dir: must not be empty".to_string());
        }
        if self.estimation.starts == 0 {
            issues.push("estimation.starts: must be at least 1".to_string());
        }
        if !(self.estimation.persistence_cap > 0.0 && self.estimation.persistence_cap <= 1.0) {
            issues.push("estimation.persistence_cap: must lie in (0, 1]".to_string());
        }
        if self.estimation.min_obs < 2 {
            issues.push("estimation.min_obs: must be at least 2".to_string());
        }
        if self.forecast.estimation_window == 0 {
            issues.push("forecast.estimation_window: must be positive".to_string());
        }
        if self.forecast.reestimate_every == 0 {
            issues.push("forecast.reestimate_every: must be positive".to_string());
        }
        for g in &self.backtest.gammas {
            if !(g.is_finite() && *g > 0.0) {
                issues.push(format!("backtest.gammas: {g} is not a positive finite value"));
            }
        }
        for p in &self.backtest.policies {
            if parse_policy(p).is_err() {
                issues.push(format!(
                    "backtest.policies: unknown value {p:?}, expected unconstrained or long_only"
                ));
            }
        }
        if self.mcs.block_length == 0 {
            issues.push("mcs.block_length: must be positive".to_string());
        }
        if self.mcs.bootstrap == 0 {
            issues.push("mcs.bootstrap: must be positive".to_string());
        }
        if self.simulate.k == 0 || self.simulate.t == 0 {
            issues.push("simulate: k and t must be positive".to_string());
        }
        if self.simulate.days_per_month == 0 || self.simulate.days_per_month > 28 {
            issues.push("simulate.days_per_month: must lie in 1..=28".to_string());
        }

        match command {
            Some(Command::Simulate) | None => {}
            Some(Command::Evaluate) => {
                self.data_issues(&mut issues);
                if self.evaluate.forecasts.is_empty() {
                    issues.push("evaluate.forecasts: at least one input is required".to_string());
                }
                let mut labels: Vec<&str> = self
                    .evaluate
                    .forecasts
                    .iter()
                    .map(|f| f.label.as_str())
                    .collect();
                labels.sort_unstable();
                labels.dedup();
                if labels.len() != self.evaluate.forecasts.len() {
                    issues.push("evaluate.forecasts: duplicate labels".to_string());
                }
            }
            Some(Command::Backtest) => {
                self.data_issues(&mut issues);
                self.factor_issues(&mut issues);
            }
            Some(_) => {
                self.data_issues(&mut issues);
                if !matches!(command, Some(Command::Ingest)) {
                    self.factor_issues(&mut issues);
                }
            }
        }
        issues
    }

    fn data_issues(&self, issues: &mut Vec<String>) {
        if self.data.daily_csv.as_os_str().is_empty() {
            issues.push("data.daily_csv: must be set for this command".to_string());
        }
        if self.data.factor_names.is_empty() {
            issues.push("data.factor_names: at least one factor column is required".to_string());
        }
    }

    fn factor_issues(&self, issues: &mut Vec<String>) {
        let declared = self.data.factor_names.len();
        for v in self.effective_variants() {
            if let Ok(variant) = Variant::parse(&v) {
                if variant.n_factors() > declared {
                    issues.push(format!(
                        "variant {}: needs {} factors but data.factor_names declares {declared}",
                        variant.label(),
                        variant.n_factors()
                    ));
                }
            }
        }
    }

    /// Variant labels a comparison command works through.
    pub fn effective_variants(&self) -> Vec<String> {
        if self.variants.is_empty() {
            vec![self.variant.clone()]
        } else {
            self.variants.clone()
        }
    }

    pub fn mcs_seed(&self) -> u64 {
        self.mcs.seed.unwrap_or_else(|| self.seed.wrapping_add(1009))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| HeavyError::Config(format!("cannot serialize config: {e}")))
    }
}

/// Parses a TOML configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|source| HeavyError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| HeavyError::Config(format!("{}: {e}", path.display())))
}

fn parse_policy(s: &str) -> Result<WeightPolicy> {
    match s {
        "unconstrained" => Ok(WeightPolicy::Unconstrained),
        "long_only" => Ok(WeightPolicy::LongOnly),
        other => Err(HeavyError::Config(format!(
            "policy: unknown value {other:?}"
        ))),
    }
}

/// Resolves a data path against `HDHEAVY_DATA_DIR` when it is relative and
/// the variable is set.
fn resolve_data_path(p: &Path) -> PathBuf {
    if p.is_relative() {
        if let Ok(base) = std::env::var(DATA_DIR_ENV) {
            if !base.is_empty() {
                return Path::new(&base).join(p);
            }
        }
    }
    p.to_path_buf()
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    command: &'a str,
    variants: Vec<String>,
    seed: u64,
    artifacts: &'a [String],
}

/// What a run produced: the output directory and the relative artifact
/// names listed in its manifest.
#[derive(Debug)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub artifacts: Vec<String>,
}

fn init_threads(threads: usize) {
    if threads > 0 {
        // A second initialization in the same process keeps the first pool;
        // results do not depend on the worker count.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

fn load_base_panel(config: &RunConfig) -> Result<ReturnPanel> {
    let opts = IngestOptions {
        factor_names: config.data.factor_names.clone(),
        min_days_per_month: config.data.min_days_per_month,
        monthly_from_daily: true,
    };
    let daily = resolve_data_path(&config.data.daily_csv);
    let monthly = config.data.monthly_csv.as_ref().map(|p| resolve_data_path(p));
    load_panel(&daily, monthly.as_deref(), &opts)
}

fn fit_options(config: &RunConfig, variant: Variant) -> FitOptions {
    FitOptions {
        estimate: EstimateOptions {
            label: variant.label().to_string(),
            starts: config.estimation.starts,
            seed: config.seed,
            asymmetric: variant.asymmetric(),
            pd_tol: PD_TOL,
            persistence_cap: config.estimation.persistence_cap,
            min_obs: config.estimation.min_obs,
        },
        shrinkage: config.estimation.shrinkage,
        nesting_guard: true,
    }
}

fn rolling_options(config: &RunConfig, variant: Variant) -> RollingOptions {
    RollingOptions {
        estimation_window: config.forecast.estimation_window,
        reestimate_every: config.forecast.reestimate_every,
        fit: fit_options(config, variant),
        pd_tol: PD_TOL,
    }
}

/// One labeled out-of-sample forecast sequence entering the comparison.
struct ForecastSet {
    label: String,
    months: Vec<YearMonth>,
    covariances: Vec<DMatrix<f64>>,
}

/// Executes the configured command; artifacts are written under
/// `output_dir` and listed in `manifest.toml`.
pub fn run(config: &RunConfig) -> Result<RunSummary> {
    let issues = config.validation_issues();
    if !issues.is_empty() {
        return Err(HeavyError::Config(format!(
            "{} problem(s): {}",
            issues.len(),
            issues.join("; ")
        )));
    }
    init_threads(config.threads);
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|source| HeavyError::Io {
        path: dir.clone(),
        source,
    })?;

    let command = Command::parse(&config.command).expect("validated above");
    let mut artifacts: Vec<String> = Vec::new();

    match command {
        Command::Ingest => run_ingest(config, &dir, &mut artifacts)?,
        Command::Simulate => run_simulate(config, &dir, &mut artifacts)?,
        Command::Estimate => run_estimate(config, &dir, &mut artifacts)?,
        Command::Forecast => run_forecast(config, &dir, &mut artifacts)?,
        Command::Backtest => run_backtest(config, &dir, &mut artifacts)?,
        Command::Evaluate => run_evaluate(config, &dir, &mut artifacts)?,
    }

    artifacts.sort();
    let manifest = Manifest {
        schema_version: CONFIG_SCHEMA_VERSION,
        command: &config.command,
        variants: config.effective_variants(),
        seed: config.seed,
        artifacts: &artifacts,
    };
    let manifest_path = dir.join("manifest.toml");
    let text = toml::to_string_pretty(&manifest)
        .map_err(|e| HeavyError::Config(format!("cannot serialize manifest: {e}")))?;
    fs::write(&manifest_path, text).map_err(|source| HeavyError::Io {
        path: manifest_path,
        source,
    })?;
    artifacts.push("manifest.toml".to_string());
    artifacts.sort();

    Ok(RunSummary {
        output_dir: dir,
        artifacts,
    })
}

fn run_ingest(config: &RunConfig, dir: &Path, artifacts: &mut Vec<String>) -> Result<()> {
    let panel = load_base_panel(config)?;
    let measures = build_measures(&panel)?;
    let rows = summary_stats(&panel, &measures);
    report::write_summary_csv(&dir.join("summary.csv"), &rows)?;
    artifacts.push("summary.csv".to_string());
    Ok(())
}

fn run_simulate(config: &RunConfig, dir: &Path, artifacts: &mut Vec<String>) -> Result<()> {
    let mut spec = baseline_spec(
        config.simulate.k,
        config.simulate.n,
        config.simulate.t,
        config.seed,
    );
    spec.days_per_month = config.simulate.days_per_month;
    spec.burn_in = config.simulate.burn_in;
    let sim = simulate(&spec)?;
    report::write_panel_csvs(dir, &sim.panel)?;
    artifacts.push("daily.csv".to_string());
    artifacts.push("monthly.csv".to_string());
    Ok(())
}

fn run_estimate(config: &RunConfig, dir: &Path, artifacts: &mut Vec<String>) -> Result<()> {
    let variant = Variant::parse(&config.variant)?;
    let panel = load_base_panel(config)?.with_factor_count(variant.n_factors())?;
    let measures = build_measures(&panel)?;
    let model = crate::forecast::fit_model(&panel, &measures, &fit_options(config, variant))?;

    let label = variant.label();
    let mut records = model.core_report.params.clone();
    for r in &model.asset_reports {
        records.extend(r.params.iter().cloned());
    }
    let params_name = format!("params_{label}.csv");
    report::write_params_csv(&dir.join(&params_name), &records)?;
    artifacts.push(params_name);

    let mut reports: Vec<&crate::core_model::FitReport> = vec![&model.core_report];
    reports.extend(model.asset_reports.iter());
    let fits_name = format!("fit_reports_{label}.csv");
    report::write_fit_reports_csv(&dir.join(&fits_name), &reports)?;
    artifacts.push(fits_name);
    let stages_name = format!("stages_{label}.csv");
    report::write_stages_csv(&dir.join(&stages_name), &reports)?;
    artifacts.push(stages_name);
    let summary_name = format!("model_summary_{label}.csv");
    report::write_model_summary_csv(&dir.join(&summary_name), &model)?;
    artifacts.push(summary_name);
    Ok(())
}

fn forecast_variant(
    config: &RunConfig,
    base: &ReturnPanel,
    variant: Variant,
    dir: &Path,
    artifacts: &mut Vec<String>,
) -> Result<ForecastSet> {
    let panel = base.with_factor_count(variant.n_factors())?;
    let rolling = rolling_forecasts(&panel, &rolling_options(config, variant))?;
    let label = variant.label();

    let asset_name = format!("forecasts_{label}_asset_cov.csv");
    report::write_asset_cov_csv(&dir.join(&asset_name), &rolling.forecasts)?;
    artifacts.push(asset_name);
    let factor_name = format!("forecasts_{label}_factor_cov.csv");
    report::write_factor_cov_csv(&dir.join(&factor_name), &rolling.forecasts)?;
    artifacts.push(factor_name);
    let betas_name = format!("forecasts_{label}_betas.csv");
    report::write_betas_csv(&dir.join(&betas_name), &rolling.forecasts)?;
    artifacts.push(betas_name);
    let refits_name = format!("refits_{label}.csv");
    report::write_months_csv(&dir.join(&refits_name), "refit_month", &rolling.refit_months)?;
    artifacts.push(refits_name);
    let warn_name = format!("warnings_{label}.csv");
    report::write_lines_csv(&dir.join(&warn_name), "warning", &rolling.warnings)?;
    artifacts.push(warn_name);

    Ok(ForecastSet {
        label: label.to_string(),
        months: rolling.forecasts.iter().map(|f| f.month).collect(),
        covariances: rolling.forecasts.into_iter().map(|f| f.asset_cov).collect(),
    })
}

fn run_forecast(config: &RunConfig, dir: &Path, artifacts: &mut Vec<String>) -> Result<()> {
    let variant = Variant::parse(&config.variant)?;
    let base = load_base_panel(config)?;
    forecast_variant(config, &base, variant, dir, artifacts)?;
    Ok(())
}

fn run_backtest(config: &RunConfig, dir: &Path, artifacts: &mut Vec<String>) -> Result<()> {
    let base = load_base_panel(config)?;
    let mut sets = Vec::new();
    for label in config.effective_variants() {
        let variant = Variant::parse(&label)?;
        sets.push(forecast_variant(config, &base, variant, dir, artifacts)?);
    }
    evaluate_sets(config, &base, &sets, dir, artifacts)
}

fn run_evaluate(config: &RunConfig, dir: &Path, artifacts: &mut Vec<String>) -> Result<()> {
    let base = load_base_panel(config)?;
    let mut sets = Vec::new();
    for input in &config.evaluate.forecasts {
        let path = resolve_data_path(&input.path);
        let (months, covariances) = report::read_covariance_csv(&path)?;
        sets.push(ForecastSet {
            label: input.label.clone(),
            months,
            covariances,
        });
    }
    evaluate_sets(config, &base, &sets, dir, artifacts)
}

/// Shared comparison stage: statistical losses with model confidence sets,
/// then portfolio construction with summaries and switching fees.
fn evaluate_sets(
    config: &RunConfig,
    base: &ReturnPanel,
    sets: &[ForecastSet],
    dir: &Path,
    artifacts: &mut Vec<String>,
) -> Result<()> {
    if sets.is_empty() {
        return Err(HeavyError::Config("no forecast sets to evaluate".to_string()));
    }
    let months = &sets[0].months;
    if months.is_empty() {
        return Err(HeavyError::DataQuality(
            "forecast sets contain no months".to_string(),
        ));
    }
    for s in sets {
        if &s.months != months {
            return Err(HeavyError::DataQuality(format!(
                "forecast months of {} do not match those of {}",
                s.label, sets[0].label
            )));
        }
    }

    let index: BTreeMap<YearMonth, usize> = base
        .months
        .iter()
        .enumerate()
        .map(|(i, m)| (*m, i))
        .collect();
    let rows: Vec<usize> = months
        .iter()
        .map(|m| {
            index.get(m).copied().ok_or_else(|| {
                HeavyError::DataQuality(format!("forecast month {m} is not in the panel"))
            })
        })
        .collect::<Result<_>>()?;

    let n = base.n_assets();
    for s in sets {
        for (c, m) in s.covariances.iter().zip(months) {
            if c.nrows() != n {
                return Err(HeavyError::DimensionMismatch {
                    context: format!("forecast of {} at {m}", s.label),
                    expected: format!("{n} x {n}"),
                    actual: format!("{} x {}", c.nrows(), c.ncols()),
                });
            }
        }
    }

    // Realized-covariance proxies and realized returns on the forecast months.
    let proxies_all = asset_realized_covariances(base);
    let asset_returns = base.asset_returns();
    let t_oos = months.len();
    let mut realized = DMatrix::zeros(t_oos, n);
    for (out_row, &src_row) in rows.iter().enumerate() {
        for j in 0..n {
            realized[(out_row, j)] = asset_returns[(src_row, j)];
        }
    }

    let labels: Vec<String> = sets.iter().map(|s| s.label.clone()).collect();
    let mut losses_ed = DMatrix::zeros(t_oos, sets.len());
    let mut losses_fn = DMatrix::zeros(t_oos, sets.len());
    for (c, s) in sets.iter().enumerate() {
        for (t, &src_row) in rows.iter().enumerate() {
            losses_ed[(t, c)] = euclidean_loss(&proxies_all[src_row], &s.covariances[t])?;
            losses_fn[(t, c)] = frobenius_loss(&proxies_all[src_row], &s.covariances[t])?;
        }
    }
    report::write_losses_csv(&dir.join("losses_ed.csv"), months, &labels, &losses_ed)?;
    artifacts.push("losses_ed.csv".to_string());
    report::write_losses_csv(&dir.join("losses_fn.csv"), months, &labels, &losses_fn)?;
    artifacts.push("losses_fn.csv".to_string());

    let mcs_opts = McsOptions {
        block_length: config.mcs.block_length,
        bootstrap: config.mcs.bootstrap,
        seed: config.mcs_seed(),
    };
    let mcs_ed = model_confidence_set(&losses_ed, &mcs_opts)?;
    report::write_mcs_csv(&dir.join("mcs_ed.csv"), &labels, &mcs_ed)?;
    artifacts.push("mcs_ed.csv".to_string());
    let mcs_fn = model_confidence_set(&losses_fn, &mcs_opts)?;
    report::write_mcs_csv(&dir.join("mcs_fn.csv"), &labels, &mcs_fn)?;
    artifacts.push("mcs_fn.csv".to_string());

    // Portfolio comparison.
    let policies: Vec<(String, WeightPolicy)> = config
        .backtest
        .policies
        .iter()
        .map(|p| parse_policy(p).map(|w| (p.clone(), w)))
        .collect::<Result<_>>()?;
    let benchmark_label = config
        .backtest
        .benchmark
        .clone()
        .unwrap_or_else(|| labels[0].clone());
    if !labels.contains(&benchmark_label) {
        return Err(HeavyError::Config(format!(
            "backtest.benchmark {benchmark_label:?} is not among the evaluated labels"
        )));
    }

    let mut summary_rows = Vec::new();
    let mut fee_rows = Vec::new();
    for (policy_name, policy) in &policies {
        let mut tracks = Vec::new();
        for s in sets {
            let track = track_portfolio(months, &s.covariances, &realized, *policy)?;
            let file = format!("portfolio_{}_{policy_name}.csv", s.label);
            report::write_portfolio_csv(&dir.join(&file), &track)?;
            artifacts.push(file);
            summary_rows.push((s.label.clone(), policy_name.clone(), summarize_track(&track)));
            tracks.push(track);
        }
        let bench_idx = labels
            .iter()
            .position(|l| l == &benchmark_label)
            .expect("membership checked above");
        for (i, s) in sets.iter().enumerate() {
            if i == bench_idx {
                continue;
            }
            for &gamma in &config.backtest.gammas {
                let fee = utility_fee(&tracks[bench_idx].returns, &tracks[i].returns, gamma)?;
                fee_rows.push(report::FeeRow {
                    benchmark: benchmark_label.clone(),
                    candidate: s.label.clone(),
                    policy: policy_name.clone(),
                    gamma,
                    fee_monthly: fee,
                });
            }
        }
    }
    report::write_portfolio_summary_csv(&dir.join("portfolio_summary.csv"), &summary_rows)?;
    artifacts.push("portfolio_summary.csv".to_string());
    report::write_fees_csv(&dir.join("fees.csv"), &fee_rows)?;
    artifacts.push("fees.csv".to_string());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_serializes_and_parses_back() {
        let config = RunConfig::default();
        let text = config.to_toml_string().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.command, config.command);
        assert_eq!(back.estimation.starts, config.estimation.starts);
        assert_eq!(back.mcs.bootstrap, config.mcs.bootstrap);
    }

    #[test]
    fn validation_collects_every_problem_at_once() {
        let mut config = RunConfig::default();
        config.command = "estimte".to_string();
        config.variant = "5F".to_string();
        config.estimation.starts = 0;
        config.mcs.bootstrap = 0;
        let issues = config.validation_issues();
        assert!(issues.len() >= 4, "expected all problems listed, got {issues:?}");
        assert!(issues.iter().any(|s| s.contains("command")));
        assert!(issues.iter().any(|s| s.contains("variant")));
        assert!(issues.iter().any(|s| s.contains("starts")));
        assert!(issues.iter().any(|s| s.contains("bootstrap")));
    }

    #[test]
    fn unknown_variant_is_named_in_the_error() {
        let err = Variant::parse("XX").unwrap_err();
        assert!(err.to_string().contains("XX"));
    }

    #[test]
    fn variant_factor_counts_and_asymmetry() {
        assert_eq!(Variant::FourFactor.n_factors(), 4);
        assert_eq!(Variant::ThreeFactor.n_factors(), 3);
        assert_eq!(Variant::Market.n_factors(), 1);
        assert_eq!(Variant::Symmetric.n_factors(), 4);
        assert!(Variant::FourFactor.asymmetric());
        assert!(!Variant::Symmetric.asymmetric());
    }

    #[test]
    fn estimate_requires_enough_declared_factors() {
        let mut config = RunConfig::default();
        config.command = "estimate".to_string();
        config.variant = "4F".to_string();
        config.data.daily_csv = PathBuf::from("daily.csv");
        config.data.factor_names = vec!["mkt".to_string()];
        let issues = config.validation_issues();
        assert!(issues.iter().any(|s| s.contains("needs 4 factors")));
    }

    #[test]
    fn simulate_needs_no_data_section() {
        let mut config = RunConfig::default();
        config.command = "simulate".to_string();
        config.output_dir = PathBuf::from("runs/sim");
        assert!(config.validation_issues().is_empty());
    }
}
