//! Deterministic artifact writers and readers.
//!
//! Every writer formats floating-point values with Rust's shortest
//! round-trip representation and iterates rows in a fixed order, so a rerun
//! with identical inputs produces byte-identical files. Nothing here writes
//! wall-clock timestamps. Matrix-valued artifacts store the lower triangle
//! (row >= col) with integer indices; readers mirror the triangle back into
//! a full symmetric matrix.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::core_model::{FitReport, ParamRecord};
use crate::error::{HeavyError, Result};
use crate::eval::{McsResult, PortfolioSummary, PortfolioTrack};
use crate::forecast::CovarianceForecast;
use crate::measures::SeriesSummary;
use crate::panel::{ReturnPanel, YearMonth};

fn open_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|source| HeavyError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
    }
    csv::Writer::from_path(path).map_err(|source| HeavyError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> HeavyError + '_ {
    move |source| HeavyError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Shortest round-trip decimal form; `f64::from_str` recovers the exact
/// bits.
fn fmt(value: f64) -> String {
    format!("{value}")
}

/// Writes parameter records as `name,series,value,lower,upper`.
pub fn write_params_csv(path: &Path, records: &[ParamRecord]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(["name", "series", "value", "lower", "upper"])
        .map_err(csv_err(path))?;
    for r in records {
        w.write_record([
            r.name.as_str(),
            r.series.as_str(),
            &fmt(r.value),
            &fmt(r.lower),
            &fmt(r.upper),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| HeavyError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One row per fit: label, log likelihood, parameter count, observation
/// count, information criteria, convergence flag.
pub fn write_fit_reports_csv(path: &Path, reports: &[&FitReport]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(["label", "llf", "n_params", "n_obs", "aic", "bic", "converged"])
        .map_err(csv_err(path))?;
    for r in reports {
        w.write_record([
            r.label.as_str(),
            &fmt(r.llf),
            &r.n_params.to_string(),
            &r.n_obs.to_string(),
            &fmt(r.aic),
            &fmt(r.bic),
            &r.converged.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| HeavyError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One row per estimation stage across all fits.
pub fn write_stages_csv(path: &Path, reports: &[&FitReport]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(["label", "stage", "llf", "evaluations", "converged"])
        .map_err(csv_err(path))?;
    for r in reports {
        for s in &r.stages {
            w.write_record([
                r.label.as_str(),
                s.name.as_str(),
                &fmt(s.llf),
                &s.evaluations.to_string(),
                &s.converged.to_string(),
            ])
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(|source| HeavyError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Per-series sample moments (scaled as stored, already annualized by the
/// caller if desired).
pub fn write_summary_csv(path: &Path, rows: &[SeriesSummary]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record([
        "series",
        "is_factor",
        "mean_return",
        "mean_realized_variance",
        "mean_semivariance_pos",
        "mean_semivariance_neg",
        "mean_squared_return",
    ])
    .map_err(csv_err(path))?;
    for r in rows {
        w.write_record([
            r.series.as_str(),
            &r.is_factor.to_string(),
            &fmt(r.mean_return),
            &fmt(r.mean_realized_variance),
            &fmt(r.mean_semivariance_pos),
            &fmt(r.mean_semivariance_neg),
            &fmt(r.mean_squared_return),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| HeavyError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_symmetric_series(
    path: &Path,
    months: &[YearMonth],
    matrices: &[&DMatrix<f64>],
) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(["month", "i", "j", "value"]).map_err(csv_err(path))?;
    for (m, mat) in months.iter().zip(matrices) {
        let month = m.to_string();
        for i in 0..mat.nrows() {
            for j in 0..=i {
                w.write_record([
                    month.as_str(),
                    &i.to_string(),
                    &j.to_string(),
                    &fmt(mat[(i, j)]),
                ])
                .map_err(csv_err(path))?;
            }
        }
    }
    w.flush().map_err(|source| HeavyError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Forecast asset covariance matrices, lower triangle per month.
pub fn write_asset_cov_csv(path: &Path, forecasts: &[CovarianceForecast]) -> Result<()> {
    let months: Vec<YearMonth> = forecasts.iter().map(|f| f.month).collect();
    let mats: Vec<&DMatrix<f64>> = forecasts.iter().map(|f| &f.asset_cov).collect();
    write_symmetric_series(path, &months, &mats)
}

/// Forecast factor covariance matrices, lower triangle per month.
pub fn write_factor_cov_csv(path: &Path, forecasts: &[CovarianceForecast]) -> Result<()> {
    let months: Vec<YearMonth> = forecasts.iter().map(|f| f.month).collect();
    let mats: Vec<&DMatrix<f64>> = forecasts.iter().map(|f| &f.factor_cov).collect();
    write_symmetric_series(path, &months, &mats)
}

/// Forecast factor loadings as `month,asset,factor,value`.
pub fn write_betas_csv(path: &Path, forecasts: &[CovarianceForecast]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(["month", "asset", "factor", "value"])
        .map_err(csv_err(path))?;
    for f in forecasts {
        let month = f.month.to_string();
        for i in 0..f.beta.nrows() {
            for k in 0..f.beta.ncols() {
                w.write_record([
                    month.as_str(),
                    &i.to_string(),
                    &k.to_string(),
                    &fmt(f.beta[(i, k)]),
                ])
                .map_err(csv_err(path))?;
            }
        }
    }
    w.flush().map_err(|source| HeavyError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a symmetric-matrix series written by the covariance writers.
/// Returns months in file order with fully mirrored matrices.
pub fn read_covariance_csv(path: &Path) -> Result<(Vec<YearMonth>, Vec<DMatrix<f64>>)> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut months: Vec<YearMonth> = Vec::new();
    let mut cells: Vec<Vec<(usize, usize, f64)>> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        let parse = |col: usize, name: &str| -> Result<&str> {
            record.get(col).ok_or_else(|| HeavyError::Schema {
                path: path.to_path_buf(),
                row: row_idx + 2,
                column: name.to_string(),
                message: "missing field".to_string(),
            })
        };
        let month: YearMonth = parse(0, "month")?.parse().map_err(|e: HeavyError| e)?;
        let i: usize = parse(1, "i")?.parse().map_err(|_| HeavyError::Schema {
            path: path.to_path_buf(),
            row: row_idx + 2,
            column: "i".to_string(),
            message: "not an index".to_string(),
        })?;
        let j: usize = parse(2, "j")?.parse().map_err(|_| HeavyError::Schema {
            path: path.to_path_buf(),
            row: row_idx + 2,
            column: "j".to_string(),
            message: "not an index".to_string(),
        })?;
        let value: f64 = parse(3, "value")?.parse().map_err(|_| HeavyError::Schema {
            path: path.to_path_buf(),
            row: row_idx + 2,
            column: "value".to_string(),
            message: "not a number".to_string(),
        })?;
        if months.last() != Some(&month) {
            months.push(month);
            cells.push(Vec::new());
        }
        cells.last_mut().expect("pushed above").push((i, j, value));
    }
    let mut matrices = Vec::with_capacity(months.len());
    for (m, entries) in months.iter().zip(cells) {
        let dim = entries
            .iter()
            .map(|&(i, j, _)| i.max(j) + 1)
            .max()
            .unwrap_or(0);
        let mut mat = DMatrix::zeros(dim, dim);
        for (i, j, v) in entries {
            mat[(i, j)] = v;
            mat[(j, i)] = v;
        }
        if mat.nrows() == 0 {
            return Err(HeavyError::DataQuality(format!(
                "covariance file {path:?} has an empty block for {m}"
            )));
        }
        matrices.push(mat);
    }
    Ok((months, matrices))
}

/// Loss panel: one row per month, one column per model label.
pub fn write_losses_csv(
    path: &Path,
    months: &[YearMonth],
    labels: &[String],
    losses: &DMatrix<f64>,
) -> Result<()> {
    if losses.nrows() != months.len() || losses.ncols() != labels.len() {
        return Err(HeavyError::DimensionMismatch {
            context: "loss panel".to_string(),
            expected: format!("{} x {}", months.len(), labels.len()),
            actual: format!("{} x {}", losses.nrows(), losses.ncols()),
        });
    }
    let mut w = open_writer(path)?;
    let mut header = vec!["month".to_string()];
    header.extend(labels.iter().cloned());
    w.write_record(&header).map_err(csv_err(path))?;
    for (t, m) in months.iter().enumerate() {
        let mut row = vec![m.to_string()];
        for c in 0..labels.len() {
            row.push(fmt(losses[(t, c)]));
        }
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| HeavyError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a loss panel back as (months, labels, T x M matrix).
pub fn read_losses_csv(path: &Path) -> Result<(Vec<YearMonth>, Vec<String>, DMatrix<f64>)> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let labels: Vec<String> = reader
        .headers()
        .map_err(csv_err(path))?
        .iter()
        .skip(1)
        .map(|s| s.to_string())
        .collect();
    let mut months = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        let month: YearMonth = record
            .get(0)
            .ok_or_else(|| HeavyError::Schema {
                path: path.to_path_buf(),
                row: row_idx + 2,
                column: "month".to_string(),
                message: "missing field".to_string(),
            })?
            .parse()?;
        months.push(month);
        for c in 0..labels.len() {
            let cell = record.get(c + 1).ok_or_else(|| HeavyError::Schema {
                path: path.to_path_buf(),
                row: row_idx + 2,
                column: labels[c].clone(),
                message: "missing field".to_string(),
            })?;
            values.push(cell.parse().map_err(|_| HeavyError::Schema {
                path: path.to_path_buf(),
                row: row_idx + 2,
                column: labels[c].clone(),
                message: "not a number".to_string(),
            })?);
        }
    }
    let t = months.len();
    let m = labels.len();
    Ok((months, labels, DMatrix::from_row_slice(t, m, &values)))
}

/// Model confidence set outcome: per-model p-value and elimination rank
/// (0 = eliminated first; surviving models get the highest ranks).
pub fn write_mcs_csv(path: &Path, labels: &[String], result: &McsResult) -> Result<()> {
    let mut rank = vec![0usize; labels.len()];
    for (order, &model) in result.elimination_order.iter().enumerate() {
        rank[model] = order;
    }
    let mut w = open_writer(path)?;
    w.write_record(["label", "p_value", "elimination_rank"])
        .map_err(csv_err(path))?;
    for (i, label) in labels.iter().enumerate() {
        w.write_record([label.as_str(), &fmt(result.p_values[i]), &rank[i].to_string()])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| HeavyError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Month-by-month portfolio track.
pub fn write_portfolio_csv(path: &Path, track: &PortfolioTrack) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(["month", "return", "turnover", "short_proportion"])
        .map_err(csv_err(path))?;
    for t in 0..track.months.len() {
        w.write_record([
            track.months[t].to_string().as_str(),
            &fmt(track.returns[t]),
            &fmt(track.turnover[t]),
            &fmt(track.short_proportion[t]),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| HeavyError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Aggregated portfolio diagnostics, one row per (label, policy).
pub fn write_portfolio_summary_csv(
    path: &Path,
    rows: &[(String, String, PortfolioSummary)],
) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record([
        "label",
        "policy",
        "annualized_return",
        "annualized_sd",
        "information_ratio",
        "mean_turnover",
        "mean_short_proportion",
    ])
    .map_err(csv_err(path))?;
    for (label, policy, s) in rows {
        w.write_record([
            label.as_str(),
            policy.as_str(),
            &fmt(s.annualized_return),
            &fmt(s.annualized_sd),
            &fmt(s.information_ratio),
            &fmt(s.mean_turnover),
            &fmt(s.mean_short_proportion),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| HeavyError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// A utility-based switching fee between a benchmark and a candidate
/// strategy: the monthly fee and its annualized basis-point equivalent.
#[derive(Debug, Clone)]
pub struct FeeRow {
    pub benchmark: String,
    pub candidate: String,
    pub policy: String,
    pub gamma: f64,
    pub fee_monthly: f64,
}

impl FeeRow {
    pub fn fee_annual_bp(&self) -> f64 {
        self.fee_monthly * 12.0 * 10_000.0
    }
}

pub fn write_fees_csv(path: &Path, rows: &[FeeRow]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record([
        "benchmark",
        "candidate",
        "policy",
        "gamma",
        "fee_monthly",
        "fee_annual_bp",
    ])
    .map_err(csv_err(path))?;
    for r in rows {
        w.write_record([
            r.benchmark.as_str(),
            r.candidate.as_str(),
            r.policy.as_str(),
            &fmt(r.gamma),
            &fmt(r.fee_monthly),
            &fmt(r.fee_annual_bp()),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| HeavyError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One-row overview of a fitted model across all of its stages.
pub fn write_model_summary_csv(path: &Path, model: &crate::forecast::FittedModel) -> Result<()> {
    let n_params: usize = model.core_report.n_params
        + model.asset_reports.iter().map(|r| r.n_params).sum::<usize>();
    let mut w = open_writer(path)?;
    w.write_record([
        "label",
        "n_factors",
        "n_assets",
        "total_llf",
        "n_params",
        "asymmetric",
        "nesting_fallback",
    ])
    .map_err(csv_err(path))?;
    w.write_record([
        model.label.as_str(),
        &model.n_factors().to_string(),
        &model.n_assets().to_string(),
        &fmt(model.total_llf),
        &n_params.to_string(),
        &model.asymmetric.to_string(),
        &model.nesting_fallback.to_string(),
    ])
    .map_err(csv_err(path))?;
    w.flush().map_err(|source| HeavyError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Single-column CSV listing months (used for refit schedules).
pub fn write_months_csv(path: &Path, header: &str, months: &[YearMonth]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record([header]).map_err(csv_err(path))?;
    for m in months {
        w.write_record([m.to_string().as_str()]).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| HeavyError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Single-column CSV of free-form lines (used for rolling warnings); the
/// file is written even when empty so artifact sets stay fixed.
pub fn write_lines_csv(path: &Path, header: &str, lines: &[String]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record([header]).map_err(csv_err(path))?;
    for line in lines {
        w.write_record([line.as_str()]).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| HeavyError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes a panel as `daily.csv` and `monthly.csv` in the schema the
/// ingestion loader reads (date column plus one column per series, factor
/// columns first).
pub fn write_panel_csvs(dir: &Path, panel: &ReturnPanel) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| HeavyError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let series: Vec<&str> = panel
        .factor_names
        .iter()
        .chain(panel.asset_names.iter())
        .map(|s| s.as_str())
        .collect();

    let daily_path = dir.join("daily.csv");
    let mut w = open_writer(&daily_path)?;
    let mut header = vec!["date"];
    header.extend(series.iter().copied());
    w.write_record(&header).map_err(csv_err(&daily_path))?;
    for (block, dates) in panel.daily.iter().zip(&panel.daily_dates) {
        for (row, date) in dates.iter().enumerate() {
            let mut rec = vec![date.format("%Y-%m-%d").to_string()];
            for c in 0..block.ncols() {
                rec.push(fmt(block[(row, c)]));
            }
            w.write_record(&rec).map_err(csv_err(&daily_path))?;
        }
    }
    w.flush().map_err(|source| HeavyError::Io {
        path: daily_path.clone(),
        source,
    })?;

    let monthly_path = dir.join("monthly.csv");
    let mut w = open_writer(&monthly_path)?;
    let mut header = vec!["date"];
    header.extend(series.iter().copied());
    w.write_record(&header).map_err(csv_err(&monthly_path))?;
    for (t, month) in panel.months.iter().enumerate() {
        let mut rec = vec![month.to_string()];
        for c in 0..panel.monthly.ncols() {
            rec.push(fmt(panel.monthly[(t, c)]));
        }
        w.write_record(&rec).map_err(csv_err(&monthly_path))?;
    }
    w.flush().map_err(|source| HeavyError::Io {
        path: monthly_path,
        source,
    })
}
