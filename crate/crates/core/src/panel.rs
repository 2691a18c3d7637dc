//! Return panels: daily and monthly simple returns for a set of factor
//! series and a cross-section of assets.
//!
//! A panel holds one calendar month per row. Factor columns come first, in
//! the order the caller declared them (variant definitions take prefixes of
//! that order, so it is meaningful); asset columns follow in lexical order.
//! Daily returns are grouped per month and drive the realized measures.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;

use crate::error::{HeavyError, Result};

/// Calendar month used as the panel's time index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(HeavyError::InvalidParameter {
                name: "month".to_string(),
                message: format!("{month} is not in 1..=12"),
            });
        }
        Ok(YearMonth { year, month })
    }

    pub fn from_date(d: NaiveDate) -> Self {
        YearMonth {
            year: d.year(),
            month: d.month(),
        }
    }

    /// The following calendar month.
    pub fn next(self) -> Self {
        if self.month == 12 {
            YearMonth {
                year: self.year + 1,
                month: 1,
            }
        } else {
            YearMonth {
                year: self.year,
                month: self.month + 1,
            }
        }
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = HeavyError;

    fn from_str(s: &str) -> Result<Self> {
        let err = || HeavyError::InvalidParameter {
            name: "year-month".to_string(),
            message: format!("expected YYYY-MM, got {s:?}"),
        };
        let (y, m) = s.split_once('-').ok_or_else(err)?;
        let year: i32 = y.parse().map_err(|_| err())?;
        let month: u32 = m.parse().map_err(|_| err())?;
        YearMonth::new(year, month)
    }
}

/// Options controlling `load_panel`.
#[derive(Debug, Clone)]
pub struct IngestOptions {
    /// Factor column names, in model order. Every remaining numeric column
    /// of the daily file is treated as an asset.
    pub factor_names: Vec<String>,
    /// Months with fewer daily observations than this are rejected.
    pub min_days_per_month: usize,
    /// When no monthly file is given, compound monthly returns from daily
    /// ones instead of failing.
    pub monthly_from_daily: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            factor_names: Vec::new(),
            min_days_per_month: 5,
            monthly_from_daily: true,
        }
    }
}

/// Aligned monthly and daily simple returns for K factors and N assets.
#[derive(Debug, Clone)]
pub struct ReturnPanel {
    pub months: Vec<YearMonth>,
    pub factor_names: Vec<String>,
    pub asset_names: Vec<String>,
    /// T x (K + N); factor columns first, then assets.
    pub monthly: DMatrix<f64>,
    /// One matrix per month: days x (K + N), same column layout.
    pub daily: Vec<DMatrix<f64>>,
    /// Dates of the daily rows, aligned with `daily`.
    pub daily_dates: Vec<Vec<NaiveDate>>,
}

impl ReturnPanel {
    pub fn n_months(&self) -> usize {
        self.months.len()
    }

    pub fn n_factors(&self) -> usize {
        self.factor_names.len()
    }

    pub fn n_assets(&self) -> usize {
        self.asset_names.len()
    }

    pub fn n_series(&self) -> usize {
        self.n_factors() + self.n_assets()
    }

    /// Monthly factor returns, T x K.
    pub fn factor_returns(&self) -> DMatrix<f64> {
        self.monthly.columns(0, self.n_factors()).into_owned()
    }

    /// Monthly asset returns, T x N.
    pub fn asset_returns(&self) -> DMatrix<f64> {
        self.monthly
            .columns(self.n_factors(), self.n_assets())
            .into_owned()
    }

    /// Builds a panel from already-aligned pieces, validating shapes.
    pub fn from_parts(
        months: Vec<YearMonth>,
        factor_names: Vec<String>,
        asset_names: Vec<String>,
        monthly: DMatrix<f64>,
        daily: Vec<DMatrix<f64>>,
        daily_dates: Vec<Vec<NaiveDate>>,
    ) -> Result<Self> {
        let t = months.len();
        let s = factor_names.len() + asset_names.len();
        if monthly.nrows() != t || monthly.ncols() != s {
            return Err(HeavyError::DimensionMismatch {
                context: "return panel monthly matrix".to_string(),
                expected: format!("{t} x {s}"),
                actual: format!("{} x {}", monthly.nrows(), monthly.ncols()),
            });
        }
        if daily.len() != t || daily_dates.len() != t {
            return Err(HeavyError::DimensionMismatch {
                context: "return panel daily blocks".to_string(),
                expected: format!("{t} months"),
                actual: format!("{} / {}", daily.len(), daily_dates.len()),
            });
        }
        for (idx, block) in daily.iter().enumerate() {
            if block.ncols() != s {
                return Err(HeavyError::DimensionMismatch {
                    context: format!("daily block for {}", months[idx]),
                    expected: format!("{s} columns"),
                    actual: format!("{}", block.ncols()),
                });
            }
            if daily_dates[idx].len() != block.nrows() {
                return Err(HeavyError::DimensionMismatch {
                    context: format!("daily dates for {}", months[idx]),
                    expected: format!("{} rows", block.nrows()),
                    actual: format!("{}", daily_dates[idx].len()),
                });
            }
        }
        for w in months.windows(2) {
            if w[1] <= w[0] {
                return Err(HeavyError::DataQuality(format!(
                    "months out of order: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(ReturnPanel {
            months,
            factor_names,
            asset_names,
            monthly,
            daily,
            daily_dates,
        })
    }

    /// Panel restricted to months `start..end` (row indices).
    pub fn window(&self, start: usize, end: usize) -> Result<ReturnPanel> {
        if start >= end || end > self.n_months() {
            return Err(HeavyError::InvalidParameter {
                name: "window".to_string(),
                message: format!(
                    "range {start}..{end} invalid for {} months",
                    self.n_months()
                ),
            });
        }
        Ok(ReturnPanel {
            months: self.months[start..end].to_vec(),
            factor_names: self.factor_names.clone(),
            asset_names: self.asset_names.clone(),
            monthly: self.monthly.rows(start, end - start).into_owned(),
            daily: self.daily[start..end].to_vec(),
            daily_dates: self.daily_dates[start..end].to_vec(),
        })
    }

    /// Panel keeping only the first `k` factor columns (all assets kept).
    /// Model variants with fewer factors take prefixes of the declared
    /// factor order.
    pub fn with_factor_count(&self, k: usize) -> Result<ReturnPanel> {
        if k == 0 || k > self.n_factors() {
            return Err(HeavyError::Config(format!(
                "variant needs {k} factors but the panel declares {}",
                self.n_factors()
            )));
        }
        let keep: Vec<usize> = (0..k)
            .chain(self.n_factors()..self.n_series())
            .collect();
        let monthly = select_columns(&self.monthly, &keep);
        let daily = self
            .daily
            .iter()
            .map(|block| select_columns(block, &keep))
            .collect();
        Ok(ReturnPanel {
            months: self.months.clone(),
            factor_names: self.factor_names[..k].to_vec(),
            asset_names: self.asset_names.clone(),
            monthly,
            daily,
            daily_dates: self.daily_dates.clone(),
        })
    }
}

fn select_columns(mat: &DMatrix<f64>, idxs: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(mat.nrows(), idxs.len());
    for (new_j, &old_j) in idxs.iter().enumerate() {
        out.set_column(new_j, &mat.column(old_j));
    }
    out
}

/// Loads a panel from a daily returns CSV (`date,<series>,...`, ISO dates)
/// and, optionally, a monthly returns CSV (`date` as `YYYY-MM`). Without a
/// monthly file, monthly returns are compounded from the daily ones when
/// `monthly_from_daily` is set.
pub fn load_panel(
    daily_csv: &Path,
    monthly_csv: Option<&Path>,
    opts: &IngestOptions,
) -> Result<ReturnPanel> {
    if opts.factor_names.is_empty() {
        return Err(HeavyError::Config(
            "at least one factor column must be declared".to_string(),
        ));
    }
    let daily_table = read_csv_table(daily_csv, DateKind::Day)?;
    let (factor_names, asset_names, col_map) =
        split_columns(&daily_table.series_names, &opts.factor_names, daily_csv)?;

    // Group daily rows by calendar month, preserving date order.
    let mut by_month: BTreeMap<YearMonth, Vec<usize>> = BTreeMap::new();
    for (row, date) in daily_table.dates.iter().enumerate() {
        by_month
            .entry(YearMonth::from_date(*date))
            .or_default()
            .push(row);
    }

    let months: Vec<YearMonth> = by_month.keys().cloned().collect();
    let n_series = factor_names.len() + asset_names.len();
    let mut daily = Vec::with_capacity(months.len());
    let mut daily_dates = Vec::with_capacity(months.len());
    for (ym, rows) in &by_month {
        if rows.len() < opts.min_days_per_month {
            return Err(HeavyError::DegenerateMonth {
                month: ym.to_string(),
                message: format!(
                    "{} daily observations, need at least {}",
                    rows.len(),
                    opts.min_days_per_month
                ),
            });
        }
        let mut block = DMatrix::zeros(rows.len(), n_series);
        let mut dates = Vec::with_capacity(rows.len());
        for (i, &row) in rows.iter().enumerate() {
            dates.push(daily_table.dates[row]);
            for (j, &src) in col_map.iter().enumerate() {
                block[(i, j)] = daily_table.values[row][src];
            }
        }
        daily.push(block);
        daily_dates.push(dates);
    }

    let monthly = match monthly_csv {
        Some(path) => {
            let table = read_csv_table(path, DateKind::Month)?;
            let (m_factors, m_assets, m_col_map) =
                split_columns(&table.series_names, &opts.factor_names, path)?;
            if m_factors != factor_names || m_assets != asset_names {
                return Err(HeavyError::Config(format!(
                    "monthly file {} does not cover the same series as the daily file",
                    path.display()
                )));
            }
            let file_months: Vec<YearMonth> = table
                .dates
                .iter()
                .map(|d| YearMonth::from_date(*d))
                .collect();
            if file_months != months {
                return Err(HeavyError::Config(format!(
                    "monthly file {} covers {} months but the daily file implies {}",
                    path.display(),
                    file_months.len(),
                    months.len()
                )));
            }
            let mut mat = DMatrix::zeros(months.len(), n_series);
            for (t, row) in table.values.iter().enumerate() {
                for (j, &src) in m_col_map.iter().enumerate() {
                    mat[(t, j)] = row[src];
                }
            }
            mat
        }
        None => {
            if !opts.monthly_from_daily {
                return Err(HeavyError::Config(
                    "no monthly file given and monthly_from_daily is disabled".to_string(),
                ));
            }
            compound_monthly(&daily)
        }
    };

    ReturnPanel::from_parts(months, factor_names, asset_names, monthly, daily, daily_dates)
}

/// Compounds simple daily returns into monthly ones: prod(1 + r) - 1.
pub fn compound_monthly(daily: &[DMatrix<f64>]) -> DMatrix<f64> {
    let t = daily.len();
    let s = daily.first().map_or(0, |b| b.ncols());
    let mut out = DMatrix::zeros(t, s);
    for (row, block) in daily.iter().enumerate() {
        for j in 0..s {
            let mut gross = 1.0;
            for i in 0..block.nrows() {
                gross *= 1.0 + block[(i, j)];
            }
            out[(row, j)] = gross - 1.0;
        }
    }
    out
}

fn split_columns(
    series_names: &[String],
    factor_names: &[String],
    path: &Path,
) -> Result<(Vec<String>, Vec<String>, Vec<usize>)> {
    let mut factors = Vec::with_capacity(factor_names.len());
    let mut factor_idx = Vec::with_capacity(factor_names.len());
    for name in factor_names {
        match series_names.iter().position(|s| s == name) {
            Some(pos) => {
                factors.push(name.clone());
                factor_idx.push(pos);
            }
            None => {
                return Err(HeavyError::Schema {
                    path: path.to_path_buf(),
                    row: 0,
                    column: name.clone(),
                    message: "declared factor column not found".to_string(),
                })
            }
        }
    }
    let mut assets: Vec<(String, usize)> = series_names
        .iter()
        .enumerate()
        .filter(|(_, s)| !factor_names.contains(s))
        .map(|(i, s)| (s.clone(), i))
        .collect();
    assets.sort_by(|a, b| a.0.cmp(&b.0));
    let asset_names: Vec<String> = assets.iter().map(|(s, _)| s.clone()).collect();
    let mut col_map = factor_idx;
    col_map.extend(assets.iter().map(|(_, i)| *i));
    Ok((factors, asset_names, col_map))
}

enum DateKind {
    Day,
    Month,
}

struct CsvTable {
    series_names: Vec<String>,
    dates: Vec<NaiveDate>,
    values: Vec<Vec<f64>>,
}

fn read_csv_table(path: &Path, kind: DateKind) -> Result<CsvTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| HeavyError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    let headers = reader
        .headers()
        .map_err(|source| HeavyError::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    if headers.is_empty() || headers.get(0) != Some("date") {
        return Err(HeavyError::Schema {
            path: path.to_path_buf(),
            row: 0,
            column: "date".to_string(),
            message: "first column must be named 'date'".to_string(),
        });
    }
    let series_names: Vec<String> = headers.iter().skip(1).map(|s| s.to_string()).collect();
    if series_names.is_empty() {
        return Err(HeavyError::Schema {
            path: path.to_path_buf(),
            row: 0,
            column: "date".to_string(),
            message: "no return columns after the date column".to_string(),
        });
    }
    let mut seen = std::collections::BTreeSet::new();
    for name in &series_names {
        if !seen.insert(name.clone()) {
            return Err(HeavyError::Schema {
                path: path.to_path_buf(),
                row: 0,
                column: name.clone(),
                message: "duplicate column name".to_string(),
            });
        }
    }

    let mut rows: Vec<(NaiveDate, Vec<f64>)> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|source| HeavyError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let row_no = row_idx + 2; // 1-based, counting the header line
        if record.len() != series_names.len() + 1 {
            return Err(HeavyError::Schema {
                path: path.to_path_buf(),
                row: row_no,
                column: String::new(),
                message: format!(
                    "expected {} fields, got {}",
                    series_names.len() + 1,
                    record.len()
                ),
            });
        }
        let date_raw = record.get(0).unwrap_or("");
        let date = match kind {
            DateKind::Day => NaiveDate::parse_from_str(date_raw, "%Y-%m-%d"),
            DateKind::Month => {
                NaiveDate::parse_from_str(&format!("{date_raw}-01"), "%Y-%m-%d")
            }
        }
        .map_err(|e| HeavyError::Schema {
            path: path.to_path_buf(),
            row: row_no,
            column: "date".to_string(),
            message: format!("unparseable date {date_raw:?}: {e}"),
        })?;
        let mut vals = Vec::with_capacity(series_names.len());
        for (j, name) in series_names.iter().enumerate() {
            let raw = record.get(j + 1).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| HeavyError::Schema {
                path: path.to_path_buf(),
                row: row_no,
                column: name.clone(),
                message: format!("unparseable number {raw:?}"),
            })?;
            if !v.is_finite() {
                return Err(HeavyError::Schema {
                    path: path.to_path_buf(),
                    row: row_no,
                    column: name.clone(),
                    message: format!("non-finite value {v}"),
                });
            }
            vals.push(v);
        }
        rows.push((date, vals));
    }
    if rows.is_empty() {
        return Err(HeavyError::DataQuality(format!(
            "{} contains no data rows",
            path.display()
        )));
    }
    rows.sort_by_key(|(d, _)| *d);
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(HeavyError::Schema {
                path: path.to_path_buf(),
                row: 0,
                column: "date".to_string(),
                message: format!("duplicate date {}", w[0].0),
            });
        }
    }
    let (dates, values) = rows.into_iter().unzip();
    Ok(CsvTable {
        series_names,
        dates,
        values,
    })
}
