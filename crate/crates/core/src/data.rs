//! Daily and intraday market data, percent log-returns and rolling windows.
//!
//! Dates are treated as opaque, ordered labels (ISO-8601 strings sort
//! correctly); no calendar or timezone logic is applied.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which prices a daily return is measured between.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReturnConvention {
    #[default]
    CloseToClose,
    /// Requires an `open` column in the daily file.
    OpenToClose,
}

/// Daily percent log-returns with aligned dates and optional realized measures.
///
/// A measure value of `None` marks a day whose intraday data was missing; such
/// days keep their return but cannot be used by models that need `X_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    dates: Vec<String>,
    returns: Vec<f64>,
    measures: BTreeMap<String, Vec<Option<f64>>>,
}

impl ReturnSeries {
    pub fn new(dates: Vec<String>, returns: Vec<f64>) -> Result<Self> {
        if dates.len() != returns.len() {
            return Err(Error::invalid(format!(
                "{} dates but {} returns",
                dates.len(),
                returns.len()
            )));
        }
        check_monotone(&dates)?;
        if let Some(i) = returns.iter().position(|r| !r.is_finite()) {
            return Err(Error::invalid(format!("non-finite return on {}", dates[i])));
        }
        Ok(Self {
            dates,
            returns,
            measures: BTreeMap::new(),
        })
    }

    /// Series with synthetic labels `d0000, d0001, ...`.
    pub fn from_returns(returns: Vec<f64>) -> Result<Self> {
        let dates = (0..returns.len()).map(|i| format!("d{i:06}")).collect();
        Self::new(dates, returns)
    }

    /// Attach a measure column aligned one-to-one with the dates.
    pub fn with_measure(mut self, name: &str, values: Vec<Option<f64>>) -> Result<Self> {
        self.insert_measure(name, values)?;
        Ok(self)
    }

    pub fn insert_measure(&mut self, name: &str, values: Vec<Option<f64>>) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::invalid(format!(
                "measure '{name}' has {} values for {} days",
                values.len(),
                self.len()
            )));
        }
        if let Some(i) = values
            .iter()
            .position(|v| matches!(v, Some(x) if !(x.is_finite() && *x > 0.0)))
        {
            return Err(Error::invalid(format!(
                "measure '{name}' must be strictly positive (day {})",
                self.dates[i]
            )));
        }
        self.measures.insert(name.to_string(), values);
        Ok(())
    }

    /// Merge a dated measure column; dates missing from `values` become absent.
    pub fn attach_measure_by_date(&mut self, name: &str, values: &[(String, f64)]) -> Result<()> {
        let lookup: BTreeMap<&str, f64> = values.iter().map(|(d, v)| (d.as_str(), *v)).collect();
        let aligned = self
            .dates
            .iter()
            .map(|d| lookup.get(d.as_str()).copied())
            .collect();
        self.insert_measure(name, aligned)
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    pub fn measure_names(&self) -> impl Iterator<Item = &str> {
        self.measures.keys().map(String::as_str)
    }

    pub fn measure(&self, name: &str) -> Option<&[Option<f64>]> {
        self.measures.get(name).map(Vec::as_slice)
    }

    /// Measure values over `range`, failing if the column is missing or any day is absent.
    pub fn measure_values(&self, name: &str, range: Range<usize>) -> Result<Vec<f64>> {
        let column = self
            .measure(name)
            .ok_or_else(|| Error::invalid(format!("series has no measure '{name}'")))?;
        column[range.clone()]
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| {
                    Error::InsufficientData(format!(
                        "measure '{name}' absent on {}",
                        self.dates[range.start + i]
                    ))
                })
            })
            .collect()
    }
}

fn check_monotone(dates: &[String]) -> Result<()> {
    for pair in dates.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::NonMonotoneDates {
                prev: pair[0].clone(),
                next: pair[1].clone(),
            });
        }
    }
    Ok(())
}

/// Percent (or plain) log-returns of consecutive prices.
pub fn compute_returns(closes: &[f64], percent: bool) -> Result<Vec<f64>> {
    if closes.len() < 2 {
        return Err(Error::InsufficientData(
            "at least two prices are needed to form a return".into(),
        ));
    }
    if let Some(p) = closes.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        return Err(Error::invalid(format!("non-positive price {p}")));
    }
    let scale = if percent { 100.0 } else { 1.0 };
    Ok(closes
        .windows(2)
        .map(|w| scale * (w[1] / w[0]).ln())
        .collect())
}

fn parse_f64(source: &str, line: usize, field: &str, raw: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| Error::Parse {
        source_name: source.to_string(),
        line,
        msg: format!("cannot parse {field} value '{raw}'"),
    })
}

/// Load a daily CSV with header `date,close[,measure...]`.
///
/// Returns are close-to-close percent log-returns, so the series is one day
/// shorter than the file; measure columns are aligned with the return days.
/// A file whose second column is `return` is taken as already holding percent
/// returns. Empty measure cells mark the measure absent for that day.
pub fn load_daily(path: impl AsRef<Path>) -> Result<ReturnSeries> {
    load_daily_with(path, ReturnConvention::CloseToClose)
}

pub fn load_daily_with(path: impl AsRef<Path>, convention: ReturnConvention) -> Result<ReturnSeries> {
    let path = path.as_ref();
    let source = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    parse_daily(&source, headers, reader.records(), convention)
}

fn parse_daily<I>(
    source: &str,
    headers: Vec<String>,
    records: I,
    convention: ReturnConvention,
) -> Result<ReturnSeries>
where
    I: Iterator<Item = std::result::Result<csv::StringRecord, csv::Error>>,
{
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let date_col = col("date").ok_or_else(|| Error::Parse {
        source_name: source.into(),
        line: 1,
        msg: "missing 'date' column".into(),
    })?;
    let return_col = col("return");
    let close_col = col("close");
    let open_col = col("open");
    if return_col.is_none() && close_col.is_none() {
        return Err(Error::Parse {
            source_name: source.into(),
            line: 1,
            msg: "expected a 'close' or 'return' column".into(),
        });
    }
    if convention == ReturnConvention::OpenToClose && open_col.is_none() && return_col.is_none() {
        return Err(Error::Parse {
            source_name: source.into(),
            line: 1,
            msg: "open-to-close returns need an 'open' column".into(),
        });
    }
    let price_cols = [Some(date_col), return_col, close_col, open_col];
    let measure_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| !price_cols.contains(&Some(*i)))
        .map(|(i, h)| (i, h.clone()))
        .collect();

    let mut dates = Vec::new();
    let mut primary = Vec::new();
    let mut opens = Vec::new();
    let mut measures: Vec<Vec<Option<f64>>> = vec![Vec::new(); measure_cols.len()];
    for (idx, rec) in records.enumerate() {
        let line = idx + 2;
        let rec = rec?;
        let field = |c: usize| rec.get(c).unwrap_or("").trim();
        let date = field(date_col);
        if date.is_empty() {
            return Err(Error::Parse {
                source_name: source.into(),
                line,
                msg: "missing date".into(),
            });
        }
        let main_col = return_col.or(close_col).expect("checked above");
        let raw = field(main_col);
        if raw.is_empty() {
            return Err(Error::Parse {
                source_name: source.into(),
                line,
                msg: format!("missing {}", headers[main_col]),
            });
        }
        primary.push(parse_f64(source, line, &headers[main_col], raw)?);
        if let Some(c) = open_col {
            opens.push(parse_f64(source, line, "open", field(c))?);
        }
        for (k, (c, name)) in measure_cols.iter().enumerate() {
            let raw = field(*c);
            measures[k].push(if raw.is_empty() {
                None
            } else {
                Some(parse_f64(source, line, name, raw)?)
            });
        }
        dates.push(date.to_string());
    }
    check_monotone(&dates)?;

    let (dates, returns, skip) = if return_col.is_some() {
        (dates, primary, 0)
    } else if convention == ReturnConvention::OpenToClose {
        let returns = opens
            .iter()
            .zip(&primary)
            .map(|(o, c)| compute_returns(&[*o, *c], true).map(|r| r[0]))
            .collect::<Result<Vec<_>>>()?;
        (dates, returns, 0)
    } else {
        let returns = compute_returns(&primary, true)?;
        (dates[1..].to_vec(), returns, 1)
    };
    let mut series = ReturnSeries::new(dates, returns)?;
    for ((_, name), values) in measure_cols.iter().zip(measures) {
        series.insert_measure(name, values[skip..].to_vec())?;
    }
    Ok(series)
}

/// Parse daily data from an in-memory CSV string (same format as [`load_daily`]).
pub fn parse_daily_str(text: &str) -> Result<ReturnSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    parse_daily("<memory>", headers, reader.records(), ReturnConvention::CloseToClose)
}

/// Write a series as `date,return[,measure...]`.
pub fn write_daily_returns(path: impl AsRef<Path>, series: &ReturnSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let names: Vec<&str> = series.measure_names().collect();
    let mut header = vec!["date", "return"];
    header.extend(&names);
    w.write_record(&header)?;
    for (i, (d, r)) in series.dates().iter().zip(series.returns()).enumerate() {
        let mut row = vec![d.clone(), r.to_string()];
        for n in &names {
            row.push(series.measure(n).unwrap()[i].map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Fixed-size rolling estimation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollingWindow {
    pub in_sample: usize,
    /// Index of the window; the in-sample slice starts at this day.
    pub step: usize,
}

/// In-sample range and the (possibly out-of-data) forecast day for a window.
///
/// The forecast day is `step + in_sample`; it equals the series length for the
/// last admissible window, i.e. a genuine out-of-sample forecast.
pub fn window(series_len: usize, w: RollingWindow) -> Result<(Range<usize>, usize)> {
    if w.in_sample < 2 {
        return Err(Error::invalid("in-sample size must be at least 2"));
    }
    if w.step + w.in_sample > series_len {
        return Err(Error::invalid(format!(
            "window step {} with size {} exceeds series length {series_len}",
            w.step, w.in_sample
        )));
    }
    let range = w.step..w.step + w.in_sample;
    Ok((range.clone(), range.end))
}

/// One intraday bar; `minute` is minutes since midnight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bar {
    pub minute: u32,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

/// High-frequency OHLC bars for one trading day.
#[derive(Debug, Clone, PartialEq)]
pub struct IntradayBars {
    date: String,
    bars: Vec<Bar>,
    bar_interval: u32,
}

impl IntradayBars {
    pub fn new(date: impl Into<String>, bars: Vec<Bar>, bar_interval: u32) -> Result<Self> {
        let date = date.into();
        if bar_interval == 0 {
            return Err(Error::invalid("bar interval must be positive"));
        }
        for pair in bars.windows(2) {
            if pair[1].minute <= pair[0].minute {
                return Err(Error::invalid(format!(
                    "{date}: bar timestamps not strictly increasing"
                )));
            }
        }
        for b in &bars {
            let prices = [b.open, b.high, b.low, b.close];
            if prices.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
                return Err(Error::invalid(format!("{date}: non-positive price")));
            }
            if b.high < b.open.max(b.close) || b.low > b.open.min(b.close) || b.high < b.low {
                return Err(Error::invalid(format!(
                    "{date}: bar at minute {} violates low <= open,close <= high",
                    b.minute
                )));
            }
        }
        Ok(Self {
            date,
            bars,
            bar_interval,
        })
    }

    pub fn date(&self) -> &str {
        &self.date
    }

    pub fn bars(&self) -> &[Bar] {
        &self.bars
    }

    pub fn bar_interval(&self) -> u32 {
        self.bar_interval
    }

    pub fn high(&self) -> Option<f64> {
        self.bars.iter().map(|b| b.high).reduce(f64::max)
    }

    pub fn low(&self) -> Option<f64> {
        self.bars.iter().map(|b| b.low).reduce(f64::min)
    }
}

fn parse_timestamp(raw: &str) -> Option<u32> {
    let raw = raw.trim();
    // Accept `HH:MM`, `HH:MM:SS`, an ISO datetime ending in one of those, or plain minutes.
    let time = raw.rsplit(['T', ' ']).next().unwrap_or(raw);
    if time.contains(':') {
        let mut parts = time.split(':');
        let h: u32 = parts.next()?.parse().ok()?;
        let m: u32 = parts.next()?.parse().ok()?;
        Some(h * 60 + m)
    } else {
        time.parse().ok()
    }
}

/// Load an intraday CSV with header `date,timestamp,open,high,low,close`.
///
/// Rows are grouped by date; the bar interval of each day is the smallest gap
/// between consecutive timestamps.
pub fn load_intraday(path: impl AsRef<Path>) -> Result<Vec<IntradayBars>> {
    let path = path.as_ref();
    let source = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            source_name: source.clone(),
            line: 1,
            msg: format!("missing '{name}' column"),
        })
    };
    let cols = [
        col("date")?,
        col("timestamp")?,
        col("open")?,
        col("high")?,
        col("low")?,
        col("close")?,
    ];
    let mut grouped: Vec<(String, Vec<Bar>)> = Vec::new();
    for (idx, rec) in reader.records().enumerate() {
        let line = idx + 2;
        let rec = rec?;
        let field = |c: usize| rec.get(c).unwrap_or("").trim();
        let date = field(cols[0]).to_string();
        let minute = parse_timestamp(field(cols[1])).ok_or_else(|| Error::Parse {
            source_name: source.clone(),
            line,
            msg: format!("cannot parse timestamp '{}'", field(cols[1])),
        })?;
        let bar = Bar {
            minute,
            open: parse_f64(&source, line, "open", field(cols[2]))?,
            high: parse_f64(&source, line, "high", field(cols[3]))?,
            low: parse_f64(&source, line, "low", field(cols[4]))?,
            close: parse_f64(&source, line, "close", field(cols[5]))?,
        };
        match grouped.last_mut() {
            Some((d, bars)) if *d == date => bars.push(bar),
            _ => grouped.push((date, vec![bar])),
        }
    }
    let dates: Vec<String> = grouped.iter().map(|(d, _)| d.clone()).collect();
    check_monotone(&dates)?;
    grouped
        .into_iter()
        .map(|(date, bars)| {
            let interval = bars
                .windows(2)
                .map(|w| w[1].minute.saturating_sub(w[0].minute))
                .filter(|g| *g > 0)
                .min()
                .unwrap_or(1);
            IntradayBars::new(date, bars, interval)
        })
        .collect()
}

/// One-step-ahead VaR/ES forecast for a single day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub date: String,
    pub model: String,
    pub alpha: f64,
    pub var: f64,
    pub es: f64,
}

/// Write forecasts as CSV with header `date,model,alpha,var,es`.
pub fn write_forecasts(path: impl AsRef<Path>, records: &[ForecastRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    if records.is_empty() {
        w.write_record(["date", "model", "alpha", "var", "es"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_forecasts(path: impl AsRef<Path>) -> Result<Vec<ForecastRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Write `(date, value)` pairs with a named value column.
pub fn write_dated_column(path: impl AsRef<Path>, name: &str, rows: &[(String, f64)]) -> Result<()> {
    let mut f = File::create(path)?;
    writeln!(f, "date,{name}")?;
    for (d, v) in rows {
        writeln!(f, "{d},{v}")?;
    }
    Ok(())
}

pub fn read_dated_column(path: impl AsRef<Path>) -> Result<(String, Vec<(String, f64)>)> {
    let path = path.as_ref();
    let source = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.len() != 2 {
        return Err(Error::Parse {
            source_name: source,
            line: 1,
            msg: "expected exactly two columns: date,<value>".into(),
        });
    }
    let name = headers[1].to_string();
    let mut rows = Vec::new();
    for (idx, rec) in reader.records().enumerate() {
        let rec = rec?;
        rows.push((rec[0].to_string(), parse_f64(&source, idx + 2, &name, &rec[1])?));
    }
    Ok((name, rows))
}
