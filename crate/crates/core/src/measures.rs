//! Daily realized measures built from intraday bars.
//!
//! All measures are in percent² units so that they are on the scale of
//! squared percent daily returns. Interval grids are built from base-grid bars:
//! a grid of `k = interval / bar_interval` base bars starting at offset `o`
//! uses closes `c[o], c[o+k], ...` for returns and the blocks
//! `[o + jk, o + (j+1)k)` for ranges. Partial blocks at either end are dropped.

use serde::{Deserialize, Serialize};

use crate::data::IntradayBars;
use crate::error::{Error, Result};

/// 1 / (4 ln 2), the Parkinson range-to-variance constant.
pub const PARKINSON: f64 = 0.360_673_760_222_240_85;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureKind {
    Rv,
    Rr,
    ScRv,
    ScRr,
    SsRv,
    SsRr,
}

impl MeasureKind {
    pub fn name(self) -> &'static str {
        match self {
            MeasureKind::Rv => "rv",
            MeasureKind::Rr => "rr",
            MeasureKind::ScRv => "scrv",
            MeasureKind::ScRr => "scrr",
            MeasureKind::SsRv => "ssrv",
            MeasureKind::SsRr => "ssrr",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "rv" => MeasureKind::Rv,
            "rr" => MeasureKind::Rr,
            "scrv" => MeasureKind::ScRv,
            "scrr" => MeasureKind::ScRr,
            "ssrv" => MeasureKind::SsRv,
            "ssrr" => MeasureKind::SsRr,
            other => return Err(Error::invalid(format!("unknown measure kind '{other}'"))),
        })
    }

    fn is_range(self) -> bool {
        matches!(self, MeasureKind::Rr | MeasureKind::ScRr | MeasureKind::SsRr)
    }
}

/// Daily proxy used by the scaling step for range-based measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RangeProxy {
    /// `(100 ln(H/L))² / (4 ln 2)`.
    #[default]
    Parkinson,
    /// `(100 ln(H/L))²`.
    SquaredRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureConfig {
    pub kind: MeasureKind,
    pub interval_minutes: u32,
    /// Trailing days used by the scaling step.
    pub scaling_lookback: usize,
    pub subsample_offsets: usize,
    pub range_proxy: RangeProxy,
}

impl MeasureConfig {
    /// Defaults: 66-day scaling lookback, offsets = interval / base grid.
    pub fn new(kind: MeasureKind, interval_minutes: u32, base_minutes: u32) -> Result<Self> {
        if interval_minutes == 0 || base_minutes == 0 || interval_minutes % base_minutes != 0 {
            return Err(Error::invalid(format!(
                "interval {interval_minutes} is not a multiple of base grid {base_minutes}"
            )));
        }
        Ok(Self {
            kind,
            interval_minutes,
            scaling_lookback: 66,
            subsample_offsets: (interval_minutes / base_minutes) as usize,
            range_proxy: RangeProxy::Parkinson,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.scaling_lookback == 0 || self.subsample_offsets == 0 {
            return Err(Error::invalid("scaling lookback and offsets must be >= 1"));
        }
        Ok(())
    }
}

fn grid_ratio(day: &IntradayBars, interval: u32) -> Result<usize> {
    let base = day.bar_interval();
    if interval == 0 || interval % base != 0 {
        return Err(Error::invalid(format!(
            "{}: interval {interval} is not a multiple of the {base}-minute bars",
            day.date()
        )));
    }
    Ok((interval / base) as usize)
}

fn rv_on_grid(day: &IntradayBars, k: usize, offset: usize) -> Result<f64> {
    let closes: Vec<f64> = day.bars().iter().skip(offset).step_by(k).map(|b| b.close).collect();
    if closes.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{}: need at least two bars on the {}-bar grid",
            day.date(),
            k
        )));
    }
    Ok(closes
        .windows(2)
        .map(|w| {
            let r = 100.0 * (w[1] / w[0]).ln();
            r * r
        })
        .sum())
}

fn rr_on_grid(day: &IntradayBars, k: usize, offset: usize) -> Result<f64> {
    let bars = day.bars().get(offset..).unwrap_or(&[]);
    let blocks: Vec<_> = bars.chunks_exact(k).collect();
    if blocks.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{}: no complete {}-bar interval",
            day.date(),
            k
        )));
    }
    Ok(PARKINSON
        * blocks
            .iter()
            .map(|block| {
                let high = block.iter().map(|b| b.high).fold(f64::NEG_INFINITY, f64::max);
                let low = block.iter().map(|b| b.low).fold(f64::INFINITY, f64::min);
                let r = 100.0 * (high / low).ln();
                r * r
            })
            .sum::<f64>())
}

/// Sum of squared percent log-returns at `interval` minutes.
pub fn realized_variance(day: &IntradayBars, interval: u32) -> Result<f64> {
    subsample_measure(day, MeasureKind::Rv, interval, 1)
}

/// Parkinson-scaled sum of squared percent log-ranges at `interval` minutes.
pub fn realized_range(day: &IntradayBars, interval: u32) -> Result<f64> {
    subsample_measure(day, MeasureKind::Rr, interval, 1)
}

/// Average of the plain measure over `offsets` shifted grids (shift = one base bar).
///
/// `kind` selects RV or RR; scaled and sub-sampled kinds map to their base measure.
pub fn subsample_measure(
    day: &IntradayBars,
    kind: MeasureKind,
    target_interval: u32,
    offsets: usize,
) -> Result<f64> {
    let k = grid_ratio(day, target_interval)?;
    if offsets == 0 || offsets > k {
        return Err(Error::invalid(format!(
            "{offsets} offsets incompatible with a {k}-bar interval"
        )));
    }
    let mut total = 0.0;
    for o in 0..offsets {
        total += if kind.is_range() {
            rr_on_grid(day, k, o)?
        } else {
            rv_on_grid(day, k, o)?
        };
    }
    Ok(total / offsets as f64)
}

/// Rescale a raw measure by the ratio of trailing sums of a daily proxy to the
/// raw measure over the previous `q` days.
///
/// The output covers days `q..len`; earlier days lack history and are dropped.
pub fn scale_measure(raw: &[f64], daily_proxy: &[f64], q: usize) -> Result<Vec<f64>> {
    if raw.len() != daily_proxy.len() {
        return Err(Error::invalid("raw and proxy series are not aligned"));
    }
    if q == 0 {
        return Err(Error::invalid("scaling lookback must be >= 1"));
    }
    if q >= raw.len() {
        return Err(Error::InsufficientData(format!(
            "no day has {q} prior days in a series of length {}",
            raw.len()
        )));
    }
    let mut proxy_sum: f64 = daily_proxy[..q].iter().sum();
    let mut raw_sum: f64 = raw[..q].iter().sum();
    let mut out = Vec::with_capacity(raw.len() - q);
    for t in q..raw.len() {
        if raw_sum <= 0.0 {
            return Err(Error::Numerical(format!(
                "zero trailing raw-measure sum before day {t}"
            )));
        }
        out.push(raw[t] * proxy_sum / raw_sum);
        proxy_sum += daily_proxy[t] - daily_proxy[t - q];
        raw_sum += raw[t] - raw[t - q];
    }
    Ok(out)
}

/// Squared percent close-to-close return of each day relative to the previous
/// day's last close; the first day uses its own first open.
fn squared_daily_returns(days: &[IntradayBars]) -> Vec<f64> {
    let mut prev: Option<f64> = None;
    days.iter()
        .map(|d| {
            let first = d.bars().first().map(|b| b.open).unwrap_or(1.0);
            let last = d.bars().last().map(|b| b.close).unwrap_or(first);
            let base = prev.unwrap_or(first);
            prev = Some(last);
            let r = 100.0 * (last / base).ln();
            r * r
        })
        .collect()
}

fn daily_range_proxy(days: &[IntradayBars], proxy: RangeProxy) -> Vec<f64> {
    let c = match proxy {
        RangeProxy::Parkinson => PARKINSON,
        RangeProxy::SquaredRange => 1.0,
    };
    days.iter()
        .map(|d| {
            let r = 100.0 * (d.high().unwrap_or(1.0) / d.low().unwrap_or(1.0)).ln();
            c * r * r
        })
        .collect()
}

/// Compute a measure for every day; returns `(date, value)` rows.
///
/// Scaled measures start after `scaling_lookback` days of history.
pub fn compute_measures(days: &[IntradayBars], cfg: &MeasureConfig) -> Result<Vec<(String, f64)>> {
    cfg.validate()?;
    let offsets = match cfg.kind {
        MeasureKind::SsRv | MeasureKind::SsRr => cfg.subsample_offsets,
        _ => 1,
    };
    let raw = days
        .iter()
        .map(|d| subsample_measure(d, cfg.kind, cfg.interval_minutes, offsets))
        .collect::<Result<Vec<_>>>()?;
    let dates = days.iter().map(|d| d.date().to_string());
    match cfg.kind {
        MeasureKind::ScRv | MeasureKind::ScRr => {
            let proxy = if cfg.kind == MeasureKind::ScRv {
                squared_daily_returns(days)
            } else {
                daily_range_proxy(days, cfg.range_proxy)
            };
            let scaled = scale_measure(&raw, &proxy, cfg.scaling_lookback)?;
            Ok(dates.skip(cfg.scaling_lookback).zip(scaled).collect())
        }
        _ => Ok(dates.zip(raw).collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Bar;

    fn day_from_closes(closes: &[f64], interval: u32) -> IntradayBars {
        let bars = closes
            .iter()
            .enumerate()
            .map(|(i, &c)| Bar {
                minute: 570 + interval * i as u32,
                open: c,
                high: c,
                low: c,
                close: c,
            })
            .collect();
        IntradayBars::new("2020-01-02", bars, interval).unwrap()
    }

    #[test]
    fn rv_constant_prices_is_zero() {
        let day = day_from_closes(&[100.0; 10], 5);
        assert_eq!(realized_variance(&day, 5).unwrap(), 0.0);
    }

    #[test]
    fn rv_sum_of_squares() {
        let p1 = 100.0 * (0.01f64).exp();
        let p2 = p1 * (-0.02f64).exp();
        let day = day_from_closes(&[100.0, p1, p2], 5);
        assert!((realized_variance(&day, 5).unwrap() - 5.0).abs() < 1e-10);
    }

    #[test]
    fn rv_single_bar_errors() {
        let day = day_from_closes(&[100.0], 5);
        assert!(realized_variance(&day, 5).is_err());
    }

    #[test]
    fn rr_examples() {
        let flat = day_from_closes(&[100.0; 4], 5);
        assert_eq!(realized_range(&flat, 5).unwrap(), 0.0);
        let high = 100.0 * (0.01f64).exp();
        let bar = Bar { minute: 570, open: 100.0, high, low: 100.0, close: 100.5 };
        let day = IntradayBars::new("d", vec![bar], 5).unwrap();
        assert!((realized_range(&day, 5).unwrap() - 0.36067).abs() < 1e-5);
    }

    #[test]
    fn scaling_examples() {
        let raw = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let same = scale_measure(&raw, &raw, 2).unwrap();
        assert_eq!(same, raw[2..].to_vec());
        let doubled: Vec<f64> = raw.iter().map(|x| 2.0 * x).collect();
        let scaled = scale_measure(&raw, &doubled, 2).unwrap();
        for (s, r) in scaled.iter().zip(&raw[2..]) {
            assert!((s - 2.0 * r).abs() < 1e-12);
        }
        assert!(scale_measure(&raw, &raw, raw.len()).is_err());
        assert!(scale_measure(&[0.0, 0.0, 1.0], &[1.0, 1.0, 1.0], 2).is_err());
    }

    #[test]
    fn subsample_single_offset_matches_plain() {
        let closes: Vec<f64> = (0..30).map(|i| 100.0 + (i as f64 * 0.7).sin()).collect();
        let day = day_from_closes(&closes, 1);
        assert_eq!(
            subsample_measure(&day, MeasureKind::SsRv, 5, 1).unwrap().to_bits(),
            realized_variance(&day, 5).unwrap().to_bits()
        );
        assert_eq!(
            subsample_measure(&day, MeasureKind::SsRr, 5, 1).unwrap().to_bits(),
            realized_range(&day, 5).unwrap().to_bits()
        );
    }

    #[test]
    fn subsample_linear_path_matches_enumeration() {
        // Linear price path on a 1-minute grid, 2-minute target, 2 offsets.
        let closes: Vec<f64> = (0..9).map(|i| 100.0 + i as f64).collect();
        let day = day_from_closes(&closes, 1);
        let rv = |pts: &[f64]| -> f64 {
            pts.windows(2).map(|w| (100.0 * (w[1] / w[0]).ln()).powi(2)).sum()
        };
        let grid0 = [100.0, 102.0, 104.0, 106.0, 108.0];
        let grid1 = [101.0, 103.0, 105.0, 107.0];
        let expected = 0.5 * (rv(&grid0) + rv(&grid1));
        let got = subsample_measure(&day, MeasureKind::SsRv, 2, 2).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert_eq!(subsample_measure(&day_from_closes(&[50.0; 9], 1), MeasureKind::SsRv, 2, 2).unwrap(), 0.0);
    }

    #[test]
    fn incompatible_grids() {
        let day = day_from_closes(&[100.0; 10], 5);
        assert!(subsample_measure(&day, MeasureKind::SsRv, 7, 1).is_err());
        assert!(subsample_measure(&day, MeasureKind::SsRv, 10, 3).is_err());
    }
}
