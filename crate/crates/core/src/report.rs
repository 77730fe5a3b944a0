//! Forecast comparison tables across models and series.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backtest::{self, HitSeries, McsConfig, TestResult};
use crate::data::{ForecastRecord, ReturnSeries};
use crate::error::{Error, Result};
use crate::objective::{fz_loss, quantile_loss_per_day};

/// Forecasts of several models for one return series.
#[derive(Debug, Clone)]
pub struct SeriesInput {
    pub name: String,
    pub returns: ReturnSeries,
    pub forecasts: Vec<ForecastRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub series: String,
    pub model: String,
    pub m: usize,
    pub vrate: f64,
    pub es_rate: f64,
    pub quantile_loss: f64,
    pub fz_loss: f64,
    /// Test name to result; tests that could not be computed are absent.
    pub tests: BTreeMap<String, TestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub metric: String,
    pub series: Vec<String>,
    pub models: Vec<String>,
    /// `ranks[model][series]`; `None` when the model is absent for a series.
    pub ranks: Vec<Vec<Option<f64>>>,
    pub average: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsMembership {
    pub series: String,
    pub loss: String,
    pub models: Vec<String>,
    pub included: Vec<bool>,
    pub p_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub alpha: f64,
    pub models: Vec<String>,
    pub metrics: Vec<ModelMetrics>,
    pub ranks: Vec<RankTable>,
    /// Per model, the number of series on which each test rejects at 5%.
    pub rejection_counts: BTreeMap<String, BTreeMap<String, usize>>,
    pub mcs: Vec<McsMembership>,
    /// `(series, model)` pairs without forecasts.
    pub absent: Vec<(String, String)>,
    pub dq_convention: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub alpha: f64,
    pub tests: Vec<String>,
    pub mcs: McsConfig,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            tests: ["uc", "cc", "dq1", "dq4", "vqr"].map(String::from).to_vec(),
            mcs: McsConfig::default(),
        }
    }
}

/// Forecasts of one model aligned with realized returns.
#[derive(Debug, Clone, PartialEq)]
pub struct Aligned {
    pub dates: Vec<String>,
    pub returns: Vec<f64>,
    pub var: Vec<f64>,
    pub es: Vec<f64>,
}

/// Join forecasts to returns by date.
pub fn align(returns: &ReturnSeries, forecasts: &[&ForecastRecord]) -> Result<Aligned> {
    let index: HashMap<&str, usize> = returns
        .dates()
        .iter()
        .enumerate()
        .map(|(i, d)| (d.as_str(), i))
        .collect();
    let mut out = Aligned {
        dates: Vec::new(),
        returns: Vec::new(),
        var: Vec::new(),
        es: Vec::new(),
    };
    for f in forecasts {
        let i = *index
            .get(f.date.as_str())
            .ok_or_else(|| Error::invalid(format!("no return for forecast date {}", f.date)))?;
        out.dates.push(f.date.clone());
        out.returns.push(returns.returns()[i]);
        out.var.push(f.var);
        out.es.push(f.es);
    }
    Ok(out)
}

/// Run the named backtests; unknown names are an error, failing tests are skipped.
pub fn run_tests(a: &Aligned, alpha: f64, tests: &[String]) -> Result<BTreeMap<String, TestResult>> {
    let hits = HitSeries::new(&a.returns, &a.var, alpha)?;
    let mut out = BTreeMap::new();
    for name in tests {
        let res = match name.as_str() {
            "uc" => Ok(backtest::kupiec_uc(&hits)),
            "cc" => backtest::christoffersen_cc(&hits),
            "dq1" => backtest::dq_test(&hits, &a.var, 1),
            "dq4" => backtest::dq_test(&hits, &a.var, 4),
            "vqr" => backtest::vqr_test(&a.returns, &a.var, alpha),
            other => return Err(Error::invalid(format!("unknown test '{other}'"))),
        };
        match res {
            Ok(r) => {
                out.insert(name.clone(), r);
            }
            Err(e) => log::warn!("{name} not computed: {e}"),
        }
    }
    Ok(out)
}

/// Ranks with ties sharing their average rank (1 is best).
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn model_order(inputs: &[SeriesInput]) -> Vec<String> {
    let mut models: Vec<String> = Vec::new();
    for s in inputs {
        for f in &s.forecasts {
            if !models.contains(&f.model) {
                models.push(f.model.clone());
            }
        }
    }
    models
}

pub fn build_report(inputs: &[SeriesInput], config: &ReportConfig) -> Result<Report> {
    if inputs.is_empty() || inputs.iter().all(|s| s.forecasts.is_empty()) {
        return Err(Error::invalid("no forecasts to report"));
    }
    let alpha = config.alpha;
    let models = model_order(inputs);
    let series_names: Vec<String> = inputs.iter().map(|s| s.name.clone()).collect();
    let mut metrics = Vec::new();
    let mut absent = Vec::new();
    let mut mcs_out = Vec::new();
    // cell[model][series] -> metrics index
    let mut cell: Vec<Vec<Option<usize>>> = vec![vec![None; inputs.len()]; models.len()];
    for (si, s) in inputs.iter().enumerate() {
        let mut q_losses = Vec::new();
        let mut fz_losses = Vec::new();
        let mut present = Vec::new();
        for (mi, model) in models.iter().enumerate() {
            let recs: Vec<&ForecastRecord> = s.forecasts.iter().filter(|f| &f.model == model).collect();
            if recs.is_empty() {
                absent.push((s.name.clone(), model.clone()));
                continue;
            }
            let a = align(&s.returns, &recs)?;
            let hits = HitSeries::new(&a.returns, &a.var, alpha)?;
            let q = quantile_loss_per_day(&a.returns, &a.var, alpha)?;
            let fz = fz_loss(&a.returns, &a.var, &a.es, alpha)?;
            let fz_days = fz.per_day.expect("per-day losses");
            metrics.push(ModelMetrics {
                series: s.name.clone(),
                model: model.clone(),
                m: a.returns.len(),
                vrate: backtest::vrate(&hits),
                es_rate: backtest::es_rate(&a.returns, &a.es)?,
                quantile_loss: q.iter().sum(),
                fz_loss: fz.total,
                tests: run_tests(&a, alpha, &config.tests)?,
            });
            cell[mi][si] = Some(metrics.len() - 1);
            present.push((mi, a.dates));
            q_losses.push(q);
            fz_losses.push(fz_days);
        }
        let same_days = present.windows(2).all(|w| w[0].1 == w[1].1);
        if present.len() >= 2 && same_days {
            let names: Vec<String> = present.iter().map(|(mi, _)| models[*mi].clone()).collect();
            for (loss, table) in [("quantile", &q_losses), ("fz", &fz_losses)] {
                let res = backtest::mcs(table, &config.mcs)?;
                mcs_out.push(McsMembership {
                    series: s.name.clone(),
                    loss: loss.into(),
                    models: names.clone(),
                    included: (0..names.len()).map(|i| res.included.contains(&i)).collect(),
                    p_values: res.p_values,
                });
            }
        } else if present.len() >= 2 {
            log::warn!("{}: models cover different days; MCS skipped", s.name);
        }
    }

    let rank_metric = |name: &str, key: &dyn Fn(&ModelMetrics) -> f64| -> RankTable {
        let mut ranks = vec![vec![None; inputs.len()]; models.len()];
        for si in 0..inputs.len() {
            let present: Vec<usize> = (0..models.len()).filter(|&mi| cell[mi][si].is_some()).collect();
            let vals: Vec<f64> = present.iter().map(|&mi| key(&metrics[cell[mi][si].unwrap()])).collect();
            for (&mi, r) in present.iter().zip(average_ranks(&vals)) {
                ranks[mi][si] = Some(r);
            }
        }
        let average = ranks
            .iter()
            .map(|row| {
                let v: Vec<f64> = row.iter().flatten().copied().collect();
                v.iter().sum::<f64>() / v.len().max(1) as f64
            })
            .collect();
        RankTable {
            metric: name.into(),
            series: series_names.clone(),
            models: models.clone(),
            ranks,
            average,
        }
    };
    let ranks = vec![
        rank_metric("vrate_gap", &|m| (m.vrate - alpha).abs()),
        rank_metric("quantile_loss", &|m| m.quantile_loss),
        rank_metric("fz_loss", &|m| m.fz_loss),
    ];

    let mut rejection_counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for m in &metrics {
        let entry = rejection_counts.entry(m.model.clone()).or_default();
        for t in &config.tests {
            let c = entry.entry(t.clone()).or_insert(0);
            if m.tests.get(t).is_some_and(|r| r.reject_at_5pct) {
                *c += 1;
            }
        }
    }
    Ok(Report {
        alpha,
        models,
        metrics,
        ranks,
        rejection_counts,
        mcs: mcs_out,
        absent,
        dq_convention: "hit_t - alpha on intercept, lagged hits, VaR_t".into(),
    })
}

/// Write `report.json`, `metrics.csv`, `ranks.csv`, `tests.csv` and `mcs.csv`.
pub fn write_report(dir: &Path, report: &Report) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    serde_json::to_writer_pretty(std::fs::File::create(dir.join("report.json"))?, report)?;

    let mut w = csv::Writer::from_path(dir.join("metrics.csv"))?;
    w.write_record(["series", "model", "m", "vrate", "es_rate", "quantile_loss", "fz_loss"])?;
    for m in &report.metrics {
        w.write_record([
            m.series.clone(),
            m.model.clone(),
            m.m.to_string(),
            m.vrate.to_string(),
            m.es_rate.to_string(),
            m.quantile_loss.to_string(),
            m.fz_loss.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("tests.csv"))?;
    w.write_record(["series", "model", "test", "statistic", "p_value", "reject_5pct"])?;
    for m in &report.metrics {
        for (t, r) in &m.tests {
            w.write_record([
                m.series.clone(),
                m.model.clone(),
                t.clone(),
                r.statistic.to_string(),
                r.p_value.to_string(),
                r.reject_at_5pct.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("ranks.csv"))?;
    for table in &report.ranks {
        let mut header = vec!["metric".to_string(), "model".to_string()];
        header.extend(table.series.iter().cloned());
        header.push("average_rank".into());
        w.write_record(&header)?;
        for (mi, model) in table.models.iter().enumerate() {
            let mut row = vec![table.metric.clone(), model.clone()];
            row.extend(table.ranks[mi].iter().map(|r| r.map(|v| v.to_string()).unwrap_or_default()));
            row.push(table.average[mi].to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("mcs.csv"))?;
    w.write_record(["series", "loss", "model", "included", "p_value"])?;
    for m in &report.mcs {
        for (i, model) in m.models.iter().enumerate() {
            w.write_record([
                m.series.clone(),
                m.loss.clone(),
                model.clone(),
                m.included[i].to_string(),
                m.p_values[i].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Tidy `date,series,value` rows of returns and each model's VaR and ES.
pub fn write_plot_data(path: &Path, inputs: &[SeriesInput]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", "series", "value"])?;
    for s in inputs {
        let mut first = true;
        for model in model_order(std::slice::from_ref(s)) {
            let recs: Vec<&ForecastRecord> = s.forecasts.iter().filter(|f| f.model == model).collect();
            let a = align(&s.returns, &recs)?;
            if first {
                for (d, r) in a.dates.iter().zip(&a.returns) {
                    w.write_record([d.clone(), format!("{}:return", s.name), r.to_string()])?;
                }
                first = false;
            }
            for ((d, v), e) in a.dates.iter().zip(&a.var).zip(&a.es) {
                w.write_record([d.clone(), format!("{}:{}:var", s.name, model), v.to_string()])?;
                w.write_record([d.clone(), format!("{}:{}:es", s.name, model), e.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
