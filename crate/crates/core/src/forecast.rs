//! Model fitting dispatch and rolling-window one-step forecasts.

use serde::{Deserialize, Serialize};

use crate::data::{window, ForecastRecord, ReturnSeries, RollingWindow};
use crate::error::{Error, Result};
use crate::mcmc::{fit_mcmc, McmcConfig};
use crate::ml::{care_grid_search, default_care_grid, fit_ml, MlConfig};
use crate::models::{forecast_one_step, run_model, Family, InitRule, ModelSpec, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Ml,
    Mcmc,
}

impl Estimator {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ml" => Ok(Estimator::Ml),
            "mcmc" => Ok(Estimator::Mcmc),
            _ => Err(Error::invalid(format!("unknown estimation method '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub ml: MlConfig,
    pub mcmc: McmcConfig,
    /// CARE-SAV expectile grid; empty means 50 log-spaced levels.
    #[serde(default)]
    pub care_grid: Vec<f64>,
    #[serde(default)]
    pub init: InitRule,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            ml: MlConfig::default(),
            mcmc: McmcConfig::default(),
            care_grid: Vec::new(),
            init: InitRule::default(),
        }
    }
}

impl FitConfig {
    fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.ml.seed = seed;
        c.mcmc.seed = seed;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub params: ParamVector,
    pub estimator: Estimator,
    /// Log-likelihood at the returned parameters, when defined.
    pub loglik: Option<f64>,
    pub converged: bool,
    #[serde(default)]
    pub acceptance: Vec<f64>,
}

/// Fit any family. CARE-SAV always uses the expectile grid search; the
/// sampler is started from the ML estimate.
pub fn fit_model(
    spec: &ModelSpec,
    returns: &[f64],
    measures: Option<&[f64]>,
    estimator: Estimator,
    config: &FitConfig,
) -> Result<FittedModel> {
    spec.validate()?;
    if spec.family == Family::CareSav {
        let grid = if config.care_grid.is_empty() {
            default_care_grid(spec.alpha, 50)
        } else {
            config.care_grid.clone()
        };
        let fit = care_grid_search(returns, spec.alpha, &grid, config.init)?;
        return Ok(FittedModel {
            spec: spec.clone(),
            params: fit.params,
            estimator: Estimator::Ml,
            loglik: None,
            converged: true,
            acceptance: Vec::new(),
        });
    }
    let ml_cfg = MlConfig {
        init: config.init,
        ..config.ml.clone()
    };
    let ml = fit_ml(spec, returns, measures, &ml_cfg)?;
    match estimator {
        Estimator::Ml => Ok(FittedModel {
            spec: spec.clone(),
            params: ml.params,
            estimator,
            loglik: Some(ml.loglik),
            converged: ml.converged,
            acceptance: Vec::new(),
        }),
        Estimator::Mcmc => {
            let post = fit_mcmc(spec, returns, measures, &ml.params, &config.mcmc, config.init)?;
            Ok(FittedModel {
                spec: spec.clone(),
                params: post.params,
                estimator,
                loglik: None,
                converged: post.converged,
                acceptance: post.acceptance,
            })
        }
    }
}

/// One-step forecast from the end of an in-sample window.
pub fn forecast_from(
    spec: &ModelSpec,
    params: &ParamVector,
    returns: &[f64],
    measures: Option<&[f64]>,
    init: InitRule,
) -> Result<(f64, f64)> {
    let path = run_model(spec, params, returns, measures, init)?;
    let last_r = *returns
        .last()
        .ok_or_else(|| Error::InsufficientData("empty window".into()))?;
    let last_x = measures.and_then(|x| x.last().copied());
    forecast_one_step(spec, params, &path, last_r, last_x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingConfig {
    pub window: usize,
    /// Refit every this many steps; `0` fits once and freezes the parameters.
    pub refit_every: usize,
    pub estimator: Estimator,
    pub fit: FitConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFailure {
    pub step: usize,
    pub date: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingForecast {
    pub records: Vec<ForecastRecord>,
    pub failures: Vec<StepFailure>,
    pub refits: usize,
}

/// Fixed-size rolling window forecasts for every day after the first window.
pub fn rolling_forecast(spec: &ModelSpec, series: &ReturnSeries, config: &RollingConfig) -> Result<RollingForecast> {
    spec.validate()?;
    let n = series.len();
    if n < config.window + 1 {
        return Err(Error::InsufficientData(format!(
            "{n} days cannot hold a {}-day window plus one forecast day",
            config.window
        )));
    }
    let measure_id = spec.family.needs_measure().then(|| spec.measure_id.clone()).flatten();
    let mut out = RollingForecast {
        records: Vec::new(),
        failures: Vec::new(),
        refits: 0,
    };
    let mut params: Option<ParamVector> = None;
    for step in 0..n - config.window {
        let (range, day) = window(
            n,
            RollingWindow {
                in_sample: config.window,
                step,
            },
        )?;
        let date = series.dates()[day].clone();
        let returns = &series.returns()[range.clone()];
        let measures = match &measure_id {
            Some(id) => match series.measure_values(id, range.clone()) {
                Ok(v) => Some(v),
                Err(e) => {
                    out.failures.push(StepFailure { step, date, message: e.to_string() });
                    continue;
                }
            },
            None => None,
        };
        let due = match config.refit_every {
            0 => params.is_none(),
            k => step % k == 0 || params.is_none(),
        };
        if due {
            let cfg = config.fit.with_seed(config.seed.wrapping_add(step as u64));
            match fit_model(spec, returns, measures.as_deref(), config.estimator, &cfg) {
                Ok(f) => {
                    params = Some(f.params);
                    out.refits += 1;
                }
                Err(e) => {
                    log::warn!("step {step} ({date}): fit failed: {e}");
                    out.failures.push(StepFailure { step, date, message: e.to_string() });
                    continue;
                }
            }
        }
        let p = params.as_ref().expect("fitted above");
        match forecast_from(spec, p, returns, measures.as_deref(), config.fit.init) {
            Ok((var, es)) => out.records.push(ForecastRecord {
                date,
                model: spec.label(),
                alpha: spec.alpha,
                var,
                es,
            }),
            Err(e) => out.failures.push(StepFailure { step, date, message: e.to_string() }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate, DgpSpec, SimModel};

    fn sim_series(n: usize, seed: u64) -> ReturnSeries {
        let d = simulate(&DgpSpec::new(SimModel::SimModel1, n, seed)).unwrap();
        ReturnSeries::from_returns(d.returns)
            .unwrap()
            .with_measure("x", d.measures.into_iter().map(Some).collect())
            .unwrap()
    }

    fn quick() -> FitConfig {
        FitConfig {
            ml: MlConfig {
                n_random_starts: 200,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn record_count_and_frozen_params() {
        let series = sim_series(303, 1);
        let spec = ModelSpec::new(Family::ReEsCare, 0.01).with_measure("x");
        let cfg = RollingConfig {
            window: 300,
            refit_every: 1,
            estimator: Estimator::Ml,
            fit: quick(),
            seed: 0,
        };
        let out = rolling_forecast(&spec, &series, &cfg).unwrap();
        assert_eq!(out.records.len(), 3);
        assert_eq!(out.refits, 3);

        let frozen = rolling_forecast(&spec, &series, &RollingConfig { refit_every: 0, ..cfg }).unwrap();
        assert_eq!(frozen.refits, 1);
        assert_eq!(frozen.records.len(), 3);
        let vars: Vec<f64> = frozen.records.iter().map(|r| r.var).collect();
        assert!(vars[0] != vars[1] && vars[1] != vars[2]);
        assert!(frozen.records.iter().all(|r| r.es < r.var && r.var < 0.0));
    }

    #[test]
    fn forecast_matches_longer_recursion() {
        let series = sim_series(400, 2);
        let spec = ModelSpec::new(Family::EsCare, 0.01);
        let p = ParamVector::new(Family::EsCare, vec![-0.05, -0.2, 0.85, 0.0015]).unwrap();
        let r = series.returns();
        let init = InitRule::Fixed { mu: -1.0 };
        let (var, es) = forecast_from(&spec, &p, &r[..399], None, init).unwrap();
        let full = run_model(&spec, &p, r, None, init).unwrap();
        assert!((var - full.mu[399]).abs() < 1e-12);
        assert!((es - full.es[399]).abs() < 1e-12);
        let f = crate::models::es_scaling_factor(0.0015, 0.01).unwrap();
        assert!((es - f * var).abs() < 1e-12);
    }

    #[test]
    fn short_series_rejected() {
        let series = sim_series(150, 3);
        let spec = ModelSpec::new(Family::EsCare, 0.01);
        let cfg = RollingConfig {
            window: 150,
            refit_every: 1,
            estimator: Estimator::Ml,
            fit: quick(),
            seed: 0,
        };
        assert!(rolling_forecast(&spec, &series, &cfg).is_err());
    }
}
