//! Maximum-likelihood estimation: expectile regression, the three-step ML
//! procedure for the realized families and the CARE-SAV grid search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{self, Family, InitRule, ModelSpec, ParamVector};
use crate::objective::{als_objective, Likelihood};
use crate::optim::{nelder_mead, NelderMeadConfig};
use crate::stats;

const MIN_OBS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlConfig {
    pub n_random_starts: usize,
    pub tolerance: f64,
    pub max_iter: usize,
    pub seed: u64,
    #[serde(default)]
    pub init: InitRule,
}

impl Default for MlConfig {
    fn default() -> Self {
        Self {
            n_random_starts: 10_000,
            tolerance: 1e-8,
            max_iter: 20_000,
            seed: 0,
            init: InitRule::default(),
        }
    }
}

impl MlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_random_starts == 0 {
            return Err(Error::invalid("n_random_starts must be >= 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        Ok(())
    }
}

/// Functional form of an expectile regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExpectileForm {
    /// `mu_t = beta1` on every day.
    Constant,
    /// `mu_t = beta1 + beta2 d_{t-1} + beta3 mu_{t-1}`.
    Linear,
    /// Two linear regimes keyed on `r_{t-1} <= threshold`.
    Threshold { threshold: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectileFit {
    pub betas: Vec<f64>,
    pub objective: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlFit {
    pub params: ParamVector,
    pub loglik: f64,
    /// Log-likelihood of the best random start, before local optimization.
    pub start_loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Expectile level used for the expectile-regression step.
    pub tau0: f64,
}

fn check_series(returns: &[f64]) -> Result<()> {
    if returns.len() < MIN_OBS {
        return Err(Error::InsufficientData(format!(
            "{} observations, need at least {MIN_OBS}",
            returns.len()
        )));
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::invalid("non-finite return"));
    }
    if stats::variance(returns) == 0.0 {
        return Err(Error::InvalidInput("return series is constant".into()));
    }
    Ok(())
}

/// Expectile level at which the sample expectile equals the empirical
/// `alpha`-quantile of `returns`, kept inside `[1e-6, 1 - 1e-6]` (the level is
/// 0 when the quantile is the sample minimum).
pub fn data_driven_tau(returns: &[f64], alpha: f64) -> f64 {
    stats::expectile_level(returns, stats::quantile(returns, alpha)).clamp(1e-6, 1.0 - 1e-6)
}

fn als_for(betas: &[f64], form: ExpectileForm, returns: &[f64], driver: &[f64], tau: f64, mu0: f64, buf: &mut Vec<f64>) -> f64 {
    match form {
        ExpectileForm::Constant => {
            buf.clear();
            buf.resize(returns.len(), betas[0]);
        }
        ExpectileForm::Linear | ExpectileForm::Threshold { .. } => {
            let stationary = betas.chunks(3).all(|b| b[2].abs() < 1.0);
            if !stationary {
                return f64::INFINITY;
            }
            let c = match form {
                ExpectileForm::Threshold { threshold } => threshold,
                _ => 0.0,
            };
            models::expectile_path(betas, driver, returns, c, mu0, buf);
            // Lower-tail paths must stay negative to be admissible downstream.
            if tau < 0.5 && buf.iter().any(|m| *m >= 0.0) {
                return f64::INFINITY;
            }
        }
    }
    als_objective(returns, buf, tau)
}

/// Fit an expectile regression at level `tau` by minimizing the asymmetric
/// least squares criterion from a grid of starts. For `tau < 0.5` the dynamic
/// forms only admit paths that stay strictly negative.
pub fn fit_expectile_regression(
    returns: &[f64],
    driver: &[f64],
    tau: f64,
    form: ExpectileForm,
    init: InitRule,
    alpha: f64,
) -> Result<ExpectileFit> {
    check_series(returns)?;
    if driver.len() != returns.len() {
        return Err(Error::invalid("driver and returns differ in length"));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::invalid(format!("tau {tau} outside (0, 1)")));
    }
    let mu_star = stats::expectile(returns, tau);
    let mu0 = init.initial_mu(returns, alpha)?;
    let mut buf = Vec::with_capacity(returns.len());
    let cfg = NelderMeadConfig {
        max_iter: 4000,
        ftol: 1e-10,
        restarts: 2,
    };
    if form == ExpectileForm::Constant {
        let r = nelder_mead(
            |b| als_for(b, form, returns, driver, tau, mu0, &mut buf),
            &[mu_star],
            &[0.1 * mu_star.abs().max(1e-3)],
            &NelderMeadConfig { ftol: 1e-15, ..cfg },
        );
        return Ok(ExpectileFit {
            betas: r.x,
            objective: r.fx,
            converged: r.converged,
        });
    }
    let d_mean = stats::mean(driver);
    let mut starts: Vec<Vec<f64>> = Vec::new();
    for &b3 in &[0.6, 0.8, 0.9, 0.95] {
        for &k in &[0.3, 0.6, 0.9] {
            let b2 = k * (1.0 - b3) * mu_star / d_mean;
            let b1 = (1.0 - k) * (1.0 - b3) * mu_star;
            let mut s = vec![b1, b2, b3];
            if let ExpectileForm::Threshold { .. } = form {
                s.extend_from_within(..);
            }
            starts.push(s);
        }
    }
    let mut scored: Vec<(f64, Vec<f64>)> = starts
        .into_iter()
        .map(|s| (als_for(&s, form, returns, driver, tau, mu0, &mut buf), s))
        .filter(|(v, _)| v.is_finite())
        .collect();
    if scored.is_empty() {
        return Err(Error::Numerical("no finite expectile-regression start".into()));
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best: Option<ExpectileFit> = None;
    for (_, s) in scored.into_iter().take(3) {
        let steps: Vec<f64> = s
            .chunks(3)
            .flat_map(|b| [0.2 * b[0].abs().max(1e-3), 0.2 * b[1].abs().max(1e-3), 0.05])
            .collect();
        let r = nelder_mead(|b| als_for(b, form, returns, driver, tau, mu0, &mut buf), &s, &steps, &cfg);
        if best.as_ref().is_none_or(|b| r.fx < b.objective) {
            best = Some(ExpectileFit {
                betas: r.x,
                objective: r.fx,
                converged: r.converged,
            });
        }
    }
    best.ok_or_else(|| Error::Numerical("expectile regression failed".into()))
}

fn driver_for(spec: &ModelSpec, returns: &[f64], measures: Option<&[f64]>) -> Result<Vec<f64>> {
    if spec.family.needs_measure() {
        let x = measures.ok_or_else(|| Error::invalid(format!("{} needs measures", spec.family)))?;
        if x.len() != returns.len() {
            return Err(Error::invalid("measures and returns differ in length"));
        }
        Ok(x.to_vec())
    } else {
        Ok(returns.iter().map(|r| r.abs()).collect())
    }
}

fn expectile_form(spec: &ModelSpec) -> ExpectileForm {
    if spec.family == Family::ReTEsCare {
        ExpectileForm::Threshold {
            threshold: spec.threshold,
        }
    } else {
        ExpectileForm::Linear
    }
}

/// Uniform draw of the non-beta parameters over the random-start boxes.
fn draw_start(family: Family, alpha: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let tau = rng.random_range(1e-5..alpha - 1e-5);
    match family {
        Family::EsCare => vec![tau],
        Family::ReEsCare | Family::ReTEsCare => vec![
            tau,
            rng.random_range(-1.0..=1.0),
            rng.random_range(0.0..=1.0),
            rng.random_range(-0.2..=0.2),
            rng.random_range(-0.3..=0.3),
            1.0 - rng.random_range(0.0..1.0),
        ],
        Family::EsCaviarMult => vec![rng.random_range(-4.0..=1.0)],
        Family::EsCaviarAdd => vec![
            rng.random_range(0.0..=0.2),
            rng.random_range(0.0..=0.5),
            rng.random_range(0.0..=0.99),
        ],
        Family::CareSav => unreachable!("CARE-SAV is fitted by grid search"),
    }
}

fn simplex_steps(family: Family, values: &[f64], alpha: f64) -> Vec<f64> {
    let names = family.param_names();
    names
        .iter()
        .zip(values)
        .map(|(n, v)| match *n {
            "beta3" | "beta6" => 0.02,
            "tau" => alpha / 20.0,
            "xi" => 0.1,
            "phi" => 0.05,
            "delta1" | "delta2" => 0.02,
            "sigma_u" => 0.05,
            "gamma0" if family == Family::EsCaviarMult => 0.3,
            _ => 0.1 * v.abs().max(0.01),
        })
        .collect()
}

/// Three-step ML: expectile regression for the betas at the data-driven
/// expectile level, best of `n_random_starts` uniform draws for the remaining
/// parameters, then Nelder-Mead on the full log-likelihood.
pub fn fit_ml(spec: &ModelSpec, returns: &[f64], measures: Option<&[f64]>, config: &MlConfig) -> Result<MlFit> {
    spec.validate()?;
    config.validate()?;
    check_series(returns)?;
    if spec.family == Family::CareSav {
        return Err(Error::invalid("CARE-SAV is estimated by care_grid_search"));
    }
    let alpha = spec.alpha;
    let driver = driver_for(spec, returns, measures)?;
    let tau0 = data_driven_tau(returns, alpha);
    let step1 = fit_expectile_regression(returns, &driver, tau0, expectile_form(spec), config.init, alpha)?;
    let mut lik = Likelihood::new(spec, returns, measures, config.init)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut candidate = step1.betas.clone();
    let nb = step1.betas.len();
    for _ in 0..config.n_random_starts {
        candidate.truncate(nb);
        candidate.extend(draw_start(spec.family, alpha, &mut rng));
        let ll = lik.loglik(&candidate);
        if ll.is_finite() && best.as_ref().is_none_or(|(b, _)| ll > *b) {
            best = Some((ll, candidate.clone()));
        }
    }
    let (start_ll, start) =
        best.ok_or_else(|| Error::Numerical("no random start has a finite likelihood".into()))?;
    let steps = simplex_steps(spec.family, &start, alpha);
    let nm = NelderMeadConfig {
        max_iter: config.max_iter,
        ftol: config.tolerance,
        restarts: 3,
    };
    let r = nelder_mead(|v| -lik.loglik(v), &start, &steps, &nm);
    let (values, loglik) = if -r.fx >= start_ll {
        (r.x, -r.fx)
    } else {
        (start, start_ll)
    };
    if !r.converged {
        log::warn!("{}: local optimizer stopped after {} iterations", spec.family, r.iterations);
    }
    Ok(MlFit {
        params: ParamVector::new(spec.family, values)?,
        loglik,
        start_loglik: start_ll,
        converged: r.converged,
        iterations: r.iterations,
        tau0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CareFit {
    pub tau: f64,
    pub params: ParamVector,
    pub in_sample_vrate: f64,
}

/// `count` log-spaced expectile levels from `1e-4` to `alpha - 1e-4`.
pub fn default_care_grid(alpha: f64, count: usize) -> Vec<f64> {
    let (lo, hi) = (1e-4f64.ln(), (alpha - 1e-4).ln());
    if count == 1 {
        return vec![lo.exp()];
    }
    (0..count)
        .map(|i| (lo + (hi - lo) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// CARE-SAV estimation: ALS fit at every grid level, keep the level whose
/// in-sample violation rate is closest to `alpha` (ties go to the smaller level).
pub fn care_grid_search(returns: &[f64], alpha: f64, grid: &[f64], init: InitRule) -> Result<CareFit> {
    if grid.is_empty() {
        return Err(Error::invalid("empty tau grid"));
    }
    if let Some(t) = grid.iter().find(|t| !(**t > 0.0 && **t < alpha)) {
        return Err(Error::invalid(format!("grid value {t} outside (0, {alpha})")));
    }
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let driver: Vec<f64> = returns.iter().map(|r| r.abs()).collect();
    let mut best: Option<(f64, CareFit)> = None;
    for &tau in &grid {
        let fit = fit_expectile_regression(returns, &driver, tau, ExpectileForm::Linear, init, alpha)?;
        let mut v = fit.betas.clone();
        v.push(tau);
        let params = ParamVector::new(Family::CareSav, v)?;
        let path = models::run_baseline(&params, returns, alpha, init);
        let Ok(path) = path else { continue };
        let hits = returns.iter().zip(&path.mu).filter(|(r, m)| r < m).count();
        let vrate = hits as f64 / returns.len() as f64;
        let gap = (vrate - alpha).abs();
        if best.as_ref().is_none_or(|(g, _)| gap < *g) {
            best = Some((
                gap,
                CareFit {
                    tau,
                    params,
                    in_sample_vrate: vrate,
                },
            ));
        }
    }
    best.map(|(_, f)| f)
        .ok_or_else(|| Error::Numerical("no grid level produced a usable CARE-SAV fit".into()))
}
