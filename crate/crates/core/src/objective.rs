//! Likelihoods and loss functions.
//!
//! Invalid paths evaluate to `f64::NEG_INFINITY` rather than an error so that
//! optimizers and samplers can treat them as plain rejections.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{self, Family, InitRule, ModelSpec, ParamVector, RiskPath};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub per_day: Option<Vec<f64>>,
    /// False when some day of the path is outside the loss domain.
    pub valid: bool,
}

fn check_aligned(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::invalid(format!("series lengths differ: {a} vs {b}")))
    }
}

/// Asymmetric least squares criterion `sum |tau - I(r < mu)| (r - mu)^2`.
pub fn als_objective(returns: &[f64], mu: &[f64], tau: f64) -> f64 {
    returns
        .iter()
        .zip(mu)
        .map(|(r, m)| {
            let d = r - m;
            let w = if r < m { 1.0 - tau } else { tau };
            w * d * d
        })
        .sum()
}

/// One day of the asymmetric Laplace log-likelihood.
#[inline]
pub fn al_term(r: f64, var: f64, es: f64, alpha: f64) -> f64 {
    if !(es < 0.0) {
        return f64::NEG_INFINITY;
    }
    let hit = if r <= var { 1.0 } else { 0.0 };
    ((alpha - 1.0) / es).ln() + (r - var) * (alpha - hit) / (alpha * es)
}

/// Asymmetric Laplace log-likelihood of a (VaR, ES) path.
pub fn al_loglik_report(returns: &[f64], var: &[f64], es: &[f64], alpha: f64) -> Result<LossReport> {
    check_aligned(returns.len(), var.len())?;
    check_aligned(returns.len(), es.len())?;
    let per_day: Vec<f64> = returns
        .iter()
        .zip(var)
        .zip(es)
        .map(|((r, q), e)| al_term(*r, *q, *e, alpha))
        .collect();
    let valid = per_day.iter().all(|x| x.is_finite());
    let total = if valid {
        per_day.iter().sum()
    } else {
        f64::NEG_INFINITY
    };
    Ok(LossReport {
        total,
        per_day: Some(per_day),
        valid,
    })
}

/// AL log-likelihood of a model path; `-inf` when the path is invalid.
pub fn al_loglik(returns: &[f64], path: &RiskPath, alpha: f64) -> f64 {
    if !path.is_valid() || returns.len() != path.len() {
        return f64::NEG_INFINITY;
    }
    let mut total = 0.0;
    for ((r, q), e) in returns.iter().zip(&path.mu).zip(&path.es) {
        total += al_term(*r, *q, *e, alpha);
    }
    if total.is_nan() {
        f64::NEG_INFINITY
    } else {
        total
    }
}

/// Gaussian log-density of measurement residuals with standard deviation `sigma`.
pub fn measurement_loglik(u: &[f64], sigma: f64) -> f64 {
    if !(sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    let s2 = sigma * sigma;
    let ss: f64 = u.iter().map(|x| x * x).sum();
    -0.5 * (u.len() as f64 * ((2.0 * PI).ln() + s2.ln()) + ss / s2)
}

/// AL log-likelihood plus the measurement-equation log-likelihood.
pub fn full_loglik(returns: &[f64], path: &RiskPath, params: &ParamVector, alpha: f64) -> f64 {
    let (Some(u), Some(sigma)) = (path.u.as_ref(), params.get("sigma_u")) else {
        return f64::NEG_INFINITY;
    };
    let al = al_loglik(returns, path, alpha);
    if al == f64::NEG_INFINITY {
        return al;
    }
    al + measurement_loglik(u, sigma)
}

/// Quantile (pinball) loss `sum (alpha - I(r < Q)) (r - Q)`.
pub fn quantile_loss(returns: &[f64], var: &[f64], alpha: f64) -> Result<f64> {
    Ok(quantile_loss_per_day(returns, var, alpha)?.iter().sum())
}

pub fn quantile_loss_per_day(returns: &[f64], var: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_aligned(returns.len(), var.len())?;
    Ok(returns
        .iter()
        .zip(var)
        .map(|(r, q)| {
            let hit = if r < q { 1.0 } else { 0.0 };
            (alpha - hit) * (r - q)
        })
        .collect())
}

/// Fissler-Ziegel joint loss in the AL form (negated AL log-likelihood).
pub fn fz_loss(returns: &[f64], var: &[f64], es: &[f64], alpha: f64) -> Result<LossReport> {
    check_aligned(returns.len(), var.len())?;
    check_aligned(returns.len(), es.len())?;
    if let Some(t) = es.iter().position(|e| !(*e < 0.0)) {
        return Err(Error::Domain(format!("ES forecast on day {t} is not negative")));
    }
    let per_day: Vec<f64> = returns
        .iter()
        .zip(var)
        .zip(es)
        .map(|((r, q), e)| {
            let hit = if r <= q { 1.0 } else { 0.0 };
            (-e).ln() - (1.0 - alpha).ln() - (r - q) * (alpha - hit) / (alpha * e)
        })
        .collect();
    Ok(LossReport {
        total: per_day.iter().sum(),
        per_day: Some(per_day),
        valid: true,
    })
}

/// Sufficient statistics of one expectile path.
#[derive(Debug, Clone)]
struct PathStats {
    betas: Vec<f64>,
    valid: bool,
    mu_last: f64,
    /// `sum ln(-mu_t)`
    sum_ln_neg_mu: f64,
    /// `sum (r_t - mu_t)(alpha - I(r_t <= mu_t)) / mu_t`
    sum_check: f64,
    /// Gram matrix of `[X, 1, |mu|, eps, eps^2 - mean(eps^2)]`.
    gram: [[f64; 5]; 5],
}

/// Log-likelihood evaluator for one data window.
///
/// For the proportional families the AL part depends on `tau` only through
/// `F`, and the measurement residuals are linear in `(xi, phi, delta1,
/// delta2)`, so the path is recomputed only when the betas change. The two
/// most recent paths are cached, which makes updates of `tau` and of the
/// measurement block O(1).
pub struct Likelihood<'a> {
    spec: ModelSpec,
    returns: &'a [f64],
    measures: Option<&'a [f64]>,
    driver: Vec<f64>,
    init: InitRule,
    mu0: f64,
    slots: [Option<PathStats>; 2],
    next_slot: usize,
    scratch: Vec<f64>,
}

impl<'a> Likelihood<'a> {
    pub fn new(
        spec: &ModelSpec,
        returns: &'a [f64],
        measures: Option<&'a [f64]>,
        init: InitRule,
    ) -> Result<Self> {
        spec.validate()?;
        if returns.is_empty() {
            return Err(Error::InsufficientData("empty return window".into()));
        }
        let driver = if spec.family.needs_measure() {
            let x = measures.ok_or_else(|| Error::invalid(format!("{} needs measures", spec.family)))?;
            check_aligned(returns.len(), x.len())?;
            if x.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::invalid("realized measures must be strictly positive"));
            }
            x.to_vec()
        } else {
            returns.iter().map(|r| r.abs()).collect()
        };
        let mu0 = init.initial_mu(returns, spec.alpha)?;
        Ok(Self {
            spec: spec.clone(),
            returns,
            measures: if spec.family.needs_measure() { measures } else { None },
            driver,
            init,
            mu0,
            slots: [None, None],
            next_slot: 0,
            scratch: Vec::with_capacity(returns.len()),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn returns(&self) -> &'a [f64] {
        self.returns
    }

    pub fn measures(&self) -> Option<&'a [f64]> {
        self.measures
    }

    pub fn init(&self) -> InitRule {
        self.init
    }

    pub fn family(&self) -> Family {
        self.spec.family
    }

    /// Full path for a parameter vector, using the slow reference recursions.
    pub fn path(&self, params: &ParamVector) -> Result<RiskPath> {
        models::run_model(&self.spec, params, self.returns, self.measures, self.init)
    }

    fn stats_for(&mut self, betas: &[f64]) -> &PathStats {
        if let Some(i) = self
            .slots
            .iter()
            .position(|s| s.as_ref().is_some_and(|s| s.betas == betas))
        {
            return self.slots[i].as_ref().unwrap();
        }
        let stats = self.compute_stats(betas);
        let i = self.next_slot;
        self.next_slot = 1 - i;
        self.slots[i] = Some(stats);
        self.slots[i].as_ref().unwrap()
    }

    fn compute_stats(&mut self, betas: &[f64]) -> PathStats {
        let mut mu = std::mem::take(&mut self.scratch);
        models::expectile_path(betas, &self.driver, self.returns, self.spec.threshold, self.mu0, &mut mu);
        let alpha = self.spec.alpha;
        let valid = mu.iter().all(|m| *m < 0.0 && m.is_finite());
        let mut stats = PathStats {
            betas: betas.to_vec(),
            valid,
            mu_last: *mu.last().unwrap(),
            sum_ln_neg_mu: 0.0,
            sum_check: 0.0,
            gram: [[0.0; 5]; 5],
        };
        if valid {
            for (r, m) in self.returns.iter().zip(&mu) {
                let hit = if r <= m { 1.0 } else { 0.0 };
                stats.sum_ln_neg_mu += (-m).ln();
                stats.sum_check += (r - m) * (alpha - hit) / m;
            }
            if let Some(x) = self.measures {
                let n = mu.len() as f64;
                let eps_sq_mean = self.returns.iter().zip(&mu).map(|(r, m)| (r / m).powi(2)).sum::<f64>() / n;
                let g = &mut stats.gram;
                for ((xt, r), m) in x.iter().zip(self.returns).zip(&mu) {
                    let e = r / m;
                    let v = [*xt, 1.0, m.abs(), e, e * e - eps_sq_mean];
                    for i in 0..5 {
                        for j in i..5 {
                            g[i][j] += v[i] * v[j];
                        }
                    }
                }
                for i in 0..5 {
                    for j in 0..i {
                        g[i][j] = g[j][i];
                    }
                }
            }
        }
        self.scratch = mu;
        stats
    }

    /// Log-likelihood at `values` (stored in family order); `-inf` outside
    /// the admissible region or on an invalid path.
    pub fn loglik(&mut self, values: &[f64]) -> f64 {
        let family = self.spec.family;
        let Ok(params) = ParamVector::new(family, values.to_vec()) else {
            return f64::NEG_INFINITY;
        };
        if !params.in_region(self.spec.alpha) {
            return f64::NEG_INFINITY;
        }
        if !matches!(family, Family::EsCare | Family::ReEsCare | Family::ReTEsCare) {
            return match self.path(&params) {
                Ok(p) => al_loglik(self.returns, &p, self.spec.alpha),
                Err(_) => f64::NEG_INFINITY,
            };
        }
        let alpha = self.spec.alpha;
        let n = self.returns.len() as f64;
        let nb = family.n_betas();
        let tau = values[nb];
        let f = models::scaling_factor_unchecked(tau, alpha);
        let has_measure = self.measures.is_some();
        let stats = self.stats_for(&values[..nb]);
        if !stats.valid {
            return f64::NEG_INFINITY;
        }
        let al = n * ((1.0 - alpha).ln() - f.ln()) - stats.sum_ln_neg_mu + stats.sum_check / (alpha * f);
        if !has_measure {
            return al;
        }
        let m = &values[nb + 1..];
        let (xi, phi, d1, d2, sigma) = (m[0], m[1], m[2], m[3], m[4]);
        let c = [1.0, -xi, -phi, -d1, -d2];
        let g = &stats.gram;
        let mut ss = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                ss += c[i] * g[i][j] * c[j];
            }
        }
        let s2 = sigma * sigma;
        let ll = al - 0.5 * (n * ((2.0 * PI).ln() + s2.ln()) + ss.max(0.0) / s2);
        if ll.is_nan() {
            f64::NEG_INFINITY
        } else {
            ll
        }
    }

    /// Last in-sample expectile for a beta vector (from the cache when possible).
    pub fn last_mu(&mut self, betas: &[f64]) -> f64 {
        self.stats_for(betas).mu_last
    }
}
