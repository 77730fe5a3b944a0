//! Model families, parameter vectors and the day-by-day VaR/ES recursions.
//!
//! Index convention: day `t = 0` is the first in-sample day and carries the
//! initial state; day `t` is driven by the return (or realized measure) of
//! day `t - 1`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    CareSav,
    EsCaviarAdd,
    EsCaviarMult,
    EsCare,
    ReEsCare,
    ReTEsCare,
}

const CARE_SAV: &[&str] = &["beta1", "beta2", "beta3", "tau"];
const ES_CAVIAR_ADD: &[&str] = &["beta1", "beta2", "beta3", "gamma0", "gamma1", "gamma2"];
const ES_CAVIAR_MULT: &[&str] = &["beta1", "beta2", "beta3", "gamma0"];
const ES_CARE: &[&str] = &["beta1", "beta2", "beta3", "tau"];
const RE_ES_CARE: &[&str] = &[
    "beta1", "beta2", "beta3", "tau", "xi", "phi", "delta1", "delta2", "sigma_u",
];
const RE_T_ES_CARE: &[&str] = &[
    "beta1", "beta2", "beta3", "beta4", "beta5", "beta6", "tau", "xi", "phi", "delta1", "delta2",
    "sigma_u",
];

impl Family {
    pub const ALL: [Family; 6] = [
        Family::CareSav,
        Family::EsCaviarAdd,
        Family::EsCaviarMult,
        Family::EsCare,
        Family::ReEsCare,
        Family::ReTEsCare,
    ];

    /// Parameter names in storage order. For CARE-SAV `tau` is not estimated
    /// by likelihood; it is supplied by the grid search.
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Family::CareSav => CARE_SAV,
            Family::EsCaviarAdd => ES_CAVIAR_ADD,
            Family::EsCaviarMult => ES_CAVIAR_MULT,
            Family::EsCare => ES_CARE,
            Family::ReEsCare => RE_ES_CARE,
            Family::ReTEsCare => RE_T_ES_CARE,
        }
    }

    pub fn dim(self) -> usize {
        self.param_names().len()
    }

    pub fn n_betas(self) -> usize {
        if self == Family::ReTEsCare {
            6
        } else {
            3
        }
    }

    pub fn needs_measure(self) -> bool {
        matches!(self, Family::ReEsCare | Family::ReTEsCare)
    }

    /// Families whose ES path is a fixed multiple of the expectile path.
    pub fn is_proportional(self) -> bool {
        matches!(
            self,
            Family::CareSav | Family::EsCare | Family::ReEsCare | Family::ReTEsCare
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::CareSav => "care-sav",
            Family::EsCaviarAdd => "es-caviar-add",
            Family::EsCaviarMult => "es-caviar-mult",
            Family::EsCare => "es-care",
            Family::ReEsCare => "re-es-care",
            Family::ReTEsCare => "re-t-es-care",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        Family::ALL
            .into_iter()
            .find(|f| f.name() == key)
            .ok_or_else(|| Error::invalid(format!("unknown model family '{s}'")))
    }

    pub fn index_of(self, name: &str) -> Option<usize> {
        self.param_names().iter().position(|n| *n == name)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Model family plus the settings that are not estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub measure_id: Option<String>,
    /// Threshold on the lagged return; the lower regime applies when `r[t-1] <= threshold`.
    #[serde(default)]
    pub threshold: f64,
}

fn default_alpha() -> f64 {
    0.01
}

impl ModelSpec {
    pub fn new(family: Family, alpha: f64) -> Self {
        Self {
            family,
            alpha,
            measure_id: None,
            threshold: 0.0,
        }
    }

    pub fn with_measure(mut self, id: impl Into<String>) -> Self {
        self.measure_id = Some(id.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::invalid(format!("alpha {} outside (0, 0.5)", self.alpha)));
        }
        if self.family.needs_measure() && self.measure_id.is_none() {
            return Err(Error::invalid(format!(
                "{} requires a realized measure",
                self.family
            )));
        }
        Ok(())
    }

    /// Label used in forecast files, e.g. `re-es-care-ssrr`.
    pub fn label(&self) -> String {
        match &self.measure_id {
            Some(m) if self.family.needs_measure() => format!("{}-{}", self.family, m),
            _ => self.family.to_string(),
        }
    }
}

/// Named parameter vector for one family, stored in [`Family::param_names`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub family: Family,
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn new(family: Family, values: Vec<f64>) -> Result<Self> {
        if values.len() != family.dim() {
            return Err(Error::invalid(format!(
                "{family} takes {} parameters, got {}",
                family.dim(),
                values.len()
            )));
        }
        Ok(Self { family, values })
    }

    pub fn from_named(family: Family, named: &BTreeMap<String, f64>) -> Result<Self> {
        let values = family
            .param_names()
            .iter()
            .map(|n| {
                named
                    .get(*n)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("missing parameter '{n}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(family, values)
    }

    pub fn named(&self) -> BTreeMap<String, f64> {
        self.family
            .param_names()
            .iter()
            .zip(&self.values)
            .map(|(n, v)| (n.to_string(), *v))
            .collect()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.family.index_of(name).map(|i| self.values[i])
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let i = self
            .family
            .index_of(name)
            .ok_or_else(|| Error::invalid(format!("{} has no parameter '{name}'", self.family)))?;
        self.values[i] = value;
        Ok(())
    }

    pub fn betas(&self) -> &[f64] {
        &self.values[..self.family.n_betas()]
    }

    pub fn tau(&self) -> Option<f64> {
        self.get("tau")
    }

    /// Membership in the admissible region: `0 < tau < alpha`, `beta3 < 1`
    /// (and `beta6 < 1`), `sigma_u > 0`, non-negative ES-CAViaR-Add gammas.
    pub fn check_region(&self, alpha: f64) -> Result<()> {
        let v = &self.values;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("non-finite parameter".into()));
        }
        if let Some(tau) = self.tau() {
            if !(tau > 0.0 && tau < alpha) {
                return Err(Error::Domain(format!("tau {tau} outside (0, {alpha})")));
            }
        }
        if v[2] >= 1.0 {
            return Err(Error::Domain(format!("beta3 {} must be < 1", v[2])));
        }
        if self.family == Family::ReTEsCare && v[5] >= 1.0 {
            return Err(Error::Domain(format!("beta6 {} must be < 1", v[5])));
        }
        if let Some(s) = self.get("sigma_u") {
            if s <= 0.0 {
                return Err(Error::Domain(format!("sigma_u {s} must be > 0")));
            }
        }
        if self.family == Family::EsCaviarAdd && v[3..6].iter().any(|g| *g < 0.0) {
            return Err(Error::Domain("ES-CAViaR-Add gammas must be >= 0".into()));
        }
        Ok(())
    }

    pub fn in_region(&self, alpha: f64) -> bool {
        self.check_region(alpha).is_ok()
    }
}

/// Per-day expectile (VaR) and ES paths produced by a model recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskPath {
    pub mu: Vec<f64>,
    pub es: Vec<f64>,
    /// Multiplicative errors `r_t / mu_t` (realized families).
    pub eps: Option<Vec<f64>>,
    /// Measurement residuals (realized families).
    pub u: Option<Vec<f64>>,
    /// Sample mean of `eps_t^2` used in the measurement equation.
    pub eps_sq_mean: Option<f64>,
    /// VaR-to-ES gap of ES-CAViaR-Add.
    pub w: Option<Vec<f64>>,
    /// First day where `es < mu < 0` fails, if any.
    pub invalid_at: Option<usize>,
}

impl RiskPath {
    pub fn is_valid(&self) -> bool {
        self.invalid_at.is_none()
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
}

/// How the day-0 expectile is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitRule {
    /// Empirical alpha-quantile of the first `min(window, n)` returns.
    EmpiricalQuantile { window: usize },
    Fixed { mu: f64 },
}

impl Default for InitRule {
    fn default() -> Self {
        InitRule::EmpiricalQuantile { window: 100 }
    }
}

impl InitRule {
    pub fn initial_mu(&self, returns: &[f64], alpha: f64) -> Result<f64> {
        match *self {
            InitRule::Fixed { mu } => Ok(mu),
            InitRule::EmpiricalQuantile { window } => {
                if returns.is_empty() {
                    return Err(Error::InsufficientData("empty return series".into()));
                }
                let k = window.clamp(1, returns.len());
                Ok(stats::quantile(&returns[..k], alpha))
            }
        }
    }
}

/// ES-to-expectile ratio `1 + tau / ((1 - 2 tau) alpha)`.
pub fn es_scaling_factor(tau: f64, alpha: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < alpha && alpha < 0.5) {
        return Err(Error::Domain(format!(
            "need 0 < tau < alpha < 0.5, got tau={tau}, alpha={alpha}"
        )));
    }
    Ok(scaling_factor_unchecked(tau, alpha))
}

#[inline]
pub(crate) fn scaling_factor_unchecked(tau: f64, alpha: f64) -> f64 {
    1.0 + tau / ((1.0 - 2.0 * tau) * alpha)
}

/// ES/VaR ratio of a Gaussian return at level `alpha`.
pub fn gaussian_es_ratio(alpha: f64) -> f64 {
    let z = stats::normal_quantile(alpha);
    stats::normal_pdf(z) / (alpha * -z)
}

/// Expectile recursion `mu[t] = b1 + b2 driver[t-1] + b3 mu[t-1]`, with a second
/// coefficient set `(b4, b5, b6)` used when `betas` has six entries and
/// `returns[t-1] > threshold`.
pub(crate) fn expectile_path(
    betas: &[f64],
    driver: &[f64],
    returns: &[f64],
    threshold: f64,
    mu0: f64,
    out: &mut Vec<f64>,
) {
    let n = driver.len();
    out.clear();
    out.reserve(n);
    if n == 0 {
        return;
    }
    out.push(mu0);
    let mut prev = mu0;
    if betas.len() == 6 {
        for t in 1..n {
            let b = if returns[t - 1] <= threshold {
                &betas[..3]
            } else {
                &betas[3..]
            };
            prev = b[0] + b[1] * driver[t - 1] + b[2] * prev;
            out.push(prev);
        }
    } else {
        let (b1, b2, b3) = (betas[0], betas[1], betas[2]);
        for &d in &driver[..n - 1] {
            prev = b1 + b2 * d + b3 * prev;
            out.push(prev);
        }
    }
}

/// ES recursion with every intercept and driver coefficient scaled by `factor`.
fn scaled_es_path(
    betas: &[f64],
    factor: f64,
    driver: &[f64],
    returns: &[f64],
    threshold: f64,
    es0: f64,
) -> Vec<f64> {
    let scaled: Vec<f64> = betas
        .chunks(3)
        .flat_map(|b| [b[0] * factor, b[1] * factor, b[2]])
        .collect();
    let mut out = Vec::new();
    expectile_path(&scaled, driver, returns, threshold, es0, &mut out);
    out
}

fn first_crossing(mu: &[f64], es: &[f64]) -> Option<usize> {
    mu.iter()
        .zip(es)
        .position(|(m, e)| !(*e < *m && *m < 0.0 && e.is_finite()))
}

fn abs_returns(returns: &[f64]) -> Vec<f64> {
    returns.iter().map(|r| r.abs()).collect()
}

fn check_family(params: &ParamVector, expected: &[Family]) -> Result<()> {
    if expected.contains(&params.family) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "parameters for {} passed to a {:?} recursion",
            params.family, expected
        )))
    }
}

fn proportional_path(
    params: &ParamVector,
    driver: &[f64],
    returns: &[f64],
    alpha: f64,
    threshold: f64,
    init: InitRule,
) -> Result<RiskPath> {
    params.check_region(alpha)?;
    let tau = params.tau().expect("proportional families carry tau");
    let factor = es_scaling_factor(tau, alpha)?;
    let mu0 = init.initial_mu(returns, alpha)?;
    let mut mu = Vec::new();
    expectile_path(params.betas(), driver, returns, threshold, mu0, &mut mu);
    let es = scaled_es_path(params.betas(), factor, driver, returns, threshold, factor * mu0);
    let invalid_at = first_crossing(&mu, &es);
    Ok(RiskPath {
        mu,
        es,
        eps: None,
        u: None,
        eps_sq_mean: None,
        w: None,
        invalid_at,
    })
}

/// ES-CARE: symmetric-absolute-value expectile recursion with ES scaled by
/// [`es_scaling_factor`].
pub fn run_es_care(params: &ParamVector, returns: &[f64], alpha: f64, init: InitRule) -> Result<RiskPath> {
    check_family(params, &[Family::EsCare])?;
    proportional_path(params, &abs_returns(returns), returns, alpha, 0.0, init)
}

fn attach_measurement(path: &mut RiskPath, params: &ParamVector, returns: &[f64], measures: &[f64]) -> Result<()> {
    if let Some(t) = path.mu.iter().position(|m| *m == 0.0) {
        return Err(Error::Numerical(format!("zero expectile on day {t}")));
    }
    let g = |n: &str| params.get(n).expect("realized family parameter");
    let (xi, phi, d1, d2) = (g("xi"), g("phi"), g("delta1"), g("delta2"));
    let eps: Vec<f64> = returns.iter().zip(&path.mu).map(|(r, m)| r / m).collect();
    let eps_sq_mean = eps.iter().map(|e| e * e).sum::<f64>() / eps.len() as f64;
    let u = measures
        .iter()
        .zip(&path.mu)
        .zip(&eps)
        .map(|((x, m), e)| x - xi - phi * m.abs() - d1 * e - d2 * (e * e - eps_sq_mean))
        .collect();
    path.eps = Some(eps);
    path.u = Some(u);
    path.eps_sq_mean = Some(eps_sq_mean);
    Ok(())
}

fn check_measures(returns: &[f64], measures: &[f64]) -> Result<()> {
    if measures.len() != returns.len() {
        return Err(Error::invalid(format!(
            "{} measures for {} returns",
            measures.len(),
            returns.len()
        )));
    }
    if measures.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::invalid("realized measures must be strictly positive"));
    }
    Ok(())
}

/// Realized-ES-CARE: expectile and ES driven by the lagged realized measure,
/// plus the measurement-equation residuals.
pub fn run_re_es_care(
    params: &ParamVector,
    returns: &[f64],
    measures: &[f64],
    alpha: f64,
    init: InitRule,
) -> Result<RiskPath> {
    check_family(params, &[Family::ReEsCare])?;
    check_measures(returns, measures)?;
    let mut path = proportional_path(params, measures, returns, alpha, 0.0, init)?;
    attach_measurement(&mut path, params, returns, measures)?;
    Ok(path)
}

/// Realized-Threshold-ES-CARE with the self-exciting regime `r[t-1] <= threshold`.
pub fn run_re_t_es_care(
    params: &ParamVector,
    returns: &[f64],
    measures: &[f64],
    alpha: f64,
    threshold: f64,
    init: InitRule,
) -> Result<RiskPath> {
    check_family(params, &[Family::ReTEsCare])?;
    check_measures(returns, measures)?;
    let mut path = proportional_path(params, measures, returns, alpha, threshold, init)?;
    attach_measurement(&mut path, params, returns, measures)?;
    Ok(path)
}

/// CARE-SAV, ES-CAViaR-Add and ES-CAViaR-Mult.
pub fn run_baseline(params: &ParamVector, returns: &[f64], alpha: f64, init: InitRule) -> Result<RiskPath> {
    check_family(
        params,
        &[Family::CareSav, Family::EsCaviarAdd, Family::EsCaviarMult],
    )?;
    if params.family == Family::CareSav {
        return proportional_path(params, &abs_returns(returns), returns, alpha, 0.0, init);
    }
    params.check_region(alpha)?;
    let mu0 = init.initial_mu(returns, alpha)?;
    let mut q = Vec::new();
    expectile_path(params.betas(), &abs_returns(returns), returns, 0.0, mu0, &mut q);
    let v = &params.values;
    let (es, w) = if params.family == Family::EsCaviarMult {
        let factor = 1.0 + v[3].exp();
        (q.iter().map(|x| factor * x).collect::<Vec<_>>(), None)
    } else {
        let (g0, g1, g2) = (v[3], v[4], v[5]);
        let mut w = Vec::with_capacity(q.len());
        if !q.is_empty() {
            w.push((gaussian_es_ratio(alpha) - 1.0) * mu0.abs());
        }
        for t in 1..q.len() {
            let prev = w[t - 1];
            w.push(if returns[t - 1] <= q[t - 1] {
                g0 + g1 * (q[t - 1] - returns[t - 1]) + g2 * prev
            } else {
                prev
            });
        }
        (q.iter().zip(&w).map(|(a, b)| a - b).collect(), Some(w))
    };
    let invalid_at = first_crossing(&q, &es);
    Ok(RiskPath {
        mu: q,
        es,
        eps: None,
        u: None,
        eps_sq_mean: None,
        w,
        invalid_at,
    })
}

/// Dispatch to the recursion matching `spec.family`.
pub fn run_model(
    spec: &ModelSpec,
    params: &ParamVector,
    returns: &[f64],
    measures: Option<&[f64]>,
    init: InitRule,
) -> Result<RiskPath> {
    if params.family != spec.family {
        return Err(Error::invalid(format!(
            "spec is {} but parameters are {}",
            spec.family, params.family
        )));
    }
    let need = || {
        measures.ok_or_else(|| Error::invalid(format!("{} requires measures", spec.family)))
    };
    match spec.family {
        Family::EsCare => run_es_care(params, returns, spec.alpha, init),
        Family::ReEsCare => run_re_es_care(params, returns, need()?, spec.alpha, init),
        Family::ReTEsCare => {
            run_re_t_es_care(params, returns, need()?, spec.alpha, spec.threshold, init)
        }
        _ => run_baseline(params, returns, spec.alpha, init),
    }
}

/// Apply the family recursion once from the last in-sample day.
///
/// `last_return` and `last_measure` are the observations of the final
/// in-sample day; the result is the `(VaR, ES)` forecast for the next day.
pub fn forecast_one_step(
    spec: &ModelSpec,
    params: &ParamVector,
    path: &RiskPath,
    last_return: f64,
    last_measure: Option<f64>,
) -> Result<(f64, f64)> {
    if !path.is_valid() {
        return Err(Error::Numerical("cannot forecast from an invalid path".into()));
    }
    let (mu, es) = match (path.mu.last(), path.es.last()) {
        (Some(m), Some(e)) => (*m, *e),
        _ => return Err(Error::InsufficientData("empty in-sample path".into())),
    };
    let family = params.family;
    let driver = if family.needs_measure() {
        last_measure.ok_or_else(|| Error::invalid(format!("{family} forecast needs X_n")))?
    } else {
        last_return.abs()
    };
    let betas = params.betas();
    let b = if betas.len() == 6 && last_return > spec.threshold {
        &betas[3..]
    } else {
        &betas[..3]
    };
    let var = b[0] + b[1] * driver + b[2] * mu;
    let es_next = match family {
        Family::EsCaviarMult => (1.0 + params.values[3].exp()) * var,
        Family::EsCaviarAdd => {
            let w = *path.w.as_ref().and_then(|w| w.last()).ok_or_else(|| {
                Error::invalid("ES-CAViaR-Add path is missing its w series")
            })?;
            let v = &params.values;
            let w_next = if last_return <= mu {
                v[3] + v[4] * (mu - last_return) + v[5] * w
            } else {
                w
            };
            var - w_next
        }
        _ => {
            let f = es_scaling_factor(params.tau().expect("tau"), spec.alpha)?;
            b[0] * f + b[1] * f * driver + b[2] * es
        }
    };
    Ok((var, es_next))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(family: Family, v: &[f64]) -> ParamVector {
        ParamVector::new(family, v.to_vec()).unwrap()
    }

    #[test]
    fn scaling_factor_examples() {
        assert!((es_scaling_factor(1e-12, 0.01).unwrap() - 1.0).abs() < 1e-9);
        assert!((es_scaling_factor(0.001461, 0.01).unwrap() - 1.146528).abs() < 5e-7);
        assert!((es_scaling_factor(0.005, 0.01).unwrap() - 1.505051).abs() < 5e-7);
        assert!(es_scaling_factor(0.0, 0.01).is_err());
        assert!(es_scaling_factor(0.02, 0.01).is_err());
    }

    #[test]
    fn constant_recursion() {
        let p = pv(Family::EsCare, &[-1.5, 0.0, 0.0, 0.002]);
        let r = [0.3, -1.0, 2.0, 0.1];
        let path = run_es_care(&p, &r, 0.01, InitRule::Fixed { mu: -1.5 }).unwrap();
        let f = es_scaling_factor(0.002, 0.01).unwrap();
        for (m, e) in path.mu.iter().zip(&path.es) {
            assert_eq!(*m, -1.5);
            assert!((e - (-1.5 * f)).abs() < 1e-12);
        }
    }

    #[test]
    fn one_step_by_hand() {
        let p = pv(Family::EsCare, &[-0.0465, -0.2326, 0.85, 0.0015]);
        let path = run_es_care(&p, &[2.0, 0.0], 0.01, InitRule::Fixed { mu: -1.0 }).unwrap();
        assert!((path.mu[1] - (-1.3617)).abs() < 1e-12);
    }

    #[test]
    fn measurement_by_hand() {
        // One-day path so that mu_0 = -2 is the fixed initial value.
        let p = pv(
            Family::ReEsCare,
            &[-0.05, -0.2, 0.8, 0.0015, 0.1, 0.3869, 0.0465, 0.1082, 0.3],
        );
        let path = run_re_es_care(&p, &[1.0], &[1.0], 0.01, InitRule::Fixed { mu: -2.0 }).unwrap();
        // With one day the sample mean of eps^2 is 0.25, matching the worked example.
        assert_eq!(path.eps_sq_mean, Some(0.25));
        assert_eq!(path.eps.as_ref().unwrap()[0], -0.5);
        assert!((path.u.as_ref().unwrap()[0] - 0.14945).abs() < 1e-12);
    }

    #[test]
    fn degenerate_measurement() {
        let p = pv(Family::ReEsCare, &[-1.0, 0.0, 0.0, 0.0015, 0.2, 0.0, 0.0, 0.0, 0.3]);
        let x = [0.7; 5];
        let path = run_re_es_care(&p, &[0.5, -0.4, 1.0, 0.2, -2.0], &x, 0.01, InitRule::Fixed { mu: -1.0 })
            .unwrap();
        for u in path.u.unwrap() {
            assert!((u - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_return_uses_lower_regime() {
        let p = pv(
            Family::ReTEsCare,
            &[-0.1, -0.2, 0.8, -0.3, -0.4, 0.7, 0.0015, 0.1, 0.4, 0.05, 0.1, 0.3],
        );
        let path =
            run_re_t_es_care(&p, &[0.0, 1.0], &[1.0, 1.0], 0.01, 0.0, InitRule::Fixed { mu: -2.0 }).unwrap();
        assert!((path.mu[1] - (-0.1 - 0.2 - 1.6)).abs() < 1e-12);
    }

    #[test]
    fn mult_factor_two() {
        let p = pv(Family::EsCaviarMult, &[-0.05, -0.2, 0.85, 0.0]);
        let path = run_baseline(&p, &[1.0, -2.0, 0.5], 0.01, InitRule::Fixed { mu: -2.0 }).unwrap();
        for (q, e) in path.mu.iter().zip(&path.es) {
            assert!((e - 2.0 * q).abs() < 1e-12);
        }
    }

    #[test]
    fn add_frozen_w() {
        let p = pv(Family::EsCaviarAdd, &[-0.05, -0.2, 0.85, 0.0, 0.0, 0.0]);
        let mu0 = -2.0;
        let path = run_baseline(&p, &[1.0, 0.5, 0.2, -0.3], 0.01, InitRule::Fixed { mu: mu0 }).unwrap();
        let w = path.w.unwrap();
        assert!(w.iter().all(|x| *x == w[0]));
        assert!((w[0] - (gaussian_es_ratio(0.01) - 1.0) * 2.0).abs() < 1e-12);
    }

    #[test]
    fn region_checks() {
        assert!(pv(Family::EsCare, &[-0.1, -0.2, 1.0, 0.001]).check_region(0.01).is_err());
        assert!(pv(Family::EsCare, &[-0.1, -0.2, 0.9, 0.01]).check_region(0.01).is_err());
        assert!(pv(Family::EsCaviarAdd, &[-0.1, -0.2, 0.9, -0.1, 0.0, 0.0]).check_region(0.01).is_err());
        assert!(ParamVector::new(Family::EsCare, vec![1.0]).is_err());
    }

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(Family::parse(f.name()).unwrap(), f);
        }
        assert!(Family::parse("garch").is_err());
        let spec = ModelSpec::new(Family::ReEsCare, 0.01);
        assert!(spec.validate().is_err());
        assert!(spec.with_measure("rv").validate().is_ok());
    }
}
