//! Simulation models with a realized measure and their true risk quantities.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{write_daily_returns, ReturnSeries};
use crate::error::{Error, Result};
use crate::models::{Family, ParamVector};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimModel {
    /// Single-regime volatility driven by the lagged measure.
    SimModel1,
    /// Two volatility regimes keyed on the sign of the lagged return.
    SimModel2,
}

impl SimModel {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "1" | "model1" | "sim-model-1" => Ok(SimModel::SimModel1),
            "2" | "model2" | "sim-model-2" => Ok(SimModel::SimModel2),
            _ => Err(Error::invalid(format!("unknown simulation model '{s}'"))),
        }
    }

    /// Volatility coefficients `(a, b, c)` per regime in
    /// `sqrt(h_t) = a + b X_{t-1} + c sqrt(h_{t-1})`; the first regime applies
    /// when `r_{t-1} <= 0`.
    pub fn regimes(self) -> &'static [[f64; 3]] {
        match self {
            SimModel::SimModel1 => &[[0.02, 0.10, 0.85]],
            SimModel::SimModel2 => &[[0.05, 0.20, 0.80], [0.10, 0.10, 0.75]],
        }
    }
}

/// Measurement equation `X_t = XI + PHI sqrt(h_t) + D1 e_t + D2 (e_t^2 - 1) + u_t`.
pub const XI: f64 = 0.1;
pub const PHI: f64 = 0.9;
pub const D1: f64 = -0.02;
pub const D2: f64 = 0.02;
pub const SIGMA_U: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub model: SimModel,
    pub n: usize,
    pub seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

fn default_burn_in() -> usize {
    200
}

impl DgpSpec {
    pub fn new(model: SimModel, n: usize, seed: u64) -> Self {
        Self {
            model,
            n,
            seed,
            burn_in: default_burn_in(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimData {
    pub returns: Vec<f64>,
    pub measures: Vec<f64>,
    pub sqrt_h: Vec<f64>,
    /// Volatility of the first out-of-sample day.
    pub sqrt_h_next: f64,
}

/// One step of the data-generating process.
///
/// Returns `(sqrt_h_t, r_t, X_t)` given the previous day's state, the return
/// shock `eps` and the measurement noise `u`.
pub fn dgp_step(model: SimModel, prev_x: f64, prev_sqrt_h: f64, prev_r: f64, eps: f64, u: f64) -> (f64, f64, f64) {
    let sqrt_h = next_sqrt_h(model, prev_x, prev_sqrt_h, prev_r);
    let x = XI + PHI * sqrt_h + D1 * eps + D2 * (eps * eps - 1.0) + u;
    (sqrt_h, sqrt_h * eps, x)
}

fn next_sqrt_h(model: SimModel, prev_x: f64, prev_sqrt_h: f64, prev_r: f64) -> f64 {
    let regimes = model.regimes();
    let [a, b, c] = if prev_r <= 0.0 || regimes.len() == 1 {
        regimes[0]
    } else {
        regimes[1]
    };
    a + b * prev_x + c * prev_sqrt_h
}

/// Stationary mean of `sqrt(h)`, averaging regimes with equal weight.
pub fn unconditional_sqrt_h(model: SimModel) -> f64 {
    let regimes = model.regimes();
    let k = regimes.len() as f64;
    let avg = |i: usize| regimes.iter().map(|r| r[i]).sum::<f64>() / k;
    let (a, b, c) = (avg(0), avg(1), avg(2));
    (a + b * XI) / (1.0 - c - b * PHI)
}

/// Simulate `spec.n` days after discarding `spec.burn_in` pre-sample days.
///
/// Measurement noise is redrawn until `X_t > 0`, so the measure is always a
/// valid positive realized quantity.
pub fn simulate(spec: &DgpSpec) -> Result<SimData> {
    if spec.n < 100 {
        return Err(Error::invalid(format!("n = {} is below the minimum of 100", spec.n)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, SIGMA_U).expect("valid sd");
    let mut sqrt_h = unconditional_sqrt_h(spec.model);
    let mut x = XI + PHI * sqrt_h;
    let mut r = 0.0;
    let total = spec.burn_in + spec.n;
    let mut out = SimData {
        returns: Vec::with_capacity(spec.n),
        measures: Vec::with_capacity(spec.n),
        sqrt_h: Vec::with_capacity(spec.n),
        sqrt_h_next: 0.0,
    };
    for t in 0..total {
        let eps: f64 = StandardNormal.sample(&mut rng);
        let mut step = dgp_step(spec.model, x, sqrt_h, r, eps, noise.sample(&mut rng));
        while step.2 <= 0.0 {
            step = dgp_step(spec.model, x, sqrt_h, r, eps, noise.sample(&mut rng));
        }
        (sqrt_h, r, x) = step;
        if t >= spec.burn_in {
            out.sqrt_h.push(sqrt_h);
            out.returns.push(r);
            out.measures.push(x);
        }
    }
    out.sqrt_h_next = next_sqrt_h(spec.model, x, sqrt_h, r);
    Ok(out)
}

/// True risk-model parameters implied by the data-generating process.
pub fn map_to_escare(model: SimModel, alpha: f64) -> Result<ParamVector> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::invalid(format!("alpha {alpha} outside (0, 0.5)")));
    }
    let z = stats::normal_quantile(alpha);
    let tau = true_tau(alpha);
    let measurement = [tau, XI, -PHI / z, D1 * z, D2 * z * z, SIGMA_U];
    let mut values: Vec<f64> = model
        .regimes()
        .iter()
        .flat_map(|[a, b, c]| [a * z, b * z, *c])
        .collect();
    values.extend(measurement);
    let family = match model {
        SimModel::SimModel1 => Family::ReEsCare,
        SimModel::SimModel2 => Family::ReTEsCare,
    };
    ParamVector::new(family, values)
}

/// Expectile level whose ES scaling factor equals the Gaussian ES/VaR ratio.
pub fn true_tau(alpha: f64) -> f64 {
    let z = stats::normal_quantile(alpha);
    let g = stats::normal_pdf(z) / (alpha * -z) - 1.0;
    g * alpha / (1.0 + 2.0 * g * alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueRisk {
    pub var: Vec<f64>,
    pub es: Vec<f64>,
    pub tau: f64,
}

/// Gaussian VaR and ES along a volatility path.
pub fn true_risk(sqrt_h: &[f64], alpha: f64) -> Result<TrueRisk> {
    if sqrt_h.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::invalid("volatilities must be positive"));
    }
    let z = stats::normal_quantile(alpha);
    let es_mult = -stats::normal_pdf(z) / alpha;
    Ok(TrueRisk {
        var: sqrt_h.iter().map(|s| s * z).collect(),
        es: sqrt_h.iter().map(|s| s * es_mult).collect(),
        tau: true_tau(alpha),
    })
}

/// Ground truth written next to each simulated replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub model: SimModel,
    pub seed: u64,
    pub alpha: f64,
    pub sqrt_h_next: f64,
    pub var_next: f64,
    pub es_next: f64,
    pub params: ParamVector,
}

/// Write `rep_XXXX.csv` (`date,return,x,sqrt_h`) and `rep_XXXX.truth.json`.
pub fn write_replicate(dir: &Path, index: usize, spec: &DgpSpec, data: &SimData, alpha: f64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let series = ReturnSeries::from_returns(data.returns.clone())?
        .with_measure("x", data.measures.iter().map(|v| Some(*v)).collect())?
        .with_measure("sqrt_h", data.sqrt_h.iter().map(|v| Some(*v)).collect())?;
    write_daily_returns(dir.join(format!("rep_{index:04}.csv")), &series)?;
    let next = true_risk(&[data.sqrt_h_next], alpha)?;
    let truth = Truth {
        model: spec.model,
        seed: spec.seed,
        alpha,
        sqrt_h_next: data.sqrt_h_next,
        var_next: next.var[0],
        es_next: next.es[0],
        params: map_to_escare(spec.model, alpha)?,
    };
    let f = std::fs::File::create(dir.join(format!("rep_{index:04}.truth.json")))?;
    serde_json::to_writer_pretty(f, &truth)?;
    Ok(())
}

/// Seed of replicate `index` derived from a base seed.
pub fn replicate_seed(base: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index as u64 + 1);
    rng.random()
}
