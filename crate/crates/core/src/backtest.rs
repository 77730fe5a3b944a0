//! VaR and ES forecast evaluation.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub reject_at_5pct: bool,
    pub dof: usize,
}

impl TestResult {
    pub fn chi2(statistic: f64, dof: usize) -> Self {
        let p_value = stats::chi2_sf(statistic, dof);
        Self {
            statistic,
            p_value,
            reject_at_5pct: p_value < 0.05,
            dof,
        }
    }
}

/// Violation indicators `I(r_t < VaR_t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitSeries {
    pub hits: Vec<bool>,
    pub alpha: f64,
}

impl HitSeries {
    pub fn new(returns: &[f64], var: &[f64], alpha: f64) -> Result<Self> {
        if returns.len() != var.len() {
            return Err(Error::invalid("returns and VaR forecasts differ in length"));
        }
        Self::from_hits(returns.iter().zip(var).map(|(r, q)| r < q).collect(), alpha)
    }

    pub fn from_hits(hits: Vec<bool>, alpha: f64) -> Result<Self> {
        if hits.is_empty() {
            return Err(Error::InsufficientData("no forecast days".into()));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!("alpha {alpha} outside (0, 1)")));
        }
        Ok(Self { hits, alpha })
    }

    pub fn m(&self) -> usize {
        self.hits.len()
    }

    pub fn count(&self) -> usize {
        self.hits.iter().filter(|h| **h).count()
    }
}

pub fn vrate(hits: &HitSeries) -> f64 {
    hits.count() as f64 / hits.m() as f64
}

/// `k ln p` with `0 ln 0 = 0`.
fn xlogy(k: f64, p: f64) -> f64 {
    if k == 0.0 {
        0.0
    } else {
        k * p.ln()
    }
}

fn bernoulli_loglik(ones: f64, zeros: f64, p: f64) -> f64 {
    xlogy(ones, p) + xlogy(zeros, 1.0 - p)
}

fn uc_statistic(hits: &HitSeries) -> f64 {
    let m = hits.m() as f64;
    let x = hits.count() as f64;
    let lr = -2.0 * (bernoulli_loglik(x, m - x, hits.alpha) - bernoulli_loglik(x, m - x, x / m));
    lr.max(0.0)
}

/// Kupiec unconditional coverage likelihood-ratio test.
pub fn kupiec_uc(hits: &HitSeries) -> TestResult {
    TestResult::chi2(uc_statistic(hits), 1)
}

/// First-order Markov independence LR statistic.
pub fn christoffersen_ind(hits: &HitSeries) -> Result<f64> {
    if hits.m() < 2 {
        return Err(Error::InsufficientData("need at least two forecast days".into()));
    }
    let mut n = [[0.0f64; 2]; 2];
    for w in hits.hits.windows(2) {
        n[usize::from(w[0])][usize::from(w[1])] += 1.0;
    }
    let row0 = n[0][0] + n[0][1];
    let row1 = n[1][0] + n[1][1];
    if row0 == 0.0 || row1 == 0.0 {
        log::warn!("degenerate transition counts; independence statistic set to 0");
        return Ok(0.0);
    }
    let pi01 = n[0][1] / row0;
    let pi11 = n[1][1] / row1;
    let pi = (n[0][1] + n[1][1]) / (row0 + row1);
    let restricted = bernoulli_loglik(n[0][1] + n[1][1], n[0][0] + n[1][0], pi);
    let unrestricted = bernoulli_loglik(n[0][1], n[0][0], pi01) + bernoulli_loglik(n[1][1], n[1][0], pi11);
    Ok((-2.0 * (restricted - unrestricted)).max(0.0))
}

/// Christoffersen conditional coverage test `LR_uc + LR_ind`.
pub fn christoffersen_cc(hits: &HitSeries) -> Result<TestResult> {
    Ok(TestResult::chi2(uc_statistic(hits) + christoffersen_ind(hits)?, 2))
}

fn solve_normal_equations(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let xtx = x.transpose() * x;
    let svd = xtx.clone().svd(false, false);
    let (max, min) = svd
        .singular_values
        .iter()
        .fold((0.0f64, f64::INFINITY), |(a, b), s| (a.max(*s), b.min(*s)));
    if !(min > 1e-10 * max) {
        return Err(Error::Numerical("singular regression design".into()));
    }
    let chol = xtx
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("singular regression design".into()))?;
    Ok((chol.solve(&(x.transpose() * y)), xtx))
}

/// Dynamic quantile test: regress `hit_t - alpha` on an intercept, `lags`
/// lagged hits and the VaR forecast.
pub fn dq_test(hits: &HitSeries, var: &[f64], lags: usize) -> Result<TestResult> {
    let m = hits.m();
    if var.len() != m {
        return Err(Error::invalid("hits and VaR forecasts differ in length"));
    }
    if m <= lags + 2 {
        return Err(Error::InsufficientData(format!("DQ with {lags} lags needs more than {} days", lags + 2)));
    }
    let alpha = hits.alpha;
    let rows = m - lags;
    let k = lags + 2;
    let h = |t: usize| if hits.hits[t] { 1.0 } else { 0.0 };
    let x = DMatrix::from_fn(rows, k, |i, j| {
        let t = i + lags;
        match j {
            0 => 1.0,
            j if j <= lags => h(t - j),
            _ => var[t],
        }
    });
    let y = DVector::from_fn(rows, |i, _| h(i + lags) - alpha);
    let (b, xtx) = solve_normal_equations(&x, &y)?;
    let stat = (b.transpose() * xtx * &b)[(0, 0)] / (alpha * (1.0 - alpha));
    Ok(TestResult::chi2(stat, k))
}

fn check_loss(r: &[f64], v: &[f64], a: f64, b: f64, alpha: f64) -> f64 {
    r.iter()
        .zip(v)
        .map(|(r, v)| {
            let u = r - a - b * v;
            u * (alpha - if u < 0.0 { 1.0 } else { 0.0 })
        })
        .sum()
}

/// Lower empirical `alpha`-quantile, a minimizer of the check loss over a constant.
fn check_quantile(xs: &mut [f64], alpha: f64) -> f64 {
    let k = ((alpha * xs.len() as f64).ceil() as usize).clamp(1, xs.len());
    *xs.select_nth_unstable_by(k - 1, f64::total_cmp).1
}

/// Linear quantile regression of `y` on `(1, x)` at level `alpha`.
///
/// The profile of the check loss over the slope (intercept concentrated out)
/// is convex, so the slope is found by golden-section search.
pub fn quantile_regression(y: &[f64], x: &[f64], alpha: f64) -> Result<(f64, f64)> {
    if y.len() != x.len() || y.is_empty() {
        return Err(Error::invalid("quantile regression needs aligned, non-empty data"));
    }
    let mut buf = vec![0.0; y.len()];
    let mut profile = |b: f64| {
        for ((o, yi), xi) in buf.iter_mut().zip(y).zip(x) {
            *o = yi - b * xi;
        }
        let a = check_quantile(&mut buf, alpha);
        (check_loss(y, x, a, b, alpha), a)
    };
    // Bracket the minimum by stepping away from slope 1.
    let (mut lo, mut hi) = (0.0, 2.0);
    let mut width = 1.0;
    let mut iterations = 0;
    while profile(lo).0 < profile(lo + 1e-3 * width).0 && iterations < 60 {
        lo -= width;
        width *= 2.0;
        iterations += 1;
    }
    width = 1.0;
    while profile(hi).0 < profile(hi - 1e-3 * width).0 && iterations < 120 {
        hi += width;
        width *= 2.0;
        iterations += 1;
    }
    if iterations >= 120 {
        return Err(Error::Numerical("quantile regression slope is unbounded".into()));
    }
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut d) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut fc, mut fd) = (profile(c).0, profile(d).0);
    for _ in 0..200 {
        if (hi - lo).abs() < 1e-12 * (1.0 + lo.abs()) {
            break;
        }
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = profile(c).0;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = profile(d).0;
        }
    }
    let b = 0.5 * (lo + hi);
    let a = profile(b).1;
    Ok((a, b))
}

/// Hall-Sheather bandwidth in probability units.
fn hall_sheather(m: usize, alpha: f64) -> f64 {
    let z = stats::normal_quantile(alpha);
    let za = stats::normal_quantile(0.975);
    let f = stats::normal_pdf(z);
    (m as f64).powf(-1.0 / 3.0) * za.powf(2.0 / 3.0) * (1.5 * f * f / (2.0 * z * z + 1.0)).powf(1.0 / 3.0)
}

/// VaR quantile-regression test of `(intercept, slope) = (0, 1)`.
pub fn vqr_test(returns: &[f64], var: &[f64], alpha: f64) -> Result<TestResult> {
    let m = returns.len();
    if var.len() != m {
        return Err(Error::invalid("returns and VaR forecasts differ in length"));
    }
    if m < 50 {
        return Err(Error::InsufficientData("VQR test needs at least 50 days".into()));
    }
    let (a, b) = quantile_regression(returns, var, alpha)?;
    // Hendricks-Koenker sandwich: per-day densities from the slope of the fitted
    // quantile line between levels alpha -/+ hn. The probability-scale bandwidth
    // must leave room below alpha.
    let hn = hall_sheather(m, alpha).min(0.9 * alpha).min(0.9 * (1.0 - alpha));
    let (a_lo, b_lo) = quantile_regression(returns, var, alpha - hn)?;
    let (a_hi, b_hi) = quantile_regression(returns, var, alpha + hn)?;
    let eps = f64::EPSILON.powf(2.0 / 3.0);
    let mut jm = DMatrix::zeros(2, 2);
    let mut hm = DMatrix::zeros(2, 2);
    let mut crossed = 0usize;
    for v in var {
        let xx = DMatrix::from_row_slice(2, 2, &[1.0, *v, *v, v * v]);
        let dq = (a_hi - a_lo) + (b_hi - b_lo) * v;
        if dq <= 0.0 {
            crossed += 1;
        }
        let f = (2.0 * hn / (dq - eps)).max(0.0);
        jm += &xx;
        hm += &xx * f;
    }
    if crossed > 0 {
        log::warn!("VQR: {crossed} day(s) with crossing quantile fits get zero density");
    }
    let hinv = hm
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular density-weighted design".into()))?;
    let cov = &hinv * jm * &hinv * (alpha * (1.0 - alpha));
    let cov_inv = cov
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular VQR covariance".into()))?;
    let theta = DVector::from_vec(vec![a, b - 1.0]);
    let stat = (theta.transpose() * cov_inv * &theta)[(0, 0)];
    Ok(TestResult::chi2(stat.max(0.0), 2))
}

/// Proportion of days with `r_t < ES_t`.
pub fn es_rate(returns: &[f64], es: &[f64]) -> Result<f64> {
    if returns.len() != es.len() || returns.is_empty() {
        return Err(Error::invalid("returns and ES forecasts must be aligned and non-empty"));
    }
    if let Some(t) = es.iter().position(|e| !(e.is_finite() && *e < 0.0)) {
        return Err(Error::Domain(format!("ES forecast on day {t} is not a finite negative number")));
    }
    Ok(returns.iter().zip(es).filter(|(r, e)| r < e).count() as f64 / returns.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McsConfig {
    pub level: f64,
    pub bootstrap: usize,
    /// Defaults to `ceil(m^(1/3))`.
    pub block_len: Option<usize>,
    pub seed: u64,
}

impl Default for McsConfig {
    fn default() -> Self {
        Self {
            level: 0.90,
            bootstrap: 5000,
            block_len: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsResult {
    /// Indices of the surviving models.
    pub included: Vec<usize>,
    /// MCS p-value per model.
    pub p_values: Vec<f64>,
    /// Models in the order they were eliminated.
    pub eliminated: Vec<usize>,
}

/// Model confidence set with the range (R) statistic and a moving-block bootstrap.
///
/// `losses[i][t]` is the loss of model `i` on day `t`.
pub fn mcs(losses: &[Vec<f64>], config: &McsConfig) -> Result<McsResult> {
    let k = losses.len();
    if k < 2 {
        return Err(Error::invalid("MCS needs at least two models"));
    }
    let m = losses[0].len();
    if m < 2 || losses.iter().any(|l| l.len() != m) {
        return Err(Error::invalid("every model needs the same number (>= 2) of loss days"));
    }
    if config.bootstrap < 100 {
        return Err(Error::invalid(format!("bootstrap replicates {} < 100", config.bootstrap)));
    }
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(Error::invalid("MCS level must be in (0, 1)"));
    }
    let l = config
        .block_len
        .unwrap_or_else(|| (m as f64).cbrt().ceil() as usize)
        .clamp(1, m);
    let mf = m as f64;
    let means: Vec<f64> = losses.iter().map(|x| x.iter().sum::<f64>() / mf).collect();
    let prefix: Vec<Vec<f64>> = losses
        .iter()
        .map(|x| {
            let mut p = Vec::with_capacity(m + 1);
            p.push(0.0);
            let mut acc = 0.0;
            for v in x {
                acc += v;
                p.push(acc);
            }
            p
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_starts = m - l + 1;
    // boot[b][i]: bootstrap mean loss of model i.
    let mut boot = vec![vec![0.0; k]; config.bootstrap];
    for row in boot.iter_mut() {
        let mut filled = 0;
        while filled < m {
            let s = rng.random_range(0..n_starts);
            let len = l.min(m - filled);
            for (i, p) in prefix.iter().enumerate() {
                row[i] += p[s + len] - p[s];
            }
            filled += len;
        }
        row.iter_mut().for_each(|v| *v /= mf);
    }

    let mut alive: Vec<usize> = (0..k).collect();
    let mut p_values = vec![1.0; k];
    let mut eliminated = Vec::new();
    let mut running = 0.0f64;
    while alive.len() > 1 {
        let n = alive.len();
        let mut t = vec![vec![0.0; n]; n];
        let mut sd = vec![vec![0.0; n]; n];
        for a in 0..n {
            for c in 0..n {
                if a == c {
                    continue;
                }
                let (i, j) = (alive[a], alive[c]);
                let d = means[i] - means[j];
                let var = boot
                    .iter()
                    .map(|b| (b[i] - b[j] - d).powi(2))
                    .sum::<f64>()
                    / config.bootstrap as f64;
                sd[a][c] = var.sqrt();
                t[a][c] = if var > 0.0 {
                    d / var.sqrt()
                } else if d == 0.0 {
                    0.0
                } else {
                    d.signum() * f64::INFINITY
                };
            }
        }
        let t_r = t.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let exceed = boot
            .iter()
            .filter(|b| {
                let mut stat = 0.0f64;
                for a in 0..n {
                    for c in 0..n {
                        if a == c || sd[a][c] == 0.0 {
                            continue;
                        }
                        let (i, j) = (alive[a], alive[c]);
                        let z = (b[i] - b[j] - (means[i] - means[j])) / sd[a][c];
                        stat = stat.max(z.abs());
                    }
                }
                stat >= t_r
            })
            .count();
        let p = exceed as f64 / config.bootstrap as f64;
        running = running.max(p);
        if p >= 1.0 - config.level {
            break;
        }
        let worst = (0..n)
            .max_by(|&a, &c| {
                let ta = t[a].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let tc = t[c].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                ta.total_cmp(&tc).then(means[alive[a]].total_cmp(&means[alive[c]]))
            })
            .expect("at least two models");
        let model = alive.remove(worst);
        p_values[model] = running;
        eliminated.push(model);
    }
    // Survivors share the p-value of the final, non-rejected test; a lone survivor gets 1.
    let survivor_p = if alive.len() == 1 { 1.0 } else { running };
    for &i in &alive {
        p_values[i] = survivor_p;
    }
    Ok(McsResult {
        included: alive,
        p_values,
        eliminated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn hits(v: &[u8], alpha: f64) -> HitSeries {
        HitSeries::from_hits(v.iter().map(|x| *x == 1).collect(), alpha).unwrap()
    }

    fn hits_with(x: usize, m: usize) -> HitSeries {
        let mut v = vec![0u8; m];
        v[..x].iter_mut().for_each(|h| *h = 1);
        hits(&v, 0.01)
    }

    #[test]
    fn vrate_bounds() {
        assert_eq!(vrate(&hits_with(0, 10)), 0.0);
        assert_eq!(vrate(&hits_with(10, 10)), 1.0);
        assert!((vrate(&hits_with(21, 2113)) * 100.0 - 0.994).abs() < 5e-4);
    }

    #[test]
    fn kupiec_examples() {
        let exact = kupiec_uc(&hits_with(10, 1000));
        assert!(exact.statistic.abs() < 1e-12 && (exact.p_value - 1.0).abs() < 1e-12);
        let r = kupiec_uc(&hits_with(5, 250));
        assert!((r.statistic - 1.956_809_788).abs() < 1e-6);
        assert!((r.p_value - 0.161_854_917).abs() < 1e-6);
        let z = kupiec_uc(&hits_with(0, 250));
        assert!((z.statistic + 2.0 * 250.0 * 0.99f64.ln()).abs() < 1e-12);
        assert!((z.statistic - 5.025_167_927).abs() < 1e-6);
    }

    #[test]
    fn alternating_hits_reject_independence() {
        let v: Vec<u8> = (0..200).map(|i| (i % 2) as u8).collect();
        let h = hits(&v, 0.01);
        assert!(christoffersen_ind(&h).unwrap() > 100.0);
        assert!(christoffersen_cc(&h).unwrap().reject_at_5pct);
        assert_eq!(christoffersen_ind(&hits_with(0, 100)).unwrap(), 0.0);
    }

    #[test]
    fn dq_detects_persistent_hits() {
        let v: Vec<u8> = (0..500).map(|i| u8::from((i / 25) % 2 == 0)).collect();
        let var: Vec<f64> = (0..500).map(|i| -2.0 - 0.3 * ((i as f64) * 0.37).sin()).collect();
        let r = dq_test(&hits(&v, 0.01), &var, 1).unwrap();
        assert!(r.reject_at_5pct && r.dof == 3);
    }

    #[test]
    fn dq_constant_var_is_singular() {
        let v: Vec<u8> = (0..300).map(|i| u8::from(i % 37 == 0)).collect();
        let err = dq_test(&hits(&v, 0.01), &vec![-2.33; 300], 1).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }

    #[test]
    fn quantile_regression_recovers_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..2000).map(|_| rng.random_range(0.5..2.0)).collect();
        let y: Vec<f64> = x.iter().map(|s| 0.3 + 2.0 * s + rng.sample::<f64, _>(StandardNormal) * 0.1).collect();
        let (a, b) = quantile_regression(&y, &x, 0.5).unwrap();
        assert!((a - 0.3).abs() < 0.03 && (b - 2.0).abs() < 0.03, "{a} {b}");
    }

    #[test]
    fn vqr_null_point_and_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s: Vec<f64> = (0..3000).map(|_| rng.random_range(0.5..2.0)).collect();
        let r: Vec<f64> = s.iter().map(|v| v * rng.sample::<f64, _>(StandardNormal)).collect();
        let z = stats::normal_quantile(0.01);
        let var: Vec<f64> = s.iter().map(|v| v * z).collect();
        // Use the fitted quantile line itself as the forecast.
        let (a, b) = quantile_regression(&r, &var, 0.01).unwrap();
        let fitted: Vec<f64> = var.iter().map(|v| a + b * v).collect();
        let t = vqr_test(&r, &fitted, 0.01).unwrap();
        assert!(t.statistic < 1e-3, "{}", t.statistic);
        let shifted: Vec<f64> = var.iter().map(|v| v - 1.0).collect();
        assert!(vqr_test(&r, &shifted, 0.01).unwrap().reject_at_5pct);
    }

    #[test]
    fn es_rate_cases() {
        assert_eq!(es_rate(&[1.0, 2.0], &[-1.0, -1.0]).unwrap(), 0.0);
        assert_eq!(es_rate(&[-3.0, 2.0], &[-1.0, -1.0]).unwrap(), 0.5);
        assert!(es_rate(&[1.0], &[f64::INFINITY]).is_err());
    }

    #[test]
    fn mcs_identical_models() {
        let l: Vec<f64> = (0..300).map(|i| ((i * 7919) % 113) as f64 / 10.0).collect();
        let res = mcs(&[l.clone(), l], &McsConfig { bootstrap: 1000, ..Default::default() }).unwrap();
        assert_eq!(res.included, vec![0, 1]);
        assert_eq!(res.p_values, vec![1.0, 1.0]);
    }

    #[test]
    fn mcs_dominated_model_removed() {
        let l: Vec<f64> = (0..300).map(|i| ((i * 7919) % 113) as f64 / 10.0).collect();
        let worse: Vec<f64> = l.iter().map(|v| v + 10.0).collect();
        let res = mcs(&[worse, l], &McsConfig { bootstrap: 1000, ..Default::default() }).unwrap();
        assert_eq!(res.included, vec![1]);
        assert_eq!(res.eliminated, vec![0]);
        assert_eq!(res.p_values[0], 0.0);
        assert!(mcs(&[vec![1.0; 5], vec![2.0; 5]], &McsConfig { bootstrap: 50, ..Default::default() }).is_err());
    }

    #[test]
    fn mcs_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..400).map(|_| i as f64 * 0.08 + rng.random::<f64>()).collect())
            .collect();
        let cfg = McsConfig { bootstrap: 500, seed: 4, ..Default::default() };
        let a = mcs(&base, &cfg).unwrap();
        let perm = [2, 0, 3, 1];
        let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| base[i].clone()).collect();
        let b = mcs(&shuffled, &cfg).unwrap();
        let mut mapped: Vec<usize> = b.included.iter().map(|&i| perm[i]).collect();
        mapped.sort();
        assert_eq!(a.included, mapped);
        for (pos, &orig) in perm.iter().enumerate() {
            assert!((a.p_values[orig] - b.p_values[pos]).abs() < 1e-12);
        }
    }
}
