//! Monte Carlo oracles for estimators, backtests and the sampler.

use escare::backtest::{christoffersen_cc, dq_test, kupiec_uc, vqr_test, HitSeries};
use escare::data::ReturnSeries;
use escare::forecast::{rolling_forecast, Estimator, FitConfig, RollingConfig};
use escare::mcmc::{fit_mcmc, McmcConfig};
use escare::ml::{care_grid_search, default_care_grid, fit_expectile_regression, fit_ml, ExpectileForm, MlConfig};
use escare::models::{Family, InitRule, ModelSpec};
use escare::sim::{simulate, true_risk, DgpSpec, SimModel};
use escare::stats::{expectile, mean, normal_quantile, variance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

#[test]
fn linear_expectile_regression_on_constant_expectile_data() {
    let tau = 0.05;
    let (mut beta2, mut level_err) = (Vec::new(), Vec::new());
    for seed in 0..8 {
        let r = gaussian(1900, seed);
        let driver: Vec<f64> = r.iter().map(|x| x.abs()).collect();
        let target = expectile(&r, tau);
        let fit = fit_expectile_regression(&r, &driver, tau, ExpectileForm::Linear, InitRule::default(), 0.01).unwrap();
        let (b1, b2, b3) = (fit.betas[0], fit.betas[1], fit.betas[2]);
        // With beta2 = 0, beta1 and beta3 are only jointly identified, so compare the implied level.
        let mut mu = target;
        let mut tail = Vec::new();
        for t in 1..r.len() {
            mu = b1 + b2 * driver[t - 1] + b3 * mu;
            if t > 200 {
                tail.push(mu);
            }
        }
        beta2.push(b2);
        level_err.push(mean(&tail) - target);

        let constant = fit_expectile_regression(&r, &driver, tau, ExpectileForm::Constant, InitRule::default(), 0.01).unwrap();
        assert!((constant.betas[0] - target).abs() < 1e-4);
    }
    assert!(mean(&beta2).abs() < 0.05, "beta2 bias {}", mean(&beta2));
    assert!(mean(&level_err).abs() < 0.05, "level bias {}", mean(&level_err));
}

#[test]
fn threshold_regimes_agree_on_symmetric_data() {
    let tau = 0.002;
    let reps = 12;
    let diffs: Vec<f64> = (0..reps)
        .map(|seed| {
            let d = simulate(&DgpSpec::new(SimModel::SimModel1, 1900, 500 + seed)).unwrap();
            let driver: Vec<f64> = d.returns.iter().map(|x| x.abs()).collect();
            let fit = fit_expectile_regression(
                &d.returns,
                &driver,
                tau,
                ExpectileForm::Threshold { threshold: 0.0 },
                InitRule::default(),
                0.01,
            )
            .unwrap();
            fit.betas[2] - fit.betas[5]
        })
        .collect();
    let se = (variance(&diffs) / reps as f64).sqrt();
    assert!(mean(&diffs).abs() <= 2.0 * se, "mean diff {} se {se}", mean(&diffs));
}

#[test]
fn care_grid_recovers_gaussian_level() {
    let r = gaussian(5000, 11);
    let fit = care_grid_search(&r, 0.01, &default_care_grid(0.01, 50), InitRule::default()).unwrap();
    assert!((fit.tau - 0.00145).abs() <= 0.001, "tau {}", fit.tau);
    assert!((fit.in_sample_vrate - 0.01).abs() < 0.003);
}

fn sizes(m: usize, trials: u64, seed: u64) -> [f64; 4] {
    let alpha = 0.01;
    let mut rejections = [0usize; 4];
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + t);
        let hits: Vec<bool> = (0..m).map(|_| rng.random::<f64>() < alpha).collect();
        let mut lv = 0.0f64;
        let var: Vec<f64> = (0..m)
            .map(|_| {
                lv = 0.95 * lv + 0.2 * rng.sample::<f64, _>(StandardNormal);
                -2.326 * lv.exp()
            })
            .collect();
        let h = HitSeries::from_hits(hits, alpha).unwrap();
        let flags = [
            kupiec_uc(&h).reject_at_5pct,
            christoffersen_cc(&h).unwrap().reject_at_5pct,
            dq_test(&h, &var, 1).map(|r| r.reject_at_5pct).unwrap_or(false),
            dq_test(&h, &var, 4).map(|r| r.reject_at_5pct).unwrap_or(false),
        ];
        for (k, f) in flags.iter().enumerate() {
            rejections[k] += usize::from(*f);
        }
    }
    rejections.map(|c| c as f64 / trials as f64)
}

#[test]
fn uc_size_at_m_1000() {
    let [uc, ..] = sizes(1000, 1000, 9_000);
    assert!((0.03..=0.07).contains(&uc), "uc size {uc}");
}

// The standard CC and DQ tests are distorted with about ten expected hits:
// roughly 2.8% and 8.5% over 20,000 trials.
#[test]
#[ignore = "finite-sample size distortion of CC and DQ1 at m = 1000"]
fn cc_and_dq1_sizes_at_m_1000() {
    let [_, cc, dq1, _] = sizes(1000, 1000, 9_000);
    for (name, s) in [("cc", cc), ("dq1", dq1)] {
        assert!((0.03..=0.07).contains(&s), "{name} size {s}");
    }
}

#[test]
fn vqr_size_and_power() {
    let alpha = 0.01;
    let z = normal_quantile(alpha);
    let m = 10_000;
    let scale: Vec<f64> = (0..m).map(|i| 1.0 + 0.5 * ((i as f64) / 40.0).sin().abs()).collect();
    let var: Vec<f64> = scale.iter().map(|s| z * s).collect();
    let shifted: Vec<f64> = var.iter().map(|v| v - 1.0).collect();
    let (mut keep, mut reject_shifted) = (0, 0);
    let trials = 500;
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(30_000 + t);
        let r: Vec<f64> = scale.iter().map(|s| s * rng.sample::<f64, _>(StandardNormal)).collect();
        keep += usize::from(!vqr_test(&r, &var, alpha).unwrap().reject_at_5pct);
        if t < 20 {
            reject_shifted += usize::from(vqr_test(&r, &shifted, alpha).unwrap().reject_at_5pct);
        }
    }
    let keep_rate = keep as f64 / trials as f64;
    assert!((0.92..=0.98).contains(&keep_rate), "non-rejection rate {keep_rate}");
    assert_eq!(reject_shifted, 20);
}

#[test]
fn rolling_vrate_in_band() {
    let spec = ModelSpec::new(Family::ReEsCare, 0.01).with_measure("x");
    let cfg = RollingConfig {
        window: 1000,
        refit_every: 50,
        estimator: Estimator::Ml,
        fit: FitConfig {
            ml: MlConfig { n_random_starts: 1000, ..Default::default() },
            ..Default::default()
        },
        seed: 0,
    };
    let (mut hits, mut total) = (0usize, 0usize);
    for seed in 0..5 {
        let d = simulate(&DgpSpec::new(SimModel::SimModel1, 1200, 700 + seed)).unwrap();
        let series = ReturnSeries::from_returns(d.returns.clone())
            .unwrap()
            .with_measure("x", d.measures.iter().copied().map(Some).collect())
            .unwrap();
        let out = rolling_forecast(&spec, &series, &cfg).unwrap();
        assert_eq!(out.records.len(), 200);
        assert!(out.failures.is_empty());
        hits += out
            .records
            .iter()
            .zip(&d.returns[1000..])
            .filter(|(f, r)| **r < f.var)
            .count();
        total += out.records.len();
    }
    let rate = hits as f64 / total as f64;
    assert!((0.004..=0.020).contains(&rate), "pooled VRate {rate}");
}

#[test]
fn ml_is_seeded_and_improves_on_starts() {
    let d = simulate(&DgpSpec::new(SimModel::SimModel1, 1000, 3)).unwrap();
    let spec = ModelSpec::new(Family::ReEsCare, 0.01).with_measure("x");
    let cfg = MlConfig { n_random_starts: 500, seed: 9, ..Default::default() };
    let a = fit_ml(&spec, &d.returns, Some(&d.measures), &cfg).unwrap();
    let b = fit_ml(&spec, &d.returns, Some(&d.measures), &cfg).unwrap();
    assert_eq!(a.params, b.params);
    assert!(a.loglik >= a.start_loglik);
    assert!(a.params.in_region(0.01));
}

#[test]
fn sampler_stays_in_region() {
    let d = simulate(&DgpSpec::new(SimModel::SimModel1, 800, 4)).unwrap();
    let spec = ModelSpec::new(Family::ReEsCare, 0.01).with_measure("x");
    let ml = fit_ml(&spec, &d.returns, Some(&d.measures), &MlConfig { n_random_starts: 500, ..Default::default() }).unwrap();
    let cfg = McmcConfig {
        epoch_length: 1500,
        epoch_discard: 300,
        final_epoch: 1500,
        final_discard: 300,
        max_epochs: 4,
        seed: 2,
        ..Default::default()
    };
    let fit = fit_mcmc(&spec, &d.returns, Some(&d.measures), &ml.params, &cfg, InitRule::default()).unwrap();
    assert_eq!(fit.samples.len(), 1200);
    let mut lik = escare::objective::Likelihood::new(&spec, &d.returns, Some(&d.measures), InitRule::default()).unwrap();
    for s in &fit.samples {
        let p = escare::models::ParamVector::new(Family::ReEsCare, s.clone()).unwrap();
        assert!(p.in_region(0.01));
        assert!(lik.loglik(s).is_finite());
    }
    let truth = true_risk(&[d.sqrt_h_next], 0.01).unwrap();
    let (var, _) = escare::forecast::forecast_from(&spec, &fit.params, &d.returns, Some(&d.measures), InitRule::default()).unwrap();
    assert!((var - truth.var[0]).abs() < 0.5);
}
